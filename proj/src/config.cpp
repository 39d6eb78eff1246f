#include "aip/config.hpp"

#include "aip/errors.hpp"
#include "aip/io.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace aip {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError("key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

LossComponents parse_loss_components(const std::string& text) {
  LossComponents c{false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "at") c.at = true;
    else if (item == "kd") c.kd = true;
    else if (item == "adv") c.adv = true;
    else if (!item.empty()) throw ConfigError("key 'loss_components': unknown component '" + item + "'");
  }
  if (!c.at && !c.kd && !c.adv) throw ConfigError("key 'loss_components': at least one component required");
  return c;
}

std::string to_string(const LossComponents& c) {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += ",";
    s += name;
  };
  add(c.at, "at");
  add(c.kd, "kd");
  add(c.adv, "adv");
  return s;
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("key '" + key + "': " + what);
  };
  require(!c.name.empty() && c.name.find('/') == std::string::npos, "name", "must be a plain non-empty name");
  require(c.arch == "vgg_small" || c.arch == "vgg16" || c.arch == "resnet_basic" || c.arch == "inception_small",
          "arch", "unknown architecture '" + c.arch + "'");
  require(c.dataset == "synthetic" || c.dataset == "cifar10" || c.dataset == "cifar100", "dataset",
          "unknown dataset '" + c.dataset + "'");
  require(c.dataset == "synthetic" || !c.data_dir.empty(), "data_dir",
          "required for " + c.dataset + " (or set $" + std::string(kDataDirEnv) + ")");
  require(c.num_classes >= 2, "num_classes", "must be at least 2");
  require(c.k > 0.0 && c.k < 1.0, "k", "must lie in the open interval (0, 1)");
  require(c.s_p >= 1, "s_p", "must be at least 1");
  require(c.N >= 1, "N", "must be at least 1");
  require(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha", "must lie in [0, 1]");
  require(c.t_emp > 0.0, "t_emp", "must be positive");
  require(c.lr > 0.0, "lr", "must be positive");
  require(c.prune_lr > 0.0, "prune_lr", "must be positive");
  require(c.momentum >= 0.0 && c.momentum < 1.0, "momentum", "must lie in [0, 1)");
  require(c.weight_decay >= 0.0, "weight_decay", "must be non-negative");
  require(c.batch_size >= 1, "batch_size", "must be at least 1");
  require(c.baseline_epochs >= 1, "baseline_epochs", "must be at least 1");
  require(c.retrain_cap >= 1.0, "retrain_cap", "must be at least 1");
  require(c.image_size >= 4, "image_size", "must be at least 4");
  require(c.width >= 0, "width", "must be non-negative");
  require(c.train_samples >= 1, "train_samples", "must be at least 1");
  require(c.test_samples >= 1, "test_samples", "must be at least 1");
  require(c.noise >= 0.0, "noise", "must be non-negative");
  if (c.dataset == "cifar10") require(c.num_classes == 10, "num_classes", "cifar10 has 10 classes");
  if (c.dataset == "cifar100") require(c.num_classes == 100, "num_classes", "cifar100 has 100 classes");
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"name", [&](auto&, auto& v) { c.name = v; }},
      {"arch", [&](auto&, auto& v) { c.arch = v; }},
      {"dataset", [&](auto&, auto& v) { c.dataset = v; }},
      {"data_dir", [&](auto&, auto& v) { c.data_dir = v; }},
      {"num_classes", [&](auto& k, auto& v) { c.num_classes = parse_number<int>(k, v); }},
      {"k", [&](auto& k, auto& v) { c.k = parse_number<double>(k, v); }},
      {"s_p", [&](auto& k, auto& v) { c.s_p = parse_number<int>(k, v); }},
      {"N", [&](auto& k, auto& v) { c.N = parse_number<int>(k, v); }},
      {"alpha", [&](auto& k, auto& v) { c.alpha = parse_number<double>(k, v); }},
      {"t_emp", [&](auto& k, auto& v) { c.t_emp = parse_number<double>(k, v); }},
      {"lr", [&](auto& k, auto& v) { c.lr = parse_number<double>(k, v); }},
      {"prune_lr", [&](auto& k, auto& v) { c.prune_lr = parse_number<double>(k, v); }},
      {"momentum", [&](auto& k, auto& v) { c.momentum = parse_number<double>(k, v); }},
      {"weight_decay", [&](auto& k, auto& v) { c.weight_decay = parse_number<double>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.batch_size = parse_number<int>(k, v); }},
      {"baseline_epochs", [&](auto& k, auto& v) { c.baseline_epochs = parse_number<int>(k, v); }},
      {"retrain_cap", [&](auto& k, auto& v) { c.retrain_cap = parse_number<double>(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"loss_components", [&](auto&, auto& v) { c.loss_components = parse_loss_components(v); }},
      {"out_dir", [&](auto&, auto& v) { c.out_dir = v; }},
      {"image_size", [&](auto& k, auto& v) { c.image_size = parse_number<int>(k, v); }},
      {"width", [&](auto& k, auto& v) { c.width = parse_number<int>(k, v); }},
      {"depth", [&](auto& k, auto& v) { c.depth = parse_number<int>(k, v); }},
      {"train_samples", [&](auto& k, auto& v) { c.train_samples = parse_number<int>(k, v); }},
      {"test_samples", [&](auto& k, auto& v) { c.test_samples = parse_number<int>(k, v); }},
      {"augment", [&](auto& k, auto& v) { c.augment = parse_bool(k, v); }},
      {"noise", [&](auto& k, auto& v) { c.noise = parse_number<double>(k, v); }},
  };

  std::set<std::string> seen;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("key '" + key + "' given twice");
    it->second(key, value);
  }
  if (c.data_dir.empty()) {
    if (const char* env = std::getenv(kDataDirEnv)) c.data_dir = env;
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path);
  return parse_config(read_text(path));
}

std::string serialize(const RunConfig& c) {
  std::ostringstream os;
  os << "name = " << c.name << "\n";
  os << "arch = " << c.arch << "\n";
  os << "dataset = " << c.dataset << "\n";
  os << "data_dir = " << c.data_dir << "\n";
  os << "num_classes = " << c.num_classes << "\n";
  os << "k = " << fmt_double(c.k) << "\n";
  os << "s_p = " << c.s_p << "\n";
  os << "N = " << c.N << "\n";
  os << "alpha = " << fmt_double(c.alpha) << "\n";
  os << "t_emp = " << fmt_double(c.t_emp) << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "prune_lr = " << fmt_double(c.prune_lr) << "\n";
  os << "momentum = " << fmt_double(c.momentum) << "\n";
  os << "weight_decay = " << fmt_double(c.weight_decay) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "baseline_epochs = " << c.baseline_epochs << "\n";
  os << "retrain_cap = " << fmt_double(c.retrain_cap) << "\n";
  os << "seed = " << c.seed << "\n";
  if (c.loss_components) os << "loss_components = " << to_string(*c.loss_components) << "\n";
  os << "out_dir = " << c.out_dir << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "width = " << c.width << "\n";
  os << "depth = " << c.depth << "\n";
  os << "train_samples = " << c.train_samples << "\n";
  os << "test_samples = " << c.test_samples << "\n";
  os << "augment = " << (c.augment ? "true" : "false") << "\n";
  os << "noise = " << fmt_double(c.noise) << "\n";
  return os.str();
}

LossComponents prune_losses(const RunConfig& cfg) { return cfg.loss_components.value_or(kPruneLosses); }
LossComponents retrain_losses(const RunConfig& cfg) { return cfg.loss_components.value_or(kRetrainLosses); }

}  // namespace aip
