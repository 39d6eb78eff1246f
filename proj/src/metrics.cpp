#include "aip/metrics.hpp"

#include "aip/errors.hpp"
#include "aip/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace aip {

std::uint64_t layer_params(const LayerSpec& l) {
  const auto in = static_cast<std::uint64_t>(l.in_channels);
  const auto out = static_cast<std::uint64_t>(l.out_channels);
  switch (l.kind) {
    case LayerKind::Conv: return static_cast<std::uint64_t>(l.kernel) * l.kernel * in * out + out;
    case LayerKind::BatchNorm: return 2 * out;
    case LayerKind::Linear: return in * out + out;
    default: return 0;
  }
}

std::uint64_t count_params(const NetworkDescriptor& desc) {
  std::uint64_t total = 0;
  for (const LayerSpec& l : desc.layers) total += layer_params(l);
  return total;
}

FlopCount count_flops(const NetworkDescriptor& desc, const Shape& input) {
  std::vector<Shape> shapes;
  if (auto issue = check_shapes(desc, input, &shapes))
    throw ShapeMismatch("layer " + std::to_string(issue->layer) + " " + issue->message);
  FlopCount count;
  for (int i = 0; i < desc.size(); ++i) {
    const LayerSpec& l = desc.layers[i];
    std::uint64_t macs = 0;
    if (l.kind == LayerKind::Conv) {
      macs = static_cast<std::uint64_t>(l.kernel) * l.kernel * l.in_channels * l.out_channels *
             static_cast<std::uint64_t>(shapes[i].spatial());
    } else if (l.kind == LayerKind::Linear) {
      macs = static_cast<std::uint64_t>(l.in_channels) * l.out_channels;
    }
    count.macs += macs;
    count.flops += 2 * macs;
  }
  return count;
}

std::uint64_t removed_parameters(const NetworkDescriptor& original, const PrunePlan& p) {
  std::uint64_t removed = 0;
  for (int i = 0; i < original.size(); ++i) {
    const LayerSpec& l = original.layers[i];
    const std::uint64_t out = l.out_channels;
    const std::uint64_t in = l.in_channels;
    const std::uint64_t out2 = p.kept_out[i] ? p.kept_out[i]->size() : out;
    const std::uint64_t in2 = p.kept_in[i] ? p.kept_in[i]->size() : in;
    switch (l.kind) {
      case LayerKind::Conv:
        removed += static_cast<std::uint64_t>(l.kernel) * l.kernel * (in * out - in2 * out2) + (out - out2);
        break;
      case LayerKind::BatchNorm:
        removed += 2 * (out - out2);
        break;
      case LayerKind::Linear:
        removed += (in - in2) * out;
        break;
      default:
        break;
    }
  }
  return removed;
}

std::vector<LayerSurvival> survival(const NetworkDescriptor& original, const NetworkDescriptor& pruned) {
  if (original.size() != pruned.size()) throw ShapeMismatch("descriptors have different topology");
  std::vector<LayerSurvival> out;
  for (int l : original.prunable)
    out.push_back({l, original.layers[l].name, original.layers[l].out_channels, pruned.layers[l].out_channels});
  return out;
}

MetricsReport measure(const NetworkDescriptor& desc, std::string label) {
  MetricsReport r;
  r.label = std::move(label);
  r.params = count_params(desc);
  r.flops = count_flops(desc);
  return r;
}

Drops compare(const MetricsReport& base, const MetricsReport& pruned) {
  if (base.params == 0 || base.flops.flops == 0 || base.flops.macs == 0)
    throw std::invalid_argument("cannot compute drop against a zero baseline");
  auto drop = [](double b, double p) { return 100.0 * (b - p) / b; };
  return {drop(static_cast<double>(base.params), static_cast<double>(pruned.params)),
          drop(static_cast<double>(base.flops.flops), static_cast<double>(pruned.flops.flops)),
          drop(static_cast<double>(base.flops.macs), static_cast<double>(pruned.flops.macs))};
}

void attach_drops(const MetricsReport& base, MetricsReport& pruned) {
  const Drops d = compare(base, pruned);
  pruned.params_drop_pct = d.params_pct;
  pruned.flops_drop_pct = d.flops_pct;
}

std::string format_pct(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

namespace {

std::string millions(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(v) / 1e6);
  return buf;
}

}  // namespace

std::string serialize(const MetricsReport& r) {
  std::ostringstream os;
  os << "label: " << r.label << "\n";
  os << "params: " << r.params << "\n";
  os << "flops: " << r.flops.flops << "\n";
  os << "macs: " << r.flops.macs << "\n";
  os << "params_drop_pct: " << format_pct(r.params_drop_pct) << "\n";
  os << "flops_drop_pct: " << format_pct(r.flops_drop_pct) << "\n";
  if (r.accuracy) os << "accuracy: " << format_pct(100.0 * *r.accuracy) << "\n";
  for (const auto& s : r.per_layer)
    os << "layer: " << s.layer << " " << s.name << " " << s.original << " " << s.kept << "\n";
  return os.str();
}

std::string comparison_table(const MetricsReport& base, const std::vector<MetricsReport>& pruned) {
  std::ostringstream os;
  auto acc = [](const std::optional<double>& a) { return a ? format_pct(100.0 * *a) : std::string("-"); };
  os << "Method | Baseline Acc/% | Pruned Acc/% | Acc.drop/% | Parameters/M | Parameters.drop/% | FLOPs/M | "
        "FLOPs.drop/%\n";
  os << (base.label.empty() ? "Baseline" : base.label) << " | " << acc(base.accuracy) << " | - | - | "
     << millions(base.params) << " | - | " << millions(base.flops.macs) << " | -\n";
  for (const MetricsReport& r : pruned) {
    const Drops d = compare(base, r);
    std::string drop = "-";
    if (base.accuracy && r.accuracy) drop = format_pct(100.0 * (*base.accuracy - *r.accuracy));
    os << r.label << " | " << acc(base.accuracy) << " | " << acc(r.accuracy) << " | " << drop << " | "
       << millions(r.params) << " | " << format_pct(d.params_pct) << " | " << millions(r.flops.macs) << " | "
       << format_pct(d.macs_pct) << "\n";
  }
  return os.str();
}

void export_scores(const std::map<int, Scores>& scores, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "layer,channel,score\n";
  char buf[64];
  for (const auto& [layer, s] : scores) {
    for (Eigen::Index c = 0; c < s.values.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", s.values[c]);
      os << layer << "," << c << "," << buf << "\n";
    }
  }
  write_atomic(path, os.str());
}

std::map<int, Eigen::VectorXd> import_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifact(path.string());
  std::string line;
  std::getline(in, line);
  if (line != "layer,channel,score") throw std::invalid_argument("unexpected score CSV header in " + path.string());
  std::map<int, std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int layer = 0, channel = 0;
    double score = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf", &layer, &channel, &score) != 3)
      throw std::invalid_argument("malformed score row '" + line + "'");
    auto& v = rows[layer];
    if (channel != static_cast<int>(v.size())) throw std::invalid_argument("score rows out of order");
    v.push_back(score);
  }
  std::map<int, Eigen::VectorXd> out;
  for (auto& [layer, v] : rows) out[layer] = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return out;
}

}  // namespace aip
