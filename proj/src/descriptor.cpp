#include "aip/descriptor.hpp"

#include "aip/errors.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace aip {

std::vector<int> NetworkDescriptor::consumers(int layer) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    const auto& in = layers[i].inputs;
    if (std::find(in.begin(), in.end(), layer) != in.end()) out.push_back(i);
  }
  return out;
}

bool NetworkDescriptor::is_prunable(int layer) const {
  return std::binary_search(prunable.begin(), prunable.end(), layer);
}

namespace {

std::string where(const LayerSpec& l) { return "'" + l.name + "': "; }

}  // namespace

std::optional<ShapeIssue> check_shapes(const NetworkDescriptor& desc, const Shape& input,
                                       std::vector<Shape>* shapes) {
  std::vector<Shape> out(desc.layers.size());
  auto producer = [&](int idx) { return idx < 0 ? input : out[idx]; };

  if (desc.layers.empty()) return ShapeIssue{-1, "descriptor has no layers"};
  for (int i = 0; i < desc.size(); ++i) {
    const LayerSpec& l = desc.layers[i];
    auto fail = [&](const std::string& msg) { return ShapeIssue{i, where(l) + msg}; };
    if (l.inputs.empty()) return fail("no inputs");
    for (int p : l.inputs) {
      if (p < -1 || p >= i) return fail("input index " + std::to_string(p) + " not a predecessor");
    }
    if (l.in_channels <= 0 || l.out_channels <= 0) return fail("non-positive channel count");
    const bool unary = l.kind != LayerKind::Add && l.kind != LayerKind::Concat;
    if (unary && l.inputs.size() != 1) return fail("expects exactly one input");
    const Shape in = producer(l.inputs.front());
    if (unary && in.channels != l.in_channels) {
      return fail("in_channels " + std::to_string(l.in_channels) + " but producer has " +
                  std::to_string(in.channels));
    }

    switch (l.kind) {
      case LayerKind::Conv: {
        if (l.kernel < 1 || l.stride < 1 || l.padding < 0) return fail("bad conv geometry");
        const int h = (in.height + 2 * l.padding - l.kernel) / l.stride + 1;
        const int w = (in.width + 2 * l.padding - l.kernel) / l.stride + 1;
        if (in.height + 2 * l.padding < l.kernel || in.width + 2 * l.padding < l.kernel || h < 1 || w < 1)
          return fail("spatial size " + to_string(in) + " too small for kernel");
        out[i] = {l.out_channels, h, w};
        break;
      }
      case LayerKind::BatchNorm:
      case LayerKind::Activation:
        if (l.out_channels != l.in_channels) return fail("channel-wise layer changes channel count");
        out[i] = in;
        break;
      case LayerKind::Pool: {
        if (l.out_channels != l.in_channels) return fail("pool changes channel count");
        if (l.pool == PoolType::GlobalAverage) {
          out[i] = {in.channels, 1, 1};
          break;
        }
        if (l.kernel < 1 || l.stride < 1) return fail("bad pool geometry");
        if (in.height + 2 * l.padding < l.kernel || in.width + 2 * l.padding < l.kernel)
          return fail("spatial size " + to_string(in) + " too small for pooling");
        out[i] = {in.channels, (in.height + 2 * l.padding - l.kernel) / l.stride + 1,
                  (in.width + 2 * l.padding - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::Linear:
        if (in.height != 1 || in.width != 1)
          return fail("linear layer needs 1x1 spatial input, got " + to_string(in));
        out[i] = {l.out_channels, 1, 1};
        break;
      case LayerKind::Add: {
        if (l.inputs.size() != 2) return fail("add-junction expects two inputs");
        const Shape a = producer(l.inputs[0]);
        const Shape b = producer(l.inputs[1]);
        if (!(a == b)) return fail("add-junction inputs differ: " + to_string(a) + " vs " + to_string(b));
        if (l.in_channels != a.channels || l.out_channels != a.channels)
          return fail("add-junction channel count mismatch");
        out[i] = a;
        break;
      }
      case LayerKind::Concat: {
        if (l.inputs.size() < 2) return fail("concat-junction expects two or more inputs");
        int total = 0;
        for (int p : l.inputs) {
          const Shape s = producer(p);
          if (s.height != in.height || s.width != in.width) return fail("concat inputs differ spatially");
          total += s.channels;
        }
        if (l.in_channels != total || l.out_channels != total)
          return fail("concat channel count " + std::to_string(l.out_channels) + " but inputs sum to " +
                      std::to_string(total));
        out[i] = {total, in.height, in.width};
        break;
      }
    }
  }
  const LayerSpec& last = desc.layers.back();
  if (last.kind != LayerKind::Linear || last.out_channels != desc.num_classes)
    return ShapeIssue{desc.output_layer(), "final layer must be a linear classifier over num_classes"};
  if (shapes) *shapes = std::move(out);
  return std::nullopt;
}

std::vector<Shape> infer_shapes(const NetworkDescriptor& desc) {
  std::vector<Shape> shapes;
  if (auto issue = check_shapes(desc, desc.input, &shapes)) {
    throw ShapeMismatch("layer " + std::to_string(issue->layer) + " " + issue->message);
  }
  return shapes;
}

int importance_source(const NetworkDescriptor& desc, int layer) {
  int cur = layer;
  for (LayerKind expected : {LayerKind::BatchNorm, LayerKind::Activation}) {
    const auto next = desc.consumers(cur);
    if (next.size() == 1 && desc.layers[next[0]].kind == expected) cur = next[0];
  }
  return cur;
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Activation: return "activation";
    case LayerKind::Pool: return "pool";
    case LayerKind::Linear: return "linear";
    case LayerKind::Add: return "add";
    case LayerKind::Concat: return "concat";
  }
  return "?";
}

std::string to_string(Connection connection) {
  switch (connection) {
    case Connection::Sequential: return "sequential";
    case Connection::ResidualBranch: return "residual-branch";
    case Connection::InceptionBranch: return "inception-branch";
  }
  return "?";
}

std::string to_string(PoolType pool) {
  switch (pool) {
    case PoolType::Max: return "max";
    case PoolType::Average: return "avg";
    case PoolType::GlobalAverage: return "global_avg";
  }
  return "?";
}

namespace {

template <typename Enum>
Enum parse_enum(const std::string& text, std::initializer_list<Enum> values) {
  for (Enum v : values) {
    if (to_string(v) == text) return v;
  }
  throw std::invalid_argument("unrecognised token '" + text + "' in network document");
}

std::string join(const std::vector<int>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace

std::string serialize(const NetworkDescriptor& desc) {
  std::ostringstream os;
  os << "aip-network 1\n";
  os << "arch " << desc.arch << "\n";
  os << "input " << desc.input.channels << " " << desc.input.height << " " << desc.input.width << "\n";
  os << "classes " << desc.num_classes << "\n";
  os << "taps " << desc.attention_taps[0] << " " << desc.attention_taps[1] << " "
     << desc.attention_taps[2] << "\n";
  os << "prunable";
  for (int p : desc.prunable) os << " " << p;
  os << "\n";
  for (const LayerSpec& l : desc.layers) {
    os << "layer " << to_string(l.kind) << " name=" << l.name << " inputs=" << join(l.inputs, ',')
       << " in=" << l.in_channels << " out=" << l.out_channels << " k=" << l.kernel
       << " s=" << l.stride << " p=" << l.padding << " pool=" << to_string(l.pool)
       << " conn=" << to_string(l.connection) << "\n";
  }
  os << "end\n";
  return os.str();
}

NetworkDescriptor parse_descriptor(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "aip-network 1")
    throw std::invalid_argument("not a network document (bad header)");

  NetworkDescriptor desc;
  bool ended = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "arch") {
      ls >> desc.arch;
    } else if (key == "input") {
      ls >> desc.input.channels >> desc.input.height >> desc.input.width;
    } else if (key == "classes") {
      ls >> desc.num_classes;
    } else if (key == "taps") {
      ls >> desc.attention_taps[0] >> desc.attention_taps[1] >> desc.attention_taps[2];
    } else if (key == "prunable") {
      int p;
      while (ls >> p) desc.prunable.push_back(p);
    } else if (key == "layer") {
      LayerSpec l;
      std::string kind;
      ls >> kind;
      l.kind = parse_enum(kind, {LayerKind::Conv, LayerKind::BatchNorm, LayerKind::Activation,
                                 LayerKind::Pool, LayerKind::Linear, LayerKind::Add, LayerKind::Concat});
      std::map<std::string, std::string> kv;
      std::string tok;
      while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("malformed layer field '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
      l.name = kv.at("name");
      l.inputs = split_ints(kv.at("inputs"), ',');
      l.in_channels = std::stoi(kv.at("in"));
      l.out_channels = std::stoi(kv.at("out"));
      l.kernel = std::stoi(kv.at("k"));
      l.stride = std::stoi(kv.at("s"));
      l.padding = std::stoi(kv.at("p"));
      l.pool = parse_enum(kv.at("pool"), {PoolType::Max, PoolType::Average, PoolType::GlobalAverage});
      l.connection = parse_enum(kv.at("conn"), {Connection::Sequential, Connection::ResidualBranch,
                                                Connection::InceptionBranch});
      desc.layers.push_back(std::move(l));
    } else if (key == "end") {
      ended = true;
      break;
    } else {
      throw std::invalid_argument("unknown network document key '" + key + "'");
    }
  }
  if (!ended) throw std::invalid_argument("network document truncated (no 'end')");
  return desc;
}

}  // namespace aip
