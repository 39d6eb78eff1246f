#include "aip/surgery.hpp"

#include "aip/errors.hpp"

#include <set>
#include <sstream>

namespace aip {
namespace {

/// Walks downstream from `layer` through channel-wise layers. Returns an
/// error message if the walk reaches a junction.
std::optional<std::string> propagate(const NetworkDescriptor& desc, int layer, const std::vector<int>& kept,
                                     PrunePlan* p) {
  for (int c : desc.consumers(layer)) {
    const LayerSpec& l = desc.layers[c];
    switch (l.kind) {
      case LayerKind::BatchNorm:
      case LayerKind::Activation:
      case LayerKind::Pool:
        if (p) {
          p->kept_out[c] = kept;
          p->kept_in[c] = kept;
        }
        if (auto err = propagate(desc, c, kept, p)) return err;
        break;
      case LayerKind::Conv:
      case LayerKind::Linear:
        if (p) {
          if (p->kept_in[c]) return "layer '" + l.name + "' receives channel removals twice";
          p->kept_in[c] = kept;
        }
        break;
      case LayerKind::Add:
      case LayerKind::Concat:
        return "channel removal reaches junction '" + l.name + "'";
    }
  }
  return std::nullopt;
}

template <typename Scalar>
Matrix<Scalar> take_rows(const Matrix<Scalar>& m, const std::vector<int>& rows) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

}  // namespace

PrunePlan plan(const NetworkDescriptor& desc, const KeepMask& mask) {
  PrunePlan p;
  p.kept_out.resize(desc.layers.size());
  p.kept_in.resize(desc.layers.size());
  for (const auto& [layer, keep] : mask) {
    if (layer < 0 || layer >= desc.size() || !desc.is_prunable(layer))
      throw ShapeMismatch("keep mask names non-prunable layer " + std::to_string(layer));
    const LayerSpec& l = desc.layers[layer];
    if (static_cast<int>(keep.size()) != l.out_channels)
      throw ShapeMismatch("keep mask for '" + l.name + "' has " + std::to_string(keep.size()) +
                          " entries, layer has " + std::to_string(l.out_channels) + " channels");
    std::vector<int> kept;
    for (int c = 0; c < l.out_channels; ++c)
      if (keep[c]) kept.push_back(c);
    if (kept.empty()) throw ShapeMismatch("keep mask for '" + l.name + "' removes every channel");
    p.sources[layer] = kept;
    p.kept_out[layer] = kept;
    if (auto err = propagate(desc, layer, kept, &p)) throw ShapeMismatch(*err);
  }
  return p;
}

NetworkDescriptor apply(const NetworkDescriptor& desc, const PrunePlan& p) {
  if (p.kept_out.size() != desc.layers.size() || p.kept_in.size() != desc.layers.size())
    throw ShapeMismatch("plan was made for a different descriptor");
  NetworkDescriptor out = desc;
  for (int i = 0; i < desc.size(); ++i) {
    if (p.kept_out[i]) out.layers[i].out_channels = static_cast<int>(p.kept_out[i]->size());
    if (p.kept_in[i]) out.layers[i].in_channels = static_cast<int>(p.kept_in[i]->size());
  }
  return out;
}

template <typename Scalar>
Network<Scalar> apply(const Network<Scalar>& net, const PrunePlan& p) {
  const NetworkDescriptor& desc = net.descriptor();
  NetworkDescriptor pruned = apply(desc, p);
  std::vector<LayerParams<Scalar>> params(desc.layers.size());
  for (int i = 0; i < desc.size(); ++i) {
    const LayerSpec& l = desc.layers[i];
    const auto& src = net.params()[i];
    auto& dst = params[i];
    const auto& out_keep = p.kept_out[i];
    const auto& in_keep = p.kept_in[i];
    auto check = [&](const std::vector<int>& idx, int limit) {
      for (int v : idx)
        if (v < 0 || v >= limit) throw ShapeMismatch("plan index out of range at layer '" + l.name + "'");
    };
    if (out_keep) check(*out_keep, l.out_channels);
    if (in_keep) check(*in_keep, l.in_channels);

    switch (l.kind) {
      case LayerKind::Conv: {
        Matrix<Scalar> w = out_keep ? take_rows(src.values[0], *out_keep) : src.values[0];
        if (in_keep) {
          const int kk = l.kernel * l.kernel;
          const int cin = l.in_channels;
          const auto new_cin = static_cast<int>(in_keep->size());
          if (w.cols() != kk * cin) throw ShapeMismatch("conv weight does not match descriptor");
          Matrix<Scalar> sliced(w.rows(), static_cast<Eigen::Index>(kk) * new_cin);
          for (int pos = 0; pos < kk; ++pos)
            for (int j = 0; j < new_cin; ++j) sliced.col(pos * new_cin + j) = w.col(pos * cin + (*in_keep)[j]);
          w = std::move(sliced);
        }
        dst.values.push_back(std::move(w));
        dst.values.push_back(out_keep ? take_rows(src.values[1], *out_keep) : src.values[1]);
        break;
      }
      case LayerKind::BatchNorm:
        for (const auto& v : src.values) dst.values.push_back(out_keep ? take_rows(v, *out_keep) : v);
        for (const auto& b : src.buffers) dst.buffers.push_back(out_keep ? take_rows(b, *out_keep) : b);
        break;
      case LayerKind::Linear: {
        const Matrix<Scalar>& w = src.values[0];
        if (in_keep) {
          Matrix<Scalar> sliced(w.rows(), static_cast<Eigen::Index>(in_keep->size()));
          for (std::size_t j = 0; j < in_keep->size(); ++j) sliced.col(j) = w.col((*in_keep)[j]);
          dst.values.push_back(std::move(sliced));
        } else {
          dst.values.push_back(w);
        }
        dst.values.push_back(src.values[1]);
        break;
      }
      default:
        break;
    }
  }
  return Network<Scalar>(std::move(pruned), std::move(params));
}

template Network<float> apply(const Network<float>&, const PrunePlan&);
template Network<double> apply(const Network<double>&, const PrunePlan&);

std::optional<ShapeIssue> validate(const NetworkDescriptor& desc, const Shape& input) {
  std::vector<Shape> shapes;
  if (auto issue = check_shapes(desc, input, &shapes)) return issue;
  std::set<std::pair<int, int>> resolutions;
  for (int tap : desc.attention_taps) {
    if (tap < 0 || tap >= desc.size()) return ShapeIssue{tap, "attention tap index out of range"};
    resolutions.insert({shapes[tap].height, shapes[tap].width});
  }
  if (resolutions.size() != 3) return ShapeIssue{desc.attention_taps[0], "attention taps must sit at three distinct resolutions"};
  for (int l : desc.prunable) {
    if (l < 0 || l >= desc.size()) return ShapeIssue{l, "prunable index out of range"};
    if (desc.layers[l].kind != LayerKind::Conv) return ShapeIssue{l, "prunable layer is not a convolution"};
    if (auto err = propagate(desc, l, {}, nullptr)) return ShapeIssue{l, *err};
  }
  return std::nullopt;
}

std::string serialize(const PrunePlan& p, const NetworkDescriptor& desc) {
  std::ostringstream os;
  os << "aip-plan 1\n";
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  for (const auto& [layer, kept] : p.sources) {
    os << "prune " << layer << " " << desc.layers[layer].name << " " << desc.layers[layer].out_channels << " "
       << kept.size() << " keep=" << list(kept) << "\n";
  }
  for (int i = 0; i < desc.size(); ++i) {
    if (p.sources.count(i)) continue;
    if (p.kept_out[i])
      os << "derived " << i << " " << desc.layers[i].name << " channels " << desc.layers[i].out_channels << "->"
         << p.kept_out[i]->size() << "\n";
    else if (p.kept_in[i])
      os << "derived " << i << " " << desc.layers[i].name << " inputs " << desc.layers[i].in_channels << "->"
         << p.kept_in[i]->size() << "\n";
  }
  os << "end\n";
  return os.str();
}

std::map<int, std::vector<int>> parse_plan_sources(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "aip-plan 1") throw std::invalid_argument("not a plan document");
  std::map<int, std::vector<int>> out;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key != "prune") continue;
    int layer = 0;
    std::string name, keep;
    int original = 0, kept = 0;
    ls >> layer >> name >> original >> kept >> keep;
    std::vector<int> idx;
    std::stringstream ks(keep.substr(keep.find('=') + 1));
    std::string item;
    while (std::getline(ks, item, ',')) idx.push_back(std::stoi(item));
    if (static_cast<int>(idx.size()) != kept) throw std::invalid_argument("plan line count mismatch: " + line);
    out[layer] = std::move(idx);
  }
  return out;
}

}  // namespace aip
