#include "aip/importance.hpp"

#include "aip/errors.hpp"

#include <stdexcept>
#include <string>

namespace aip {

Scores finalize_scores(const ImportanceState& state, int layer) {
  const auto it = state.layers.find(layer);
  if (it == state.layers.end() || it->second.batches_seen == 0)
    throw std::logic_error("no importance statistics accumulated for layer " + std::to_string(layer));
  const Eigen::VectorXd& sums = it->second.raw_l1_sums;
  Scores s;
  const double peak = sums.maxCoeff();
  if (peak <= 0.0) {
    s.values = Eigen::VectorXd::Zero(sums.size());
    s.degenerate = true;
    return s;
  }
  s.values = sums / peak;
  return s;
}

double threshold(const Eigen::VectorXd& scores, double k) {
  if (!(k > 0.0 && k < 1.0)) throw ConfigError("pruning factor k must lie in (0, 1), got " + std::to_string(k));
  if (scores.size() == 0) throw std::invalid_argument("threshold of an empty score vector");
  return k * scores.mean();
}

std::vector<bool> select(const Eigen::VectorXd& scores, double cutoff) {
  std::vector<bool> keep(scores.size());
  bool any = false;
  for (Eigen::Index c = 0; c < scores.size(); ++c) {
    keep[c] = !(scores[c] < cutoff);
    any = any || keep[c];
  }
  if (!any && scores.size() > 0) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.size(); ++c)
      if (scores[c] > scores[best]) best = c;
    keep[best] = true;
  }
  return keep;
}

KeepMask select_all(const ImportanceState& state, double k, std::map<int, Scores>* scores_out) {
  KeepMask mask;
  for (const auto& [layer, entry] : state.layers) {
    Scores s = finalize_scores(state, layer);
    mask[layer] = select(s.values, threshold(s.values, k));
    if (scores_out) (*scores_out)[layer] = std::move(s);
  }
  return mask;
}

}  // namespace aip
