#pragma once

#include "aip/feature_map.hpp"

#include <Eigen/Dense>

#include <map>
#include <vector>

namespace aip {

/// Running L1 statistics of one prunable layer's channels.
struct LayerImportance {
  Eigen::VectorXd raw_l1_sums;
  long batches_seen = 0;
};

/// Per-layer channel importance accumulated over a window of batches,
/// keyed by the index of the prunable conv.
struct ImportanceState {
  std::map<int, LayerImportance> layers;

  void reset() { layers.clear(); }
};

struct Scores {
  Eigen::VectorXd values;
  bool degenerate = false;  // every channel had zero L1 mass
};

/// Per layer keep flags, true = channel survives.
using KeepMask = std::map<int, std::vector<bool>>;

/// Adds, per channel, the L1 norm of each sample's feature map.
template <typename Scalar>
void accumulate(ImportanceState& state, int layer, const FeatureMap<Scalar>& maps) {
  if (maps.batch <= 0 || maps.data.cols() == 0)
    throw std::invalid_argument("importance accumulation needs a non-empty batch");
  auto& entry = state.layers[layer];
  if (entry.batches_seen == 0 && entry.raw_l1_sums.size() == 0) {
    entry.raw_l1_sums = Eigen::VectorXd::Zero(maps.channels());
  } else if (entry.raw_l1_sums.size() != maps.channels()) {
    throw std::invalid_argument("feature map has " + std::to_string(maps.channels()) +
                                " channels, layer " + std::to_string(layer) + " tracks " +
                                std::to_string(entry.raw_l1_sums.size()));
  }
  entry.raw_l1_sums += maps.data.cwiseAbs().rowwise().sum().template cast<double>();
  ++entry.batches_seen;
}

/// Max-normalised L1 sums: m_c = |M_c|_1 / max_c |M_c|_1.
Scores finalize_scores(const ImportanceState& state, int layer);

/// k times the mean score of the layer; k must lie in (0, 1).
double threshold(const Eigen::VectorXd& scores, double k);

/// Keeps channel c iff scores[c] >= cutoff. If nothing survives, keeps the
/// single highest score (lowest index on ties).
std::vector<bool> select(const Eigen::VectorXd& scores, double cutoff);

/// finalize + threshold + select for every tracked layer.
KeepMask select_all(const ImportanceState& state, double k, std::map<int, Scores>* scores_out = nullptr);

}  // namespace aip
