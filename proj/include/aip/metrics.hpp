#pragma once

#include "aip/descriptor.hpp"
#include "aip/importance.hpp"
#include "aip/surgery.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aip {

/// Compute cost of conv and linear layers. `flops` counts multiplies and adds
/// separately (2 per MAC); pool, activation and batch norm are excluded.
struct FlopCount {
  std::uint64_t flops = 0;
  std::uint64_t macs = 0;
};

/// Learnable parameters of one layer: conv k*k*Cin*Cout + Cout, batch norm
/// 2*C, linear in*out + out.
std::uint64_t layer_params(const LayerSpec& layer);
std::uint64_t count_params(const NetworkDescriptor& desc);
FlopCount count_flops(const NetworkDescriptor& desc, const Shape& input);
inline FlopCount count_flops(const NetworkDescriptor& desc) { return count_flops(desc, desc.input); }

/// Parameters a plan deletes, tallied per layer from the plan's index lists.
std::uint64_t removed_parameters(const NetworkDescriptor& original, const PrunePlan& p);

struct LayerSurvival {
  int layer = -1;
  std::string name;
  int original = 0;
  int kept = 0;
};

/// Kept output channels of every prunable layer.
std::vector<LayerSurvival> survival(const NetworkDescriptor& original, const NetworkDescriptor& pruned);

struct MetricsReport {
  std::string label;
  std::uint64_t params = 0;
  FlopCount flops;
  double params_drop_pct = 0.0;
  double flops_drop_pct = 0.0;
  std::optional<double> accuracy;
  std::vector<LayerSurvival> per_layer;
};

MetricsReport measure(const NetworkDescriptor& desc, std::string label = {});

struct Drops {
  double params_pct = 0.0;
  double flops_pct = 0.0;
  double macs_pct = 0.0;
};

/// drop = 100 * (base - pruned) / base. Throws on a zero baseline.
Drops compare(const MetricsReport& base, const MetricsReport& pruned);

/// Fills the drop fields of `pruned` relative to `base`.
void attach_drops(const MetricsReport& base, MetricsReport& pruned);

std::string format_pct(double value);
/// key: value document with every MetricsReport field.
std::string serialize(const MetricsReport& report);
/// Comparison table: baseline row followed by one row per pruned report.
std::string comparison_table(const MetricsReport& base, const std::vector<MetricsReport>& pruned);

/// CSV with header `layer,channel,score`.
void export_scores(const std::map<int, Scores>& scores, const std::filesystem::path& path);
std::map<int, Eigen::VectorXd> import_scores(const std::filesystem::path& path);

}  // namespace aip
