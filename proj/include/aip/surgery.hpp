#pragma once

#include "aip/descriptor.hpp"
#include "aip/importance.hpp"
#include "aip/network.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aip {

/// Channel selection for every layer touched by a pruning step.
///
/// `sources` are the pruned convs with their kept output channels. Removing
/// output channel c of a source removes channel c from every channel-wise
/// layer downstream (batch norm, activation, pooling) up to and including the
/// input slice c of the next conv or linear layer; those derived selections
/// are in `kept_out` / `kept_in`, indexed by layer. All index lists are
/// strictly increasing and non-empty.
struct PrunePlan {
  std::map<int, std::vector<int>> sources;
  std::vector<std::optional<std::vector<int>>> kept_out;
  std::vector<std::optional<std::vector<int>>> kept_in;
};

/// Layers absent from `mask` keep all channels.
PrunePlan plan(const NetworkDescriptor& desc, const KeepMask& mask);

/// Descriptor with channel counts reduced according to `p`.
NetworkDescriptor apply(const NetworkDescriptor& desc, const PrunePlan& p);

/// Copies surviving weights, biases, batch norm affine parameters and running
/// statistics into a smaller network.
template <typename Scalar>
Network<Scalar> apply(const Network<Scalar>& net, const PrunePlan& p);

/// Shape propagation plus structural rules: three attention taps at distinct
/// resolutions, and every prunable layer being a conv whose channel removal
/// stays clear of add/concat junctions.
std::optional<ShapeIssue> validate(const NetworkDescriptor& desc, const Shape& input);

std::string serialize(const PrunePlan& p, const NetworkDescriptor& desc);
/// Reads back the source selections of a serialized plan.
std::map<int, std::vector<int>> parse_plan_sources(const std::string& text);

}  // namespace aip
