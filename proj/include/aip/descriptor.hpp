#pragma once

#include "aip/feature_map.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace aip {

enum class LayerKind { Conv, BatchNorm, Activation, Pool, Linear, Add, Concat };
enum class Connection { Sequential, ResidualBranch, InceptionBranch };
enum class PoolType { Max, Average, GlobalAverage };

/// One node of the layer graph. `inputs` holds producer indices (-1 is the
/// network input); every producer precedes its consumer in the layer list.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  std::string name;
  std::vector<int> inputs;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  PoolType pool = PoolType::Max;
  Connection connection = Connection::Sequential;

  bool operator==(const LayerSpec&) const = default;
};

/// Architecture of a prunable network.
///
/// Layers are stored in topological order and the last layer is the
/// classifier. `attention_taps` are layer indices whose outputs feed the
/// attention-transfer loss; teacher and student share indices because
/// pruning never changes the topology, so each entry names a
/// (student layer, teacher layer) pair.
struct NetworkDescriptor {
  std::string arch;
  Shape input;
  int num_classes = 0;
  std::vector<LayerSpec> layers;
  std::array<int, 3> attention_taps{-1, -1, -1};
  std::vector<int> prunable;

  int size() const { return static_cast<int>(layers.size()); }
  int output_layer() const { return size() - 1; }
  std::vector<int> consumers(int layer) const;
  bool is_prunable(int layer) const;

  bool operator==(const NetworkDescriptor&) const = default;
};

struct ShapeIssue {
  int layer = -1;
  std::string message;
};

/// Symbolic shape propagation. Returns the first mismatch, or nothing when
/// every edge is consistent. On success `shapes` (if given) receives the
/// output shape of every layer.
std::optional<ShapeIssue> check_shapes(const NetworkDescriptor& desc, const Shape& input,
                                       std::vector<Shape>* shapes = nullptr);

/// Like check_shapes but throws ShapeMismatch on the first issue.
std::vector<Shape> infer_shapes(const NetworkDescriptor& desc);

/// Output of the activation that directly follows conv `layer` through its
/// batch norm. Importance scores are computed on this post-activation map.
int importance_source(const NetworkDescriptor& desc, int layer);

std::string to_string(LayerKind kind);
std::string to_string(Connection connection);
std::string to_string(PoolType pool);

/// Structured text form used as the checkpoint companion document.
std::string serialize(const NetworkDescriptor& desc);
NetworkDescriptor parse_descriptor(const std::string& text);

}  // namespace aip
