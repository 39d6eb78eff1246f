#pragma once

#include "aip/descriptor.hpp"
#include "aip/network.hpp"

#include <cstdint>
#include <string>

namespace aip {

enum class Arch { VggSmall, Vgg16, ResnetBasic, InceptionSmall };

Arch parse_arch(const std::string& name);
std::string to_string(Arch arch);

struct ScaleConfig {
  Shape input{3, 32, 32};
  int num_classes = 10;
  /// Base channel width; 0 picks the family default (vgg16: 64, others: 16).
  int width = 0;
  /// ResNet depth, must be 6n+2.
  int depth = 20;
};

/// Architecture only. Taps sit after the last convolution (post-activation)
/// of each of the three deepest resolution stages.
///
///   vgg_small       8 conv layers in four stages, global average pool, linear
///   vgg16           the 13-conv CIFAR VGG-16 with batch norm
///   resnet_basic    CIFAR ResNet of basic blocks; only each block's first conv is prunable
///   inception_small stem conv + two four-branch inception modules; only the
///                   internal convs of the 2-conv and 3-conv branches are prunable
NetworkDescriptor build_descriptor(Arch arch, const ScaleConfig& scale);

template <typename Scalar = float>
Network<Scalar> build(Arch arch, const ScaleConfig& scale, std::uint64_t seed) {
  return Network<Scalar>(build_descriptor(arch, scale), seed);
}

/// Structurally identical network holding its own copy of the parameters.
template <typename Scalar>
Network<Scalar> clone_as_student(const Network<Scalar>& teacher) {
  std::vector<LayerParams<Scalar>> params;
  params.reserve(teacher.params().size());
  for (const auto& p : teacher.params()) params.push_back({p.values, {}, p.buffers});
  return Network<Scalar>(teacher.descriptor(), std::move(params));
}

}  // namespace aip
