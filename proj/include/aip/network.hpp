#pragma once

#include "aip/descriptor.hpp"
#include "aip/feature_map.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace aip {

enum class Mode { Train, Eval };

/// Parameter tensors of one layer. Trainable tensors live in `values` with a
/// matching gradient in `grads`:
///   conv, linear: {weight, bias}; batchnorm: {gamma, beta}.
/// Batch norm running statistics are non-trainable `buffers`: {mean, var}.
/// Conv weights are (C_out) x (k*k*C_in) with column (ky*k + kx)*C_in + ci.
template <typename Scalar>
struct LayerParams {
  std::vector<Matrix<Scalar>> values;
  std::vector<Matrix<Scalar>> grads;
  std::vector<Matrix<Scalar>> buffers;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// A descriptor bound to parameters, with forward/backward passes.
///
/// forward() caches every layer output so backward() can run afterwards and
/// so callers can read intermediate maps (attention taps, importance sources).
/// Parameter gradients accumulate across backward() calls until zero_grad().
template <typename Scalar>
class Network {
 public:
  Network() = default;
  /// Fan-in scaled normal initialisation, deterministic in `seed`.
  Network(NetworkDescriptor desc, std::uint64_t seed);
  Network(NetworkDescriptor desc, std::vector<LayerParams<Scalar>> params);

  const NetworkDescriptor& descriptor() const { return desc_; }
  std::vector<LayerParams<Scalar>>& params() { return params_; }
  const std::vector<LayerParams<Scalar>>& params() const { return params_; }

  /// Returns logits, num_classes x batch.
  const Matrix<Scalar>& forward(const FeatureMap<Scalar>& input, Mode mode);
  const FeatureMap<Scalar>& output(int layer) const { return outputs_.at(layer); }
  const Matrix<Scalar>& logits() const { return outputs_.back().data; }

  /// Backpropagates `dlogits` plus optional extra gradients injected at the
  /// outputs of arbitrary layers (keyed by layer index).
  void backward(const Matrix<Scalar>& dlogits,
                const std::map<int, Matrix<Scalar>>& extra = {});
  void zero_grad();

  /// Number of trainable scalars, counted by walking the tensors.
  std::size_t parameter_count() const;

  template <typename Other>
  Network<Other> cast() const;

 private:
  void allocate_grads();

  NetworkDescriptor desc_;
  std::vector<Shape> shapes_;
  std::vector<LayerParams<Scalar>> params_;

  Mode mode_ = Mode::Eval;
  std::vector<FeatureMap<Scalar>> outputs_;
  std::vector<Matrix<Scalar>> cols_;       // conv im2col
  std::vector<Matrix<Scalar>> bn_xhat_;    // normalised batch-norm input
  std::vector<Vector<Scalar>> bn_inv_std_;
  std::vector<Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>> argmax_;  // max pool
};

template <typename Scalar>
template <typename Other>
Network<Other> Network<Scalar>::cast() const {
  std::vector<LayerParams<Other>> converted(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    for (const auto& v : params_[i].values) converted[i].values.push_back(v.template cast<Other>());
    for (const auto& b : params_[i].buffers) converted[i].buffers.push_back(b.template cast<Other>());
  }
  return Network<Other>(desc_, std::move(converted));
}

/// FNV-1a over the raw bytes of every parameter and buffer.
template <typename Scalar>
std::uint64_t parameter_hash(const Network<Scalar>& net);

}  // namespace aip
