#pragma once

#include "aip/descriptor.hpp"
#include "aip/feature_map.hpp"
#include "aip/network.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace aip::testing {

inline LayerSpec conv(int input, int in, int out, int k = 3, int stride = 1, int pad = 1,
                      Connection c = Connection::Sequential) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.inputs = {input};
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = k;
  l.stride = stride;
  l.padding = pad;
  l.connection = c;
  return l;
}

inline LayerSpec channelwise(LayerKind kind, int input, int channels) {
  LayerSpec l;
  l.kind = kind;
  l.inputs = {input};
  l.in_channels = channels;
  l.out_channels = channels;
  return l;
}

inline LayerSpec bn(int input, int channels) { return channelwise(LayerKind::BatchNorm, input, channels); }
inline LayerSpec relu(int input, int channels) { return channelwise(LayerKind::Activation, input, channels); }

inline LayerSpec pool(int input, int channels, PoolType type, int k = 2, int stride = 2, int pad = 0) {
  LayerSpec l = channelwise(LayerKind::Pool, input, channels);
  l.pool = type;
  l.kernel = k;
  l.stride = stride;
  l.padding = pad;
  return l;
}

inline LayerSpec linear(int input, int in, int out) {
  LayerSpec l;
  l.kind = LayerKind::Linear;
  l.inputs = {input};
  l.in_channels = in;
  l.out_channels = out;
  return l;
}

inline LayerSpec junction(LayerKind kind, std::vector<int> inputs, int channels) {
  LayerSpec l;
  l.kind = kind;
  l.inputs = std::move(inputs);
  l.in_channels = channels;
  l.out_channels = channels;
  return l;
}

/// Names layers l0, l1, ... and fills in the remaining descriptor fields.
inline NetworkDescriptor make_descriptor(Shape input, int classes, std::vector<LayerSpec> layers,
                                         std::vector<int> prunable = {}, std::array<int, 3> taps = {-1, -1, -1}) {
  NetworkDescriptor d;
  d.arch = "custom";
  d.input = input;
  d.num_classes = classes;
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].name = "l" + std::to_string(i);
  d.layers = std::move(layers);
  d.prunable = std::move(prunable);
  d.attention_taps = taps;
  return d;
}

template <typename Scalar>
FeatureMap<Scalar> random_input(const Shape& s, int batch, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap<Scalar> x(s.channels, batch, s.height, s.width);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = static_cast<Scalar>(n(rng));
  return x;
}

template <typename Scalar>
Matrix<Scalar> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(n(rng));
  return m;
}

/// ||a - n|| / (||a|| + ||n||) between an analytic gradient and a
/// central-difference estimate of `f` around `x`.
inline double gradient_error(const Matrix<double>& analytic, Matrix<double>& x, const std::function<double()>& f,
                             double h = 1e-6) {
  Matrix<double> numeric(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + h;
    const double up = f();
    x.data()[i] = saved - h;
    const double down = f();
    x.data()[i] = saved;
    numeric.data()[i] = (up - down) / (2 * h);
  }
  // The floor keeps structurally zero gradients (a bias feeding batch norm in
  // train mode) from turning rounding noise into a relative error of 1.
  const double denom = std::max(analytic.norm() + numeric.norm(), 1e-2);
  return (analytic - numeric).norm() / denom;
}

}  // namespace aip::testing
