#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aip {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Channel/height/width triple describing one sample.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  int spatial() const { return height * width; }
  std::size_t numel() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

/// A batch of feature maps stored channel-major: one row per channel and one
/// column per (sample, y, x) position, column = (n * height + y) * width + x.
/// Conv layers reduce to a single GEMM over this layout.
template <typename Scalar>
struct FeatureMap {
  Matrix<Scalar> data;
  int batch = 0;
  int height = 0;
  int width = 0;

  FeatureMap() = default;
  FeatureMap(int channels, int batch_, int height_, int width_)
      : data(Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(batch_) * height_ * width_)),
        batch(batch_),
        height(height_),
        width(width_) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int spatial() const { return height * width; }
  Shape shape() const { return {channels(), height, width}; }

  /// Columns belonging to sample n (channels x spatial).
  auto sample(int n) { return data.middleCols(static_cast<Eigen::Index>(n) * spatial(), spatial()); }
  auto sample(int n) const {
    return data.middleCols(static_cast<Eigen::Index>(n) * spatial(), spatial());
  }

  Scalar& at(int c, int n, int y, int x) {
    return data(c, (static_cast<Eigen::Index>(n) * height + y) * width + x);
  }
  Scalar at(int c, int n, int y, int x) const {
    return data(c, (static_cast<Eigen::Index>(n) * height + y) * width + x);
  }

  template <typename Other>
  FeatureMap<Other> cast() const {
    FeatureMap<Other> out;
    out.data = data.template cast<Other>();
    out.batch = batch;
    out.height = height;
    out.width = width;
    return out;
  }
};

}  // namespace aip
