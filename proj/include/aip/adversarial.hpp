#pragma once

#include "aip/feature_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace aip {

inline constexpr double kDiscriminatorEps = 1e-7;

template <typename Scalar>
Scalar clamp_probability(Scalar d) {
  const auto eps = static_cast<Scalar>(kDiscriminatorEps);
  return std::clamp(d, eps, Scalar(1) - eps);
}

/// Fully connected judge of output features: num_classes -> 128 -> 256 -> 128
/// -> 1, relu between layers, sigmoid output clamped to (eps, 1 - eps).
/// Inputs are raw logit columns.
template <typename Scalar>
class Discriminator {
 public:
  static constexpr int kHidden[3] = {128, 256, 128};

  Discriminator() = default;
  /// He-normal weights, zero biases. `zero_output_layer` zeroes the final
  /// layer so every input maps to 0.5; training starts from it because a
  /// saturated start pins both outputs at the clamp with zero gradient.
  Discriminator(int input_width, std::uint64_t seed, bool zero_output_layer = false);

  int input_width() const { return input_width_; }

  /// Probabilities, one per column of `features`.
  Vector<Scalar> forward(const Matrix<Scalar>& features);
  Scalar discriminate(const Vector<Scalar>& features);

  /// Chains d(loss)/d(probability) of the last forward() back to the input.
  /// Parameter gradients are accumulated only when `accumulate_params`.
  Matrix<Scalar> backward(const Vector<Scalar>& dprob, bool accumulate_params);

  void zero_grad();
  std::vector<Matrix<Scalar>>& weights() { return weights_; }
  std::vector<Matrix<Scalar>>& biases() { return biases_; }
  std::vector<Matrix<Scalar>>& weight_grads() { return dweights_; }
  std::vector<Matrix<Scalar>>& bias_grads() { return dbiases_; }
  const std::vector<Matrix<Scalar>>& weights() const { return weights_; }
  const std::vector<Matrix<Scalar>>& biases() const { return biases_; }
  const std::vector<Matrix<Scalar>>& weight_grads() const { return dweights_; }
  const std::vector<Matrix<Scalar>>& bias_grads() const { return dbiases_; }

 private:
  int input_width_ = 0;
  std::vector<Matrix<Scalar>> weights_, biases_, dweights_, dbiases_;
  std::vector<Matrix<Scalar>> acts_;  // input of each layer
  Vector<Scalar> raw_prob_;
};

/// Student objective: mean log(1 - d) over discriminator outputs on the
/// student's features. Decreases as d -> 1.
template <typename Scalar>
Scalar student_adv_loss(const Vector<Scalar>& d_student) {
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < d_student.size(); ++i) sum += std::log(Scalar(1) - clamp_probability(d_student[i]));
  return sum / static_cast<Scalar>(d_student.size());
}

template <typename Scalar>
Vector<Scalar> student_adv_grad(const Vector<Scalar>& d_student) {
  const auto n = static_cast<Scalar>(d_student.size());
  Vector<Scalar> g(d_student.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = -Scalar(1) / ((Scalar(1) - clamp_probability(d_student[i])) * n);
  return g;
}

/// Discriminator objective: mean log(1 - d_T) + mean log(d_S). Decreases as
/// d_T -> 1 and d_S -> 0.
template <typename Scalar>
Scalar discriminator_loss(const Vector<Scalar>& d_teacher, const Vector<Scalar>& d_student) {
  Scalar t = 0;
  Scalar s = 0;
  for (Eigen::Index i = 0; i < d_teacher.size(); ++i) t += std::log(Scalar(1) - clamp_probability(d_teacher[i]));
  for (Eigen::Index i = 0; i < d_student.size(); ++i) s += std::log(clamp_probability(d_student[i]));
  return t / static_cast<Scalar>(d_teacher.size()) + s / static_cast<Scalar>(d_student.size());
}

template <typename Scalar>
Vector<Scalar> discriminator_grad_teacher(const Vector<Scalar>& d_teacher) {
  return student_adv_grad(d_teacher);
}

template <typename Scalar>
Vector<Scalar> discriminator_grad_student(const Vector<Scalar>& d_student) {
  const auto n = static_cast<Scalar>(d_student.size());
  Vector<Scalar> g(d_student.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = Scalar(1) / (clamp_probability(d_student[i]) * n);
  return g;
}

}  // namespace aip
