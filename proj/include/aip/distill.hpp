#pragma once

#include "aip/feature_map.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <type_traits>
#include <stdexcept>
#include <vector>

namespace aip {

inline constexpr double kNormFloor = 1e-12;
inline constexpr double kProbFloor = 1e-12;

/// Spatial attention of one sample: sum over channels of squared activations.
/// `maps` is channels x (height*width); the result has one entry per position.
template <typename Derived>
Vector<typename Derived::Scalar> attention_map(const Eigen::MatrixBase<Derived>& maps) {
  return maps.colwise().squaredNorm().transpose();
}

/// || a_s/|a_s| - a_t/|a_t| ||_2 over flattened attention maps. Zero norms are
/// floored at kNormFloor and reported through `floored`.
template <typename Scalar>
Scalar attention_distance(const Vector<Scalar>& student, const Vector<Scalar>& teacher, bool* floored = nullptr) {
  if (student.size() != teacher.size()) throw std::invalid_argument("attention maps differ in size");
  const Scalar ns = student.norm();
  const Scalar nt = teacher.norm();
  const auto floor = static_cast<Scalar>(kNormFloor);
  if (floored && (ns < floor || nt < floor)) *floored = true;
  return (student / std::max(ns, floor) - teacher / std::max(nt, floor)).norm();
}

template <typename Scalar>
struct AttentionLoss {
  Scalar value = 0;
  /// d(value)/d(student feature map) per tap, same layout as the tap data.
  std::vector<Matrix<Scalar>> grads;
  bool floored = false;
};

/// Attention transfer loss summed over tap pairs and averaged over the batch.
/// Teacher maps are constants; gradients are produced for the student only.
template <typename Scalar>
AttentionLoss<Scalar> at_loss(const std::vector<const FeatureMap<Scalar>*>& student,
                              const std::vector<const FeatureMap<Scalar>*>& teacher) {
  if (student.size() != teacher.size()) throw std::invalid_argument("tap lists differ in length");
  AttentionLoss<Scalar> out;
  const auto floor = static_cast<Scalar>(kNormFloor);
  for (std::size_t t = 0; t < student.size(); ++t) {
    const FeatureMap<Scalar>& s = *student[t];
    const FeatureMap<Scalar>& r = *teacher[t];
    if (s.batch != r.batch || s.height != r.height || s.width != r.width)
      throw std::invalid_argument("student and teacher attention taps differ in shape");
    Matrix<Scalar> grad = Matrix<Scalar>::Zero(s.data.rows(), s.data.cols());
    const auto inv_batch = Scalar(1) / static_cast<Scalar>(s.batch);
    for (int n = 0; n < s.batch; ++n) {
      const Vector<Scalar> as = attention_map(s.sample(n));
      const Vector<Scalar> ar = attention_map(r.sample(n));
      const Scalar ns = as.norm();
      const Scalar nr = ar.norm();
      if (ns < floor || nr < floor) out.floored = true;
      const Scalar ns_eff = std::max(ns, floor);
      const Vector<Scalar> us = as / ns_eff;
      const Vector<Scalar> diff = us - ar / std::max(nr, floor);
      const Scalar dist = diff.norm();
      out.value += dist * inv_batch;
      if (dist <= Scalar(0)) continue;
      // d dist / d us = diff / dist; project out the normalisation direction.
      const Vector<Scalar> g_u = diff / dist;
      Vector<Scalar> g_a = g_u / ns_eff;
      if (ns >= floor) g_a -= us * (us.dot(g_u) / ns_eff);
      grad.middleCols(static_cast<Eigen::Index>(n) * s.spatial(), s.spatial()) =
          (Scalar(2) * inv_batch) * (s.sample(n).array().rowwise() * g_a.transpose().array()).matrix();
    }
    out.grads.push_back(std::move(grad));
  }
  return out;
}

template <typename Scalar>
void require_temperature(Scalar temperature) {
  if (!(temperature > Scalar(0))) throw std::invalid_argument("temperature must be positive");
}

/// log softmax(logits / temperature), computed stably.
template <typename Scalar>
Vector<Scalar> log_soften(const Vector<Scalar>& logits, std::type_identity_t<Scalar> temperature) {
  require_temperature(temperature);
  const Vector<Scalar> z = logits / temperature;
  const Scalar peak = z.maxCoeff();
  const Scalar lse = peak + std::log((z.array() - peak).exp().sum());
  return (z.array() - lse).matrix();
}

/// softmax(logits / temperature).
template <typename Scalar>
Vector<Scalar> soften(const Vector<Scalar>& logits, std::type_identity_t<Scalar> temperature) {
  return log_soften(logits, temperature).array().exp().matrix();
}

/// D_KL(p || q) = sum p log p - p log q, with 0 log 0 = 0. Entries of q that
/// are zero where p is not get floored at kProbFloor and reported.
template <typename Scalar>
Scalar kl_divergence(const Vector<Scalar>& p, const Vector<Scalar>& q, bool* clamped = nullptr) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions differ in length");
  Scalar sum = 0;
  const auto floor = static_cast<Scalar>(kProbFloor);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= Scalar(0)) continue;
    Scalar qi = q[i];
    if (qi < floor) {
      qi = floor;
      if (clamped) *clamped = true;
    }
    sum += p[i] * (std::log(p[i]) - std::log(qi));
  }
  return sum;
}

/// Cross-entropy of raw logits against an integer label.
template <typename Scalar>
Scalar cross_entropy(const Vector<Scalar>& logits, int label) {
  if (label < 0 || label >= logits.size()) throw std::out_of_range("label out of range");
  return -log_soften(logits, Scalar(1))[label];
}

template <typename Scalar>
struct DistillLoss {
  Scalar value = 0;  // alpha * kl_term + (1 - alpha) * ce_term
  Scalar kl_term = 0;  // T^2 * mean D_KL(p_student || q_teacher)
  Scalar ce_term = 0;  // mean cross-entropy of the student
  Matrix<Scalar> grad;  // d(value)/d(student logits), classes x batch
};

/// Knowledge distillation loss over a batch of logit columns. Teacher logits
/// are constants.
template <typename Scalar>
DistillLoss<Scalar> kd_loss(const Matrix<Scalar>& student, const Matrix<Scalar>& teacher,
                            std::span<const int> labels, std::type_identity_t<Scalar> temperature,
                            std::type_identity_t<Scalar> alpha) {
  require_temperature(temperature);
  if (!(alpha >= Scalar(0) && alpha <= Scalar(1))) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw std::invalid_argument("student and teacher logits differ in shape");
  if (static_cast<Eigen::Index>(labels.size()) != student.cols())
    throw std::invalid_argument("label count does not match batch");
  const Eigen::Index batch = student.cols();
  const auto inv_batch = Scalar(1) / static_cast<Scalar>(batch);
  DistillLoss<Scalar> out;
  out.grad = Matrix<Scalar>::Zero(student.rows(), batch);
  for (Eigen::Index n = 0; n < batch; ++n) {
    const int label = labels[n];
    if (label < 0 || label >= student.rows()) throw std::out_of_range("label out of range");
    const Vector<Scalar> zs = student.col(n);
    const Vector<Scalar> log_p = log_soften(zs, temperature);
    const Vector<Scalar> log_q = log_soften(Vector<Scalar>(teacher.col(n)), temperature);
    const Vector<Scalar> p = log_p.array().exp().matrix();
    const Vector<Scalar> g = log_p - log_q;
    const Scalar kl = p.dot(g);
    const Vector<Scalar> log_s = log_soften(zs, Scalar(1));
    const Scalar ce = -log_s[label];
    out.kl_term += temperature * temperature * kl * inv_batch;
    out.ce_term += ce * inv_batch;

    // d KL / dz = (1/T) p * (g - p.g);  d CE / dz = softmax(z) - onehot
    Vector<Scalar> dkl = (p.array() * (g.array() - kl)).matrix() / temperature;
    Vector<Scalar> dce = log_s.array().exp().matrix();
    dce[label] -= Scalar(1);
    out.grad.col(n) = inv_batch * (alpha * temperature * temperature * dkl + (Scalar(1) - alpha) * dce);
  }
  out.value = alpha * out.kl_term + (Scalar(1) - alpha) * out.ce_term;
  return out;
}

}  // namespace aip
