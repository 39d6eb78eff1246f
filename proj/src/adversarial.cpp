#include "aip/adversarial.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace aip {

template <typename Scalar>
Discriminator<Scalar>::Discriminator(int input_width, std::uint64_t seed, bool zero_output_layer)
    : input_width_(input_width) {
  if (input_width < 1) throw std::invalid_argument("discriminator input width must be positive");
  std::mt19937_64 rng(seed);
  const int widths[5] = {input_width, kHidden[0], kHidden[1], kHidden[2], 1};
  for (int layer = 0; layer < 4; ++layer) {
    const int fan_in = widths[layer];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    Matrix<Scalar> w(widths[layer + 1], fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(dist(rng));
    if (zero_output_layer && layer == 3) w.setZero();
    weights_.push_back(std::move(w));
    biases_.push_back(Matrix<Scalar>::Zero(widths[layer + 1], 1));
    dweights_.push_back(Matrix<Scalar>::Zero(widths[layer + 1], fan_in));
    dbiases_.push_back(Matrix<Scalar>::Zero(widths[layer + 1], 1));
  }
}

template <typename Scalar>
Vector<Scalar> Discriminator<Scalar>::forward(const Matrix<Scalar>& features) {
  if (features.rows() != input_width_)
    throw std::invalid_argument("discriminator expects width " + std::to_string(input_width_) + ", got " +
                                std::to_string(features.rows()));
  acts_.assign(4, Matrix<Scalar>());
  Matrix<Scalar> x = features;
  for (int layer = 0; layer < 4; ++layer) {
    acts_[layer] = x;
    x = weights_[layer] * x;
    x.colwise() += biases_[layer].col(0);
    if (layer < 3) x = x.cwiseMax(Scalar(0));
  }
  raw_prob_ = (Scalar(1) / (Scalar(1) + (-x.row(0).array()).exp())).matrix().transpose();
  Vector<Scalar> out(raw_prob_.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = clamp_probability(raw_prob_[i]);
  return out;
}

template <typename Scalar>
Scalar Discriminator<Scalar>::discriminate(const Vector<Scalar>& features) {
  return forward(Matrix<Scalar>(features))[0];
}

template <typename Scalar>
Matrix<Scalar> Discriminator<Scalar>::backward(const Vector<Scalar>& dprob, bool accumulate_params) {
  if (acts_.size() != 4 || dprob.size() != raw_prob_.size())
    throw std::logic_error("discriminator backward() without a matching forward()");
  const auto eps = static_cast<Scalar>(kDiscriminatorEps);
  Matrix<Scalar> g(1, dprob.size());
  for (Eigen::Index i = 0; i < dprob.size(); ++i) {
    const Scalar p = raw_prob_[i];
    const bool clamped = p < eps || p > Scalar(1) - eps;
    g(0, i) = clamped ? Scalar(0) : dprob[i] * p * (Scalar(1) - p);
  }
  for (int layer = 3; layer >= 0; --layer) {
    if (accumulate_params) {
      dweights_[layer].noalias() += g * acts_[layer].transpose();
      dbiases_[layer].col(0) += g.rowwise().sum();
    }
    Matrix<Scalar> dx = weights_[layer].transpose() * g;
    if (layer > 0) dx = dx.cwiseProduct((acts_[layer].array() > Scalar(0)).template cast<Scalar>().matrix());
    g = std::move(dx);
  }
  return g;
}

template <typename Scalar>
void Discriminator<Scalar>::zero_grad() {
  for (auto& m : dweights_) m.setZero();
  for (auto& m : dbiases_) m.setZero();
}

template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace aip
