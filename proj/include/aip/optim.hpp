#pragma once

#include "aip/adversarial.hpp"
#include "aip/network.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace aip {

template <typename Scalar>
struct ParamSlot {
  Matrix<Scalar>* value;
  Matrix<Scalar>* grad;
};

template <typename Scalar>
std::vector<ParamSlot<Scalar>> parameter_slots(Network<Scalar>& net) {
  std::vector<ParamSlot<Scalar>> slots;
  for (auto& p : net.params())
    for (std::size_t i = 0; i < p.values.size(); ++i) slots.push_back({&p.values[i], &p.grads[i]});
  return slots;
}

template <typename Scalar>
std::vector<ParamSlot<Scalar>> parameter_slots(Discriminator<Scalar>& d) {
  std::vector<ParamSlot<Scalar>> slots;
  for (std::size_t i = 0; i < d.weights().size(); ++i) {
    slots.push_back({&d.weights()[i], &d.weight_grads()[i]});
    slots.push_back({&d.biases()[i], &d.bias_grads()[i]});
  }
  return slots;
}

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + (g + wd * w);  w <- w - lr * v
/// Velocity buffers are created on the first step; call reset() whenever the
/// parameter shapes change (after pruning).
template <typename Scalar>
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(const std::vector<ParamSlot<Scalar>>& slots, double lr) {
    if (velocity_.empty()) {
      for (const auto& s : slots) velocity_.push_back(Matrix<Scalar>::Zero(s.value->rows(), s.value->cols()));
    }
    if (velocity_.size() != slots.size()) throw std::logic_error("optimizer state does not match parameters");
    const auto mom = static_cast<Scalar>(momentum_);
    const auto wd = static_cast<Scalar>(weight_decay_);
    const auto rate = static_cast<Scalar>(lr);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      Matrix<Scalar>& v = velocity_[i];
      if (v.rows() != slots[i].value->rows() || v.cols() != slots[i].value->cols())
        throw std::logic_error("optimizer state does not match parameters");
      v = mom * v + *slots[i].grad + wd * *slots[i].value;
      *slots[i].value -= rate * v;
    }
  }

  void reset() { velocity_.clear(); }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix<Scalar>> velocity_;
};

/// Divides by 10 at epoch floor(E/2) and again at floor(3E/4); epochs are
/// zero-based.
inline double step_decay_lr(double base, int epoch, int total_epochs) {
  double lr = base;
  if (epoch >= total_epochs / 2) lr /= 10.0;
  if (epoch >= (3 * total_epochs) / 4) lr /= 10.0;
  return lr;
}

/// base * (1 + cos(pi * epoch / E)) / 2.
inline double cosine_lr(double base, int epoch, int total_epochs) {
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

}  // namespace aip
