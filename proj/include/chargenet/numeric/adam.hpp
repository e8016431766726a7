#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "chargenet/numeric/tensor.hpp"

namespace chargenet {

/// First/second moment buffers for a fixed, ordered list of parameters.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 0.005;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;

  explicit AdamState(std::span<Tensor* const> params, double lr = 0.005) : learning_rate(lr) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor* p : params) {
      m.emplace_back(p->size(), 0.0);
      v.emplace_back(p->size(), 0.0);
    }
  }
};

/// One Adam update over `params` with the bias-corrected moments. Every
/// parameter must carry a gradient of its own shape.
inline void adam_step(std::span<Tensor* const> params, AdamState& state) {
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state was built for " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = *params[i];
    if (!p.has_grad()) throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    if (state.m[i].size() != p.size()) throw ContractError("adam_step: moment shape mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.data[k] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

/// Learning rate for a zero-based epoch under "halve every `period`
/// epochs": initial * 0.5^floor((epoch + offset) / period). offset = 0
/// keeps epochs 0 and 1 at the initial rate; offset = 1 halves from epoch 1.
inline double scheduled_learning_rate(double initial, std::size_t epoch, std::size_t period = 2,
                                      std::size_t offset = 0) {
  if (period == 0) return initial;
  return initial * std::pow(0.5, static_cast<double>((epoch + offset) / period));
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(std::span<Tensor* const> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor* p : params)
    for (double g : p->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor* p : params)
      for (double& g : p->grad) g *= s;
  }
  return norm;
}

}  // namespace chargenet
