#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "chargenet/data/dataset.hpp"
#include "chargenet/model/config.hpp"
#include "chargenet/numeric/ops.hpp"

namespace chargenet {

inline constexpr double kProbabilityClamp = 1e-12;

namespace detail {

inline void check_labels(std::size_t n, const LabelVector& y) {
  if (y.size() != n)
    throw DimensionError("loss: " + std::to_string(n) + " outputs vs " + std::to_string(y.size()) + " labels");
  if (std::none_of(y.begin(), y.end(), [](std::uint8_t v) { return v != 0; }))
    throw ContractError("loss: label vector has no positive entry");
}

inline double clamp_prob(double o) { return std::clamp(o, kProbabilityClamp, 1.0 - kProbabilityClamp); }

}  // namespace detail

/// Multi-label negative log-likelihood of probabilities `o` against a
/// multi-hot `y`, with o clamped to [1e-12, 1 - 1e-12].
///   positive_only: -sum_l y_l log o_l
///   bce:   -sum_l [y_l log o_l + (1 - y_l) log(1 - o_l)]
inline double loss_value(std::span<const double> o, const LabelVector& y, LossVariant variant) {
  detail::check_labels(o.size(), y);
  double s = 0.0;
  for (std::size_t l = 0; l < o.size(); ++l) {
    const double p = detail::clamp_prob(o[l]);
    if (y[l]) s -= std::log(p);
    else if (variant == LossVariant::kBce) s -= std::log(1.0 - p);
  }
  return s;
}

/// Differentiable form of loss_value(). The clamp has zero derivative
/// outside its interior.
inline Var multilabel_loss(Var probs, const LabelVector& y, LossVariant variant) {
  const auto& o = probs.value().data;
  const double v = loss_value(o, y, variant);
  return probs.tape->op(
      Tensor::scalar(v), {probs},
      [probs, y, variant](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const auto& o = t.value(probs.id).data;
        auto& go = t.grad_buffer(probs.id);
        for (std::size_t l = 0; l < o.size(); ++l) {
          if (o[l] < kProbabilityClamp || o[l] > 1.0 - kProbabilityClamp) continue;
          if (y[l]) go[l] -= g / o[l];
          else if (variant == LossVariant::kBce) go[l] += g / (1.0 - o[l]);
        }
      },
      "multilabel_loss");
}

/// Labels with o_l >= threshold; if none qualifies, the argmax label
/// (lowest index on ties).
inline LabelVector predict(std::span<const double> o, double threshold = 0.5) {
  LabelVector out(o.size(), 0);
  bool any = false;
  for (std::size_t l = 0; l < o.size(); ++l)
    if (o[l] >= threshold) {
      out[l] = 1;
      any = true;
    }
  if (!any && !o.empty()) out[static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin())] = 1;
  return out;
}

}  // namespace chargenet
