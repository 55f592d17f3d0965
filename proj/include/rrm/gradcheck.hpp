#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "rrm/autodiff.hpp"

namespace rrm::ad {

/// Compares the analytic gradient of a scalar-valued function against central
/// finite differences. Returns the max over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
inline double check_gradient(const std::function<NodePtr(const NodePtr&)>& f,
                             const Tensor& x, double step = 1e-5) {
  NodePtr input = leaf(x);
  NodePtr out = f(input);
  if (out->value.numel() != 1) {
    throw ContractError(rrm::detail::msg(
        "check_gradient: f must return a scalar, got ", shape_str(out->value)));
  }
  backward(out);
  const Tensor analytic = input->grad;

  double max_rel = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    const double fp = f(leaf(xp))->value.item();
    const double fm = f(leaf(xm))->value.item();
    const double numeric = (fp - fm) / (2.0 * step);
    const double rel = std::abs(analytic[i] - numeric) /
                       std::max(1.0, std::abs(analytic[i]));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace rrm::ad
