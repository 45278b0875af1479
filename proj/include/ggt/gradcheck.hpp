#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggt/tensor.hpp"

namespace ggt {

/// Central-difference check of an analytic gradient, 64-bit only.
/// `eval` must recompute the scalar objective from the current contents of
/// `params`; `analytic` holds one gradient tensor per parameter tensor, in the
/// same order and shape. Returns max over all entries of
/// |analytic - central_difference| / max(1, |central_difference|).
inline double gradient_check(const std::vector<Tensor<double>*>& params,
                             const std::vector<const Tensor<double>*>& analytic,
                             const std::function<double()>& eval, double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw std::invalid_argument("gradient_check: epsilon must be in [1e-7, 1e-3], got " + std::to_string(epsilon));
  }
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("gradient_check: " + std::to_string(params.size()) + " parameter tensors vs " +
                                std::to_string(analytic.size()) + " gradient tensors");
  }
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<double>& p = *params[t];
    const Tensor<double>& a = *analytic[t];
    if (p.shape != a.shape) {
      throw std::invalid_argument("gradient_check: parameter " + std::to_string(t) + " shape " +
                                  shape_str(p.shape) + " vs gradient shape " + shape_str(a.shape));
    }
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + epsilon;
      const double up = eval();
      p.data[i] = saved - epsilon;
      const double down = eval();
      p.data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw std::runtime_error("gradient_check: non-finite objective at parameter tensor " + std::to_string(t) +
                                 " entry " + std::to_string(i));
      }
      const double fd = (up - down) / (2.0 * epsilon);
      const double err = std::abs(a.data[i] - fd) / std::max(1.0, std::abs(fd));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

}  // namespace ggt
