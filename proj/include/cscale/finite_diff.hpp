#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cscale/error.hpp"

namespace cscale {

// Central-difference gradient estimate of a pure scalar function:
// (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps) per coordinate. The
// independent oracle used to check backprop; keep it free of any autodiff
// machinery.
inline std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                                const std::vector<double>& theta, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite difference step must be > 0");
  std::vector<double> grad(theta.size());
  std::vector<double> probe = theta;
  for (size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + eps;
    const double hi = f(probe);
    probe[i] = theta[i] - eps;
    const double lo = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      throw ContractError("finite difference probe returned a non-finite value at coordinate " + std::to_string(i));
    }
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

}  // namespace cscale
