#pragma once

// Central-difference gradient oracle. It only perturbs values and re-runs the
// forward function, so it never touches a backward rule.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "prqa/tensor.hpp"

namespace prqa::testing {

inline std::vector<double> numeric_gradient(Tensor param,
                                            const std::function<double()>& forward,
                                            double h = 1e-5) {
  std::vector<double> grad(param.size());
  auto values = param.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = forward();
    values[i] = saved - h;
    const double down = forward();
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is ~0 from being judged on round-off noise alone.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace prqa::testing
