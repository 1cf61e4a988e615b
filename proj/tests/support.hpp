#pragma once

#include <cmath>
#include <functional>

#include "wdis/nn.hpp"

namespace wdis::testing {

// Central differences over every entry of `params`, compared against the
// analytic gradient by the norm of the difference relative to the larger norm.
inline double gradient_relative_error(nn::ParameterSet<double>& params, const nn::ParameterSet<double>& analytic,
                                      const std::function<double()>& f, double h = 1e-6) {
  double diff = 0, norm_a = 0, norm_n = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p].value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = f();
      value[i] = saved - h;
      const double down = f();
      value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[p].value[i];
      diff += (a - numeric) * (a - numeric);
      norm_a += a * a;
      norm_n += numeric * numeric;
    }
  }
  const double scale = std::max(std::sqrt(norm_a), std::sqrt(norm_n));
  return scale == 0 ? 0 : std::sqrt(diff) / scale;
}

}  // namespace wdis::testing
