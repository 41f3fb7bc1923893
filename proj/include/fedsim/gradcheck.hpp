#pragma once

#include <cmath>
#include <functional>

#include "fedsim/adam.hpp"

namespace fedsim {

// Central-difference verification of a hand-derived gradient. Returns the
// maximum over all coordinates of
//   |central_difference - analytic| / max(1, |analytic|).
// The function value must stay finite at every probe point.
inline double finite_diff_check(const std::function<double(const ParamSet&)>& f,
                                ParamSet params, const GradMap& analytic, double h) {
  if (h <= 0.0) throw StructuralError("finite_diff_check: h must be positive");
  double worst = 0.0;
  for (const auto& [name, grad] : analytic) {
    Matrix& value = params.at(name);
    check_same_shape(value, grad, "analytic gradient for " + name);
    for (size_t k = 0; k < value.a.size(); ++k) {
      const double saved = value.a[k];
      value.a[k] = saved + h;
      const double fp = f(params);
      value.a[k] = saved - h;
      const double fm = f(params);
      value.a[k] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_diff_check: non-finite function value at " + name);
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(fd - grad.a[k]) / std::max(1.0, std::abs(grad.a[k]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace fedsim
