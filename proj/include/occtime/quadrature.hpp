#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "occtime/error.hpp"

namespace occtime {

/// Tolerances for adaptive Gauss-Kronrod on finite intervals. A result is
/// accepted when its error estimate is below max(abs_tol, rel_tol |value|).
struct QuadratureSpec {
  double abs_tol = 1e-14;
  double rel_tol = 1e-12;
  unsigned max_depth = 20;

  QuadratureSpec halved() const { return {abs_tol / 2, rel_tol / 2, max_depth + 1}; }
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;       ///< quadrature error estimate
  double tail_bound = 0.0;  ///< analytic bound on a truncated half-line tail

  double total_error() const noexcept { return error + tail_bound; }
};

/// Adaptive 31-point Gauss-Kronrod on [a, b].
template <class F>
QuadResult integrate(F&& f, double a, double b, const QuadratureSpec& q, const char* what = "integral") {
  if (!(q.abs_tol > 0.0 && q.rel_tol > 0.0)) throw ValidationError("quadrature tolerances must be > 0");
  if (a == b) return {};
  double err = 0.0;
  double l1 = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, q.max_depth, q.rel_tol, &err, &l1);
  if (!std::isfinite(value) || err > std::max(q.abs_tol, q.rel_tol * std::abs(value))) {
    throw QuadratureError(std::string(what) + ": tolerance not reached on [" + std::to_string(a) + ", " +
                              std::to_string(b) + "]",
                          err);
  }
  return {value, err, 0.0};
}

}  // namespace occtime
