#pragma once

#include <cmath>
#include <limits>
#include <numbers>

namespace occtime {

inline constexpr double kSqrtPi = 1.772453850905516027298167483341145183;

namespace detail {

// exp(x*x) with the rounding error of x*x folded back in through fma, so the
// result stays accurate to a few ulps even when x*x is large.
inline double exp_square(double x) noexcept {
  const double hi = x * x;
  const double lo = std::fma(x, x, -hi);
  return std::exp(hi) * (1.0 + lo);
}

// Continued fraction tail for x >= kCfThreshold:
//   erfcx(x) = (1/sqrt(pi)) / (x + r(x)),
//   r(x) = (1/2) / (x + 1 / (x + (3/2) / (x + 2 / (x + ...))))
// evaluated bottom-up with a depth that converges to double precision.
inline double erfcx_cf_remainder(double x) noexcept {
  const int depth = x > 50.0 ? 12 : (x > 10.0 ? 40 : 120);
  double r = 0.0;
  for (int k = depth; k >= 1; --k) r = (0.5 * k) / (x + r);
  return r;
}

inline constexpr double kCfThreshold = 4.0;

}  // namespace detail

/// Scaled complementary error function exp(x^2) erfc(x), for x >= 0 without
/// overflow or underflow; negative x falls back to the direct formula.
inline double erfcx(double x) noexcept {
  if (std::isnan(x)) return x;
  if (x < detail::kCfThreshold) return detail::exp_square(x) * std::erfc(x);
  return std::numbers::inv_sqrtpi / (x + detail::erfcx_cf_remainder(x));
}

/// 1 - sqrt(pi) x erfcx(x) for x >= 0, free of cancellation for large x.
inline double one_minus_sqrtpi_x_erfcx(double x) noexcept {
  if (x < detail::kCfThreshold) return 1.0 - kSqrtPi * x * erfcx(x);
  const double r = detail::erfcx_cf_remainder(x);
  return r / (x + r);
}

}  // namespace occtime
