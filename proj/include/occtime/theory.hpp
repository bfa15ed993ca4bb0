#pragma once

// Limit variances of the occupation time for the slow-bond family, the
// Robin correction kernel F_alpha, small-box kernel pairs of the three
// limiting semigroups, and Fourier-mode covariances of the equilibrium
// Ornstein-Uhlenbeck field.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "occtime/error.hpp"
#include "occtime/quadrature.hpp"
#include "occtime/special.hpp"

namespace occtime::theory {

inline double chi(double rho) noexcept { return rho * (1.0 - rho); }

/// (4/3) chi / sqrt(pi) t^{3/2}: transparent slow bond (beta < 1).
inline double var_gamma_heat(double t, double rho) {
  if (!(t >= 0.0)) throw ValidationError("time must be >= 0");
  return 4.0 / 3.0 * chi(rho) * std::numbers::inv_sqrtpi * t * std::sqrt(t);
}

/// Twice the heat variance: disconnecting slow bond (beta > 1).
inline double var_gamma_neumann(double t, double rho) { return 2.0 * var_gamma_heat(t, rho); }

/// Small-box limits of the kernel pairs at time t.
inline double heat_kernel_diagonal(double t) { return 1.0 / std::sqrt(4.0 * std::numbers::pi * t); }

namespace detail {

inline void check_alpha_t(double alpha, double t) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be > 0");
  if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("t must be > 0");
}

// Truncation point for half-line integrals with a Gaussian factor of
// variance 2t and an exponential factor of rate 2 alpha: beyond it either
// factor alone is below e^-40.
inline double half_line_cutoff(double alpha, double t) { return std::min(20.0 * std::sqrt(t), 20.0 / alpha); }

}  // namespace detail

/// F_alpha(t) = (1/2t) int_0^inf z exp(-z^2/4t - 2 alpha z) dz by adaptive
/// quadrature on the truncated half line; the tail bound is recorded.
inline QuadResult f_alpha(double alpha, double t, const QuadratureSpec& q = {}) {
  detail::check_alpha_t(alpha, t);
  const double zmax = detail::half_line_cutoff(alpha, t);
  auto integrand = [=](double z) { return z * std::exp(-z * z / (4.0 * t) - 2.0 * alpha * z) / (2.0 * t); };
  QuadResult r = integrate(integrand, 0.0, zmax, q, "F_alpha");
  const double gauss_tail = std::exp(-zmax * zmax / (4.0 * t));
  const double exp_tail = std::exp(-2.0 * alpha * zmax) * (zmax / (2.0 * alpha) + 1.0 / (4.0 * alpha * alpha)) / (2.0 * t);
  r.tail_bound = std::min(gauss_tail, exp_tail);
  return r;
}

/// Closed form of F_alpha(t) = 1 - 2 alpha sqrt(pi t) exp(4 alpha^2 t) erfc(2 alpha sqrt t).
inline double f_alpha_closed(double alpha, double t) {
  detail::check_alpha_t(alpha, t);
  return one_minus_sqrtpi_x_erfcx(2.0 * alpha * std::sqrt(t));
}

/// Robin-regime (beta = 1) variance
///   heat(t) + 2 chi int_0^t (t-u) F_alpha(u) / sqrt(4 pi u) du,
/// the double time integral reduced to one dimension; u = v^2 removes the
/// 1/sqrt(u) singularity.
inline QuadResult var_gamma_robin(double alpha, double t, double rho, const QuadratureSpec& q = {}) {
  if (!(alpha > 0.0)) throw ValidationError("alpha must be > 0");
  if (!(t >= 0.0)) throw ValidationError("time must be >= 0");
  if (t == 0.0) return {};
  auto integrand = [=](double v) {
    const double u = v * v;
    return u > 0.0 ? (t - u) * f_alpha_closed(alpha, u) : t;
  };
  QuadResult r = integrate(integrand, 0.0, std::sqrt(t), q, "Robin variance");
  const double scale = 2.0 * chi(rho) * std::numbers::inv_sqrtpi;
  return {var_gamma_heat(t, rho) + scale * r.value, scale * r.error, 0.0};
}

/// eps^-2 int_0^eps int_0^eps (4 pi t)^{-1/2} exp(-(x-y)^2/4t) dx dy, reduced
/// along the diagonal to 2 int_0^eps (eps - d) g(d) dd.
inline QuadResult kernel_pair_heat(double eps, double t, const QuadratureSpec& q = {}) {
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("box width eps must lie in (0,1)");
  if (!(t > 0.0)) throw ValidationError("t must be > 0");
  // d = eps s puts the integral on [0,1] and cancels the eps^-2.
  const double norm = heat_kernel_diagonal(t);
  auto integrand = [=](double s) { return 2.0 * (1.0 - s) * std::exp(-eps * eps * s * s / (4.0 * t)); };
  QuadResult r = integrate(integrand, 0.0, 1.0, q, "heat kernel pair");
  return {norm * r.value, norm * r.error, 0.0};
}

/// Image-charge term eps^-2 int int (4 pi t)^{-1/2} exp(-(x+y)^2/4t) over the box.
inline QuadResult kernel_pair_mirror(double eps, double t, const QuadratureSpec& q = {}) {
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("box width eps must lie in (0,1)");
  if (!(t > 0.0)) throw ValidationError("t must be > 0");
  const double norm = heat_kernel_diagonal(t);
  const double e2 = eps * eps;
  auto rising = [=](double s) { return s * std::exp(-e2 * s * s / (4.0 * t)); };
  auto falling = [=](double s) { return (2.0 - s) * std::exp(-e2 * s * s / (4.0 * t)); };
  QuadResult a = integrate(rising, 0.0, 1.0, q, "mirror kernel pair");
  QuadResult b = integrate(falling, 1.0, 2.0, q, "mirror kernel pair");
  return {norm * (a.value + b.value), norm * (a.error + b.error), 0.0};
}

/// Reflected (Neumann) kernel pair: direct plus mirror term.
inline QuadResult kernel_pair_neumann(double eps, double t, const QuadratureSpec& q = {}) {
  const QuadResult direct = kernel_pair_heat(eps, t, q);
  const QuadResult mirror = kernel_pair_mirror(eps, t, q);
  return {direct.value + mirror.value, direct.error + mirror.error, 0.0};
}

/// Robin (beta = 1) kernel pair
///   (4 pi t)^{-1/2} (eps^-2 int int exp(-(x-y)^2/4t) + S(eps)/eps^2),
///   S(eps) = int_0^eps e^{2 alpha x}/2 int_x^inf e^{-2 alpha z} int_0^eps
///            [ (z-y+4 alpha t)/(2t) e^{-(z-y)^2/4t}
///            + (z+y-4 alpha t)/(2t) e^{-(z+y)^2/4t} ] dy dz dx,
/// by nested quadrature with w = z - x on a truncated half line.
inline QuadResult kernel_pair_robin(double eps, double alpha, double t, const QuadratureSpec& q = {}) {
  detail::check_alpha_t(alpha, t);
  const QuadResult direct = kernel_pair_heat(eps, t, q);

  // The 4 alpha t terms combine into 2 alpha e_m (1 - e^{-zy/t}) >= 0, which
  // avoids cancelling two large terms when alpha t is big.
  auto bracket = [=](double z, double y) {
    const double dm = z - y;
    const double dp = z + y;
    const double em = std::exp(-dm * dm / (4.0 * t));
    const double ep = std::exp(-dp * dp / (4.0 * t));
    return (dm * em + dp * ep) / (2.0 * t) - 2.0 * alpha * em * std::expm1(-z * y / t);
  };
  const double wmax = std::min(20.0 * std::sqrt(t) + 2.0 * eps, 20.0 / alpha);
  const QuadratureSpec inner = q;
  double inner_err = 0.0;

  // The box variables x and y are integrated on [0,1] after scaling by eps.
  auto over_y = [&](double z) {
    QuadResult r = integrate([&](double s) { return bracket(z, eps * s); }, 0.0, 1.0, inner, "Robin kernel (y)");
    inner_err = std::max(inner_err, eps * r.error);
    return eps * r.value;
  };
  auto over_w = [&](double x) {
    QuadResult r = integrate([&](double w) { return std::exp(-2.0 * alpha * w) * over_y(x + w); }, 0.0, wmax, inner,
                             "Robin kernel (z)");
    inner_err = std::max(inner_err, r.error);
    return 0.5 * r.value;
  };
  QuadResult s = integrate([&](double u) { return over_w(eps * u); }, 0.0, 1.0, q, "Robin kernel (x)");
  s.value *= eps;
  s.error *= eps;

  // |bracket| <= M on the whole domain; tails beyond wmax are cut by either factor.
  const double m_bound = 2.0 * (std::exp(-0.5) / std::sqrt(2.0 * t) + 2.0 * alpha);
  const double exp_tail = 0.5 * eps * eps * m_bound * std::exp(-2.0 * alpha * wmax) / (2.0 * alpha);
  const double u0 = std::max(0.0, wmax - eps);
  const double gauss_tail =
      eps * eps * (std::exp(-u0 * u0 / (4.0 * t)) + 2.0 * alpha * std::sqrt(std::numbers::pi * t) * std::erfc(u0 / (2.0 * std::sqrt(t))));

  const double norm = heat_kernel_diagonal(t) / (eps * eps);
  QuadResult out;
  out.value = direct.value + norm * s.value;
  out.error = direct.error + norm * (s.error + eps * wmax * inner_err);
  out.tail_bound = norm * std::min(exp_tail, gauss_tail);
  return out;
}

/// Covariance chi e^{-(1+2 b rho)(2 pi k)^2 t} of the unit-normalized k-th
/// Fourier mode of the equilibrium field on the torus with W the identity.
inline double ou_mode_covariance(int k, double t, double rho, double b) {
  if (k < 0) throw ValidationError("mode index must be >= 0");
  if (!(b > -0.5)) throw ValidationError("interaction strength b must satisfy b > -1/2");
  if (!(t >= 0.0)) throw ValidationError("time must be >= 0");
  const double omega = 2.0 * std::numbers::pi * static_cast<double>(k);
  return chi(rho) * std::exp(-(1.0 + 2.0 * b * rho) * omega * omega * t);
}

}  // namespace occtime::theory
