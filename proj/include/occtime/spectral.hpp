#pragma once

// Finite-volume realization of the generalized Laplacian d/du d/dW on the
// torus. With xi_x = 1/(n (W((x+1)/n) - W(x/n))),
//   (L h)(x) = n^2 [ xi_x (h(x+1) - h(x)) - xi_{x-1} (h(x) - h(x-1)) ],
// i.e. n^2 times the generator of a single random walk with the simulated
// conductances. The matrix is symmetric, so its eigenvectors are orthogonal
// for the uniform inner product <f,g> = n^-1 sum f g.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "occtime/error.hpp"
#include "occtime/model.hpp"

namespace occtime::spectral {

inline constexpr std::size_t kDefaultSizeCap = 4096;

/// Periodic tridiagonal operator: diag[x] on the diagonal, off[x] coupling x
/// and x+1 (off[n-1] couples n-1 and 0).
class DiscreteLw {
public:
  DiscreteLw(std::vector<double> diag, std::vector<double> off) : diag_(std::move(diag)), off_(std::move(off)) {}

  std::size_t n() const noexcept { return diag_.size(); }
  const std::vector<double>& diag() const noexcept { return diag_; }
  const std::vector<double>& off() const noexcept { return off_; }

  std::vector<double> apply(const std::vector<double>& h) const {
    const std::size_t n = this->n();
    if (h.size() != n) throw ValidationError("grid function length does not match operator");
    std::vector<double> out(n);
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t right = x + 1 == n ? 0 : x + 1;
      const std::size_t left = x == 0 ? n - 1 : x - 1;
      out[x] = diag_[x] * h[x] + off_[x] * h[right] + off_[left] * h[left];
    }
    return out;
  }

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(this->n());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index x = 0; x < n; ++x) {
      const Eigen::Index right = x + 1 == n ? 0 : x + 1;
      m(x, x) += diag_[static_cast<std::size_t>(x)];
      m(x, right) += off_[static_cast<std::size_t>(x)];
      m(right, x) += off_[static_cast<std::size_t>(x)];
    }
    return m;
  }

private:
  std::vector<double> diag_;
  std::vector<double> off_;
};

inline DiscreteLw assemble(const WSamples& w) {
  const std::size_t n = w.n();
  if (n < 3) throw ValidationError("operator needs n >= 3 grid points");
  const double nn = static_cast<double>(n);
  std::vector<double> cond(n);
  for (std::size_t x = 0; x < n; ++x) cond[x] = nn / w.increment(x);  // n^2 xi_x
  std::vector<double> diag(n);
  for (std::size_t x = 0; x < n; ++x) diag[x] = -(cond[x] + cond[x == 0 ? n - 1 : x - 1]);
  return DiscreteLw(std::move(diag), std::move(cond));
}

/// Eigenpairs of -L: mu ascending, phi_k orthonormal for the uniform inner
/// product (so phi_0 = 1).
class SpectralDecomposition {
public:
  SpectralDecomposition(std::vector<double> mu, Eigen::MatrixXd phi) : mu_(std::move(mu)), phi_(std::move(phi)) {}

  std::size_t n() const noexcept { return mu_.size(); }
  const std::vector<double>& eigenvalues() const noexcept { return mu_; }
  /// Column k holds phi_k on the grid.
  const Eigen::MatrixXd& eigenvectors() const noexcept { return phi_; }
  double phi(std::size_t k, std::size_t x) const noexcept {
    return phi_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(k));
  }

  /// max |<phi_j, phi_k> - delta_jk| under the uniform inner product.
  double orthonormality_residual() const {
    const double n = static_cast<double>(this->n());
    Eigen::MatrixXd gram = phi_.transpose() * phi_ / n;
    gram -= Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
    return gram.cwiseAbs().maxCoeff();
  }

private:
  std::vector<double> mu_;
  Eigen::MatrixXd phi_;
};

inline SpectralDecomposition decompose(const DiscreteLw& op, std::size_t size_cap = kDefaultSizeCap) {
  const std::size_t n = op.n();
  if (n > size_cap) {
    throw ValidationError("dense eigensolve limited to n <= " + std::to_string(size_cap) + ", got " + std::to_string(n));
  }
  const Eigen::MatrixXd neg = -op.dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(neg);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("symmetric eigensolver did not converge for n = " + std::to_string(n));
  }
  const Eigen::VectorXd& values = solver.eigenvalues();
  std::vector<double> mu(values.data(), values.data() + values.size());
  Eigen::MatrixXd phi = solver.eigenvectors() * std::sqrt(static_cast<double>(n));
  // Fix the sign of the constant mode so that phi_0 = +1.
  if (phi.col(0).sum() < 0.0) phi.col(0) *= -1.0;

  const double scale = std::max(1.0, std::abs(mu.back()));
  const double residual = (neg * phi - phi * values.asDiagonal()).cwiseAbs().maxCoeff() / std::sqrt(static_cast<double>(n));
  if (std::abs(mu.front()) > 1e-10 * scale || mu.front() < -1e-10 * scale) {
    throw NumericalError("lowest eigenvalue " + std::to_string(mu.front()) + " is not zero; eigen residual " +
                         std::to_string(residual));
  }
  if (residual > 1e-8 * scale) {
    throw NumericalError("eigenpair residual " + std::to_string(residual) + " too large");
  }
  mu.front() = 0.0;  // constants span the kernel exactly
  return SpectralDecomposition(std::move(mu), std::move(phi));
}

/// P_t h = sum_k exp(-c' mu_k t) <h, phi_k> phi_k.
inline std::vector<double> semigroup_apply(const SpectralDecomposition& dec, const std::vector<double>& h, double t,
                                           double c_prime) {
  if (!(t >= 0.0)) throw ValidationError("time must be >= 0");
  const auto n = static_cast<Eigen::Index>(dec.n());
  if (static_cast<Eigen::Index>(h.size()) != n) throw ValidationError("grid function length does not match");
  const Eigen::Map<const Eigen::VectorXd> hv(h.data(), n);
  Eigen::VectorXd coeff = dec.eigenvectors().transpose() * hv / static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) coeff(k) *= std::exp(-c_prime * dec.eigenvalues()[static_cast<std::size_t>(k)] * t);
  Eigen::VectorXd out = dec.eigenvectors() * coeff;
  return {out.data(), out.data() + n};
}

/// Density of P_t at (site, site) with respect to the uniform measure:
/// sum_k exp(-c' mu_k t) phi_k(site)^2.
inline double kernel_at_origin(const SpectralDecomposition& dec, double t, double c_prime, std::size_t site = 0) {
  if (!(t > 0.0)) throw ValidationError("kernel needs t > 0");
  double sum = 0.0;
  for (std::size_t k = dec.n(); k-- > 0;) {
    const double p = dec.phi(k, site);
    sum += std::exp(-c_prime * dec.eigenvalues()[k] * t) * p * p;
  }
  return sum;
}

/// int_0^t (t - u) e^{-lambda u} du = (e^{-lambda t} - 1 + lambda t) / lambda^2,
/// by its Taylor series when |lambda t| < 1e-4.
inline double mode_time_integral(double lambda, double t) {
  const double x = lambda * t;
  if (std::abs(x) < 1e-4) {
    // t^2 (1/2 - x/6 + x^2/24 - x^3/120)
    return t * t * (0.5 - x / 6.0 + x * x / 24.0 - x * x * x / 120.0);
  }
  return (std::expm1(-x) + x) / (lambda * lambda);
}

/// 2 chi sum_k phi_k(site)^2 g(c' mu_k, t): the occupation-time variance of
/// the discretized Ornstein-Uhlenbeck limit. The k = 0 term alone equals chi t^2.
inline double var_gamma_spectral(const SpectralDecomposition& dec, double t, double rho, double b,
                                 std::size_t site = 0) {
  const ModelParams params(rho, b);
  if (!(t >= 0.0)) throw ValidationError("time must be >= 0");
  if (t == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t k = dec.n(); k-- > 0;) {
    const double p = dec.phi(k, site);
    sum += p * p * mode_time_integral(params.c_prime() * dec.eigenvalues()[k], t);
  }
  return 2.0 * params.chi() * sum;
}

}  // namespace occtime::spectral
