#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "occtime/spectral.hpp"

using namespace occtime;
using namespace occtime::spectral;

namespace {

WSamples sin2_w(std::size_t n, double amp = 0.3) {
  return WSamples::from_function(
      [amp](double u) { return u + amp * std::sin(std::numbers::pi * u) * std::sin(std::numbers::pi * u) / std::numbers::pi; },
      n);
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

double uniform_norm_sq(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST(Operator, ConstantsInKernel) {
  for (const auto& w : {WSamples::identity(16), sin2_w(16)}) {
    const auto op = assemble(w);
    for (double v : op.apply(std::vector<double>(16, 2.5))) EXPECT_NEAR(v, 0.0, 1e-10);
  }
}

TEST(Operator, IdentityStencil) {
  const auto op = assemble(WSamples::identity(8));
  for (double d : op.diag()) EXPECT_DOUBLE_EQ(d, -128.0);
  for (double o : op.off()) EXPECT_DOUBLE_EQ(o, 64.0);
}

TEST(Operator, Symmetric) {
  const auto m = assemble(sin2_w(12)).dense();
  EXPECT_EQ((m - m.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Operator, ApplyMatchesDense) {
  const auto op = assemble(sin2_w(10));
  const auto h = random_vector(10, 3);
  const auto a = op.apply(h);
  const Eigen::VectorXd b = op.dense() * Eigen::Map<const Eigen::VectorXd>(h.data(), 10);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(a[i], b(i), 1e-10);
}

TEST(Operator, TooSmallRejected) {
  EXPECT_THROW(assemble(WSamples::identity(2)), ValidationError);
}

TEST(Decompose, SmallIdentityExample) {
  const auto dec = decompose(assemble(WSamples::identity(4)));
  const auto& mu = dec.eigenvalues();
  ASSERT_EQ(mu.size(), 4u);
  EXPECT_NEAR(mu[0], 0.0, 1e-12);
  EXPECT_NEAR(mu[1], 32.0, 1e-12);
  EXPECT_NEAR(mu[2], 32.0, 1e-12);
  EXPECT_NEAR(mu[3], 64.0, 1e-12);
  for (std::size_t x = 0; x < 4; ++x) EXPECT_NEAR(dec.phi(0, x), 1.0, 1e-12);
}

TEST(Decompose, IdentityClosedFormSpectrum) {
  const std::size_t n = 64;
  const auto dec = decompose(assemble(WSamples::identity(n)));
  std::vector<double> expect;
  for (std::size_t k = 0; k < n; ++k) {
    expect.push_back(2.0 * n * n * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / n)));
  }
  std::sort(expect.begin(), expect.end());
  for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(dec.eigenvalues()[k], expect[k], 1e-9 * expect.back());
  // Nonzero modes come in degenerate pairs, except k = n/2.
  for (std::size_t k = 1; k + 1 < n; k += 2) EXPECT_NEAR(dec.eigenvalues()[k], dec.eigenvalues()[k + 1], 1e-8 * expect.back());
}

TEST(Decompose, LowModesConvergeToContinuum) {
  const auto coarse = decompose(assemble(WSamples::identity(64)));
  const auto fine = decompose(assemble(WSamples::identity(256)));
  for (int k = 1; k <= 3; ++k) {
    const double target = std::pow(2.0 * std::numbers::pi * k, 2);
    const double ec = std::abs(coarse.eigenvalues()[2 * k] - target);
    const double ef = std::abs(fine.eigenvalues()[2 * k] - target);
    EXPECT_LT(ef / target, 1e-3);
    EXPECT_LT(ef, ec / 10.0);
  }
}

TEST(Decompose, OrthonormalAndCompleteAtSite) {
  for (const auto& w : {WSamples::identity(16), sin2_w(16), sin2_w(33, 0.1)}) {
    const auto dec = decompose(assemble(w));
    EXPECT_LT(dec.orthonormality_residual(), 1e-10);
    for (std::size_t site : {std::size_t{0}, std::size_t{5}}) {
      double s = 0;
      for (std::size_t k = 0; k < dec.n(); ++k) s += dec.phi(k, site) * dec.phi(k, site);
      EXPECT_NEAR(s, static_cast<double>(dec.n()), 1e-9 * static_cast<double>(dec.n()));
    }
    EXPECT_GE(dec.eigenvalues()[1], 0.0);
  }
}

TEST(Decompose, SizeCap) {
  const auto op = assemble(WSamples::identity(32));
  EXPECT_THROW(decompose(op, 16), ValidationError);
  EXPECT_NO_THROW(decompose(op, 32));
}

TEST(Semigroup, TimeZeroIsIdentity) {
  const auto dec = decompose(assemble(sin2_w(20)));
  const auto h = random_vector(20, 1);
  const auto out = semigroup_apply(dec, h, 0.0, 1.0);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(out[i], h[i], 1e-12);
}

TEST(Semigroup, ConstantsPreservedAndMassConserved) {
  const auto dec = decompose(assemble(sin2_w(20)));
  for (double v : semigroup_apply(dec, std::vector<double>(20, 3.0), 0.7, 1.5)) EXPECT_NEAR(v, 3.0, 1e-12);
  const auto h = random_vector(20, 2);
  const auto out = semigroup_apply(dec, h, 0.01, 1.0);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    a += h[i];
    b += out[i];
  }
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(Semigroup, SemigroupProperty) {
  const auto dec = decompose(assemble(sin2_w(24)));
  const auto h = random_vector(24, 4);
  const auto once = semigroup_apply(dec, h, 0.003 + 0.005, 1.2);
  const auto twice = semigroup_apply(dec, semigroup_apply(dec, h, 0.003, 1.2), 0.005, 1.2);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-9);
}

TEST(Semigroup, Nonexpansive) {
  const auto dec = decompose(assemble(sin2_w(24)));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto h = random_vector(24, seed);
    for (double t : {1e-4, 1e-3, 1e-2}) EXPECT_LE(uniform_norm_sq(semigroup_apply(dec, h, t, 1.0)), uniform_norm_sq(h) * (1 + 1e-12));
  }
}

TEST(Semigroup, AgreesWithMatrixExponential) {
  const auto op = assemble(sin2_w(8));
  const auto dec = decompose(op);
  const auto h = random_vector(8, 9);
  const double t = 0.004;
  const Eigen::MatrixXd e = (op.dense() * (1.3 * t)).exp();
  const Eigen::VectorXd ref = e * Eigen::Map<const Eigen::VectorXd>(h.data(), 8);
  const auto out = semigroup_apply(dec, h, t, 1.3);
  for (int i = 0; i < 8; ++i) EXPECT_NEAR(out[i], ref(i), 1e-10);
}

TEST(Kernel, LongTimeLimitAndMonotone) {
  const auto dec = decompose(assemble(sin2_w(32)));
  EXPECT_NEAR(kernel_at_origin(dec, 100.0, 1.0), 1.0, 1e-12);
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 1e-4; t < 1.0; t *= 2) {
    const double k = kernel_at_origin(dec, t, 1.0);
    EXPECT_LE(k, prev);
    EXPECT_GE(k, 1.0 - 1e-12);
    prev = k;
  }
  EXPECT_THROW(kernel_at_origin(dec, 0.0, 1.0), ValidationError);
}

TEST(Kernel, IdentityMatchesHeatKernelForModerateTime) {
  // Short times after the lattice scale: the periodic heat kernel with images.
  const auto dec = decompose(assemble(WSamples::identity(512)));
  const double t = 0.01;
  double ref = 0;
  for (int m = -5; m <= 5; ++m) ref += std::exp(-static_cast<double>(m * m) / (4 * t)) / std::sqrt(4 * std::numbers::pi * t);
  EXPECT_NEAR(kernel_at_origin(dec, t, 1.0) / ref, 1.0, 1e-3);
}

TEST(VarSpectral, EdgeCasesAndContinuity) {
  const auto dec = decompose(assemble(sin2_w(16)));
  EXPECT_EQ(var_gamma_spectral(dec, 0.0, 0.5, 0.0), 0.0);
  EXPECT_EQ(var_gamma_spectral(dec, 0.3, 0.0, 0.0), 0.0);
  EXPECT_THROW(var_gamma_spectral(dec, -1.0, 0.5, 0.0), ValidationError);
  double prev = 0;
  for (double t = 1e-6; t < 2.0; t *= 1.5) {
    const double v = var_gamma_spectral(dec, t, 0.5, 0.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(VarSpectral, ModeIntegralSeriesSwitchIsContinuous) {
  for (double t : {0.5, 2.0}) {
    const double lam = 1e-4 / t;
    const double below = mode_time_integral(lam * (1 - 1e-9), t);
    const double above = mode_time_integral(lam * (1 + 1e-9), t);
    EXPECT_NEAR(below / above, 1.0, 1e-9);
  }
  EXPECT_DOUBLE_EQ(mode_time_integral(0.0, 2.0), 2.0);
  const double lam = 3.0, t = 0.7;
  EXPECT_NEAR(mode_time_integral(lam, t), (std::exp(-lam * t) - 1 + lam * t) / (lam * lam), 1e-14);
}

TEST(VarSpectral, LongTimeGrowsLikeChiTSquared) {
  const auto dec = decompose(assemble(sin2_w(16)));
  const double t = 50.0;
  EXPECT_NEAR(var_gamma_spectral(dec, t, 0.5, 0.0) / (0.25 * t * t), 1.0, 0.01);
}

TEST(VarSpectral, MatrixExponentialOracle) {
  // 2 chi int_0^t (t-u) n [exp(c' L u)]_{xx} du with the matrix exponential
  // evaluated at every quadrature node.
  const std::size_t n = 8;
  const auto op = assemble(sin2_w(n));
  const auto dec = decompose(op);
  const Eigen::MatrixXd l = op.dense();
  const double rho = 0.4, b = 0.5, cp = 1 + 2 * b * rho;
  for (std::size_t site : {std::size_t{0}, std::size_t{3}}) {
    for (double t : {0.001, 0.02, 0.3}) {
      auto f = [&](double u) {
        const Eigen::MatrixXd e = (l * (cp * u)).exp();
        return (t - u) * static_cast<double>(n) * e(static_cast<Eigen::Index>(site), static_cast<Eigen::Index>(site));
      };
      const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t, 12, 1e-11);
      const double ref = 2 * rho * (1 - rho) * integral;
      EXPECT_NEAR(var_gamma_spectral(dec, t, rho, b, site) / ref, 1.0, 1e-9) << site << " " << t;
    }
  }
}
