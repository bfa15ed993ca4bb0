#pragma once

// Ensemble estimators over replica summaries. Moments are accumulated with
// the one-pass update of Welford extended to third and fourth central
// moments (Pebay), and replicas are always reduced in id order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "occtime/error.hpp"
#include "occtime/model.hpp"

namespace occtime::stats {

/// Running count, mean and central sums M2, M3, M4.
struct Moments {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;

  void add(double x) noexcept {
    const double n1 = static_cast<double>(n);
    ++n;
    const double nn = static_cast<double>(n);
    const double delta = x - mean;
    const double dn = delta / nn;
    const double dn2 = dn * dn;
    const double term = delta * dn * n1;
    mean += dn;
    m4 += term * dn2 * (nn * nn - 3.0 * nn + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
    m3 += term * dn * (nn - 2.0) - 3.0 * dn * m2;
    m2 += term;
  }

  static Moments merge(const Moments& a, const Moments& b) noexcept {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    const double na = static_cast<double>(a.n);
    const double nb = static_cast<double>(b.n);
    const double n = na + nb;
    const double d = b.mean - a.mean;
    const double d2 = d * d;
    Moments r;
    r.n = a.n + b.n;
    r.mean = a.mean + d * nb / n;
    r.m2 = a.m2 + b.m2 + d2 * na * nb / n;
    r.m3 = a.m3 + b.m3 + d * d2 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * b.m2 - nb * a.m2) / n;
    r.m4 = a.m4 + b.m4 + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
           6.0 * d2 * (na * na * b.m2 + nb * nb * a.m2) / (n * n) + 4.0 * d * (na * b.m3 - nb * a.m3) / n;
    return r;
  }

  /// Unbiased sample variance.
  double variance() const noexcept {
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    return std::max(0.0, m2 / static_cast<double>(n - 1));
  }

  /// n M4 / M2^2 - 3; NaN when the sample has no spread.
  double excess_kurtosis() const noexcept {
    if (n < 2 || !(m2 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(n) * m4 / (m2 * m2) - 3.0;
  }
};

/// sqrt(2/(R-1)) * variance: Gaussian approximation to the variance SE.
inline double variance_se(double variance, std::uint64_t r) {
  if (r < 2) return std::numeric_limits<double>::quiet_NaN();
  return std::sqrt(2.0 / static_cast<double>(r - 1)) * variance;
}

/// Per-replica probe values. values[k][g] is observable k at times[g].
struct ReplicaSummary {
  std::uint64_t id = 0;
  std::vector<double> times;
  std::vector<std::string> observables;
  std::vector<std::vector<double>> values;
};

struct SeriesStats {
  std::string observable;
  double t = 0.0;
  std::uint64_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double variance_se = 0.0;
  double kurtosis = 0.0;
};

class EnsembleStats {
public:
  EnsembleStats() = default;
  EnsembleStats(std::vector<double> times, std::vector<std::string> observables)
      : times_(std::move(times)), observables_(std::move(observables)) {
    moments_.assign(observables_.size(), std::vector<Moments>(times_.size()));
  }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<std::string>& observables() const noexcept { return observables_; }
  std::uint64_t replicas() const noexcept { return replicas_; }

  std::size_t observable_index(const std::string& name) const {
    const auto it = std::find(observables_.begin(), observables_.end(), name);
    if (it == observables_.end()) throw ValidationError("no observable named '" + name + "' in ensemble");
    return static_cast<std::size_t>(it - observables_.begin());
  }

  const Moments& moments(std::size_t k, std::size_t g) const { return moments_.at(k).at(g); }

  SeriesStats series(std::size_t k, std::size_t g) const {
    const Moments& m = moments(k, g);
    SeriesStats s;
    s.observable = observables_[k];
    s.t = times_[g];
    s.count = m.n;
    s.mean = m.mean;
    s.variance = m.variance();
    s.variance_se = variance_se(s.variance, m.n);
    s.kurtosis = m.excess_kurtosis();
    return s;
  }

  std::vector<double> variances(std::size_t k) const {
    std::vector<double> v;
    for (std::size_t g = 0; g < times_.size(); ++g) v.push_back(moments(k, g).variance());
    return v;
  }

  void add(const ReplicaSummary& s) {
    if (s.times != times_) throw ValidationError("replica " + std::to_string(s.id) + ": time grid differs from ensemble");
    if (s.observables != observables_) {
      throw ValidationError("replica " + std::to_string(s.id) + ": observable set differs from ensemble");
    }
    if (s.values.size() != observables_.size()) {
      throw ValidationError("replica " + std::to_string(s.id) + ": wrong number of observable series");
    }
    for (std::size_t k = 0; k < observables_.size(); ++k) {
      if (s.values[k].size() != times_.size()) {
        throw ValidationError("replica " + std::to_string(s.id) + ": series '" + observables_[k] + "' has wrong length");
      }
      for (std::size_t g = 0; g < times_.size(); ++g) moments_[k][g].add(s.values[k][g]);
    }
    ++replicas_;
  }

  static EnsembleStats merge(const EnsembleStats& a, const EnsembleStats& b) {
    if (a.times_ != b.times_ || a.observables_ != b.observables_) {
      throw ValidationError("cannot merge ensembles with different grids or observables");
    }
    EnsembleStats r(a.times_, a.observables_);
    for (std::size_t k = 0; k < r.observables_.size(); ++k) {
      for (std::size_t g = 0; g < r.times_.size(); ++g) r.moments_[k][g] = Moments::merge(a.moments_[k][g], b.moments_[k][g]);
    }
    r.replicas_ = a.replicas_ + b.replicas_;
    return r;
  }

private:
  std::vector<double> times_;
  std::vector<std::string> observables_;
  std::vector<std::vector<Moments>> moments_;
  std::uint64_t replicas_ = 0;
};

/// Aggregates summaries in ascending replica id, whatever their input order.
inline EnsembleStats aggregate(const std::vector<ReplicaSummary>& summaries) {
  if (summaries.empty()) throw ValidationError("cannot aggregate an empty replica set");
  std::vector<const ReplicaSummary*> order;
  for (const auto& s : summaries) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->id == order[i - 1]->id) throw ValidationError("duplicate replica id " + std::to_string(order[i]->id));
  }
  EnsembleStats out(order.front()->times, order.front()->observables);
  for (const auto* s : order) out.add(*s);
  return out;
}

struct HurstFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// Ordinary least squares of log variance on log t.
inline HurstFit hurst_fit(const std::vector<double>& times, const std::vector<double>& variances) {
  if (times.size() != variances.size()) throw ValidationError("time and variance grids differ in length");
  const std::size_t g = times.size();
  if (g < 3) throw ValidationError("Hurst fit needs at least 3 grid times");
  std::vector<double> x(g);
  std::vector<double> y(g);
  for (std::size_t i = 0; i < g; ++i) {
    if (!(times[i] > 0.0)) throw ValidationError("Hurst fit needs t > 0");
    if (!(variances[i] > 0.0)) {
      throw ValidationError("Hurst fit needs positive variances; got " + std::to_string(variances[i]) + " at t = " +
                            std::to_string(times[i]));
    }
    x[i] = std::log(times[i]);
    y[i] = std::log(variances[i]);
  }
  double xbar = 0.0;
  double ybar = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    xbar += x[i];
    ybar += y[i];
  }
  xbar /= static_cast<double>(g);
  ybar /= static_cast<double>(g);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (y[i] - ybar);
  }
  if (!(sxx > 0.0)) throw ValidationError("Hurst fit needs distinct grid times");
  HurstFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double ssr = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    ssr += r * r;
  }
  fit.slope_se = g > 2 ? std::sqrt(ssr / static_cast<double>(g - 2) / sxx) : 0.0;
  return fit;
}

inline HurstFit hurst_fit(const EnsembleStats& stats, const std::string& observable = "gamma") {
  return hurst_fit(stats.times(), stats.variances(stats.observable_index(observable)));
}

struct ReplacementBoundReport {
  double eps = 0.0;
  double t = 0.0;
  double second_moment = 0.0;
  double second_moment_se = 0.0;
  double bound = 0.0;
  bool pass = false;
};

/// Empirical E[X^2] against 20 t C(rho) eps^theta; passes when
/// E[X^2] <= bound + se_multiple * SE with SE = sd(X^2)/sqrt(R).
inline ReplacementBoundReport replacement_bound_check(const std::vector<double>& samples, double t, double rho, double b,
                                                      double eps, double theta, double se_multiple = 3.0) {
  if (samples.size() < 2) throw ValidationError("replacement bound check needs at least 2 samples");
  Moments sq;
  for (double x : samples) sq.add(x * x);
  ReplacementBoundReport r;
  r.eps = eps;
  r.t = t;
  r.second_moment = sq.mean;
  r.second_moment_se = std::sqrt(sq.variance() / static_cast<double>(sq.n));
  r.bound = 20.0 * t * c_rho(rho, b) * std::pow(eps, theta);
  r.pass = r.second_moment <= r.bound + se_multiple * r.second_moment_se;
  return r;
}

struct NormalityReport {
  std::uint64_t count = 0;
  double kurtosis = 0.0;
  double kurtosis_se = 0.0;
  bool pass = false;
};

/// Excess kurtosis with SE sqrt(24/R); passes when |kurtosis| <= se_multiple SE.
inline NormalityReport normality_check(const std::vector<double>& samples, double se_multiple = 4.0) {
  if (samples.size() < 200) {
    throw ValidationError("normality check needs R >= 200 samples, got " + std::to_string(samples.size()));
  }
  Moments m;
  for (double x : samples) m.add(x);
  if (!(m.m2 > 0.0)) throw NumericalError("kurtosis undefined: sample has zero variance");
  NormalityReport r;
  r.count = m.n;
  r.kurtosis = m.excess_kurtosis();
  r.kurtosis_se = std::sqrt(24.0 / static_cast<double>(m.n));
  r.pass = std::abs(r.kurtosis) <= se_multiple * r.kurtosis_se;
  return r;
}

struct CovarianceEstimate {
  double covariance = 0.0;
  double se = 0.0;
};

/// Unbiased sample covariance; SE is sd of centered products over sqrt(R).
inline CovarianceEstimate covariance_with_se(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("covariance samples differ in length");
  if (a.size() < 2) throw ValidationError("covariance needs at least 2 samples");
  Moments ma;
  Moments mb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma.add(a[i]);
    mb.add(b[i]);
  }
  Moments prod;
  for (std::size_t i = 0; i < a.size(); ++i) prod.add((a[i] - ma.mean) * (b[i] - mb.mean));
  const double r = static_cast<double>(a.size());
  return {prod.mean * r / (r - 1.0), std::sqrt(prod.variance() / r)};
}

struct ComparePoint {
  double t = 0.0;
  double empirical = 0.0;
  double se = 0.0;
  double theory = 0.0;
  double z = 0.0;
  bool within = false;
};

struct CompareVerdict {
  std::vector<ComparePoint> points;
  std::size_t within = 0;
  double z_limit = 4.0;
  double pass_fraction = 0.9;
  bool pass = false;
};

/// z = (empirical - theory) / SE at each time; passes when at least
/// pass_fraction of the points have |z| <= z_limit.
inline CompareVerdict compare_series(const std::vector<double>& times, const std::vector<double>& empirical,
                                     const std::vector<double>& se, const std::vector<double>& theory,
                                     double z_limit = 4.0, double pass_fraction = 0.9) {
  const std::size_t g = times.size();
  if (g == 0) throw ValidationError("comparison grid is empty");
  if (empirical.size() != g || se.size() != g || theory.size() != g) {
    throw ValidationError("comparison series differ in length");
  }
  if (!(z_limit > 0.0)) throw ValidationError("z_limit must be > 0");
  if (!(pass_fraction > 0.0 && pass_fraction <= 1.0)) throw ValidationError("pass_fraction must lie in (0,1]");
  CompareVerdict v;
  v.z_limit = z_limit;
  v.pass_fraction = pass_fraction;
  for (std::size_t i = 0; i < g; ++i) {
    ComparePoint p{times[i], empirical[i], se[i], theory[i], 0.0, false};
    p.z = (p.empirical - p.theory) / p.se;
    p.within = std::abs(p.z) <= z_limit;
    v.within += p.within ? 1 : 0;
    v.points.push_back(p);
  }
  v.pass = static_cast<double>(v.within) >= pass_fraction * static_cast<double>(g) - 1e-12;
  return v;
}

}  // namespace occtime::stats
