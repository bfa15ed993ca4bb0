// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on
// stderr. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "occtime/cli.hpp"

using namespace occtime;

namespace {

// Pinned tolerances.
constexpr double kZLimit = 4.0;
constexpr double kThreeOfFour = 0.75;
constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) { return format_double(v); }

ExperimentConfig segment_config(std::uint64_t sites, std::uint64_t n, double alpha, double beta, std::uint64_t replicas) {
  ExperimentConfig c;
  c.model.lattice.kind = "segment";
  c.model.lattice.sites = sites;
  c.model.lattice.scale = n;
  c.model.conductance.kind = "slow_bond";
  c.model.conductance.alpha = alpha;
  c.model.conductance.beta = beta;
  c.model.rho = 0.5;
  c.run.T = 0.4;
  c.run.grid = {0.05, 0.1, 0.2, 0.4};
  c.run.replicas = replicas;
  c.run.seed = kSeed;
  c.run.workers = 0;
  return c;
}

ExperimentConfig torus_config(std::uint64_t n, std::uint64_t replicas) {
  ExperimentConfig c;
  c.model.lattice.kind = "torus";
  c.model.lattice.sites = n;
  c.model.rho = 0.5;
  c.run.T = 0.4;
  c.run.grid = {0.05, 0.1, 0.2, 0.4};
  c.run.replicas = replicas;
  c.run.seed = kSeed;
  c.run.workers = 0;
  return c;
}

EnsembleRun timed_simulate(const std::string& label, const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  std::cerr << "[run] " << label << ": R = " << c.run.replicas << " ..." << std::flush;
  EnsembleRun run = simulate(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << " " << fmt(std::round(secs * 10) / 10) << " s\n";
  for (const auto& w : run.warnings) std::cerr << "  warning: " << w << '\n';
  return run;
}

std::vector<ReplicaResult> first(const std::vector<ReplicaResult>& all, std::size_t r) {
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(r, all.size()))};
}

struct Series {
  std::vector<double> t, var, se;
};

Series variance_series(const stats::EnsembleStats& st, const std::string& observable) {
  Series s;
  const std::size_t k = st.observable_index(observable);
  for (std::size_t g = 0; g < st.times().size(); ++g) {
    const auto x = st.series(k, g);
    s.t.push_back(x.t);
    s.var.push_back(x.variance);
    s.se.push_back(x.variance_se);
  }
  return s;
}

std::string describe(const stats::CompareVerdict& v) {
  std::ostringstream o;
  o << v.within << "/" << v.points.size() << " within |z| <= " << fmt(v.z_limit) << "; z =";
  for (const auto& p : v.points) o << ' ' << fmt(std::round(p.z * 100) / 100);
  return o.str();
}

stats::CompareVerdict compare(const Series& s, const std::vector<double>& theory, double pass_fraction) {
  return stats::compare_series(s.t, s.var, s.se, theory, kZLimit, pass_fraction);
}

std::vector<double> theory_on(const std::vector<double>& t, const std::function<double(double)>& f) {
  std::vector<double> v;
  for (double x : t) v.push_back(f(x));
  return v;
}

// Shared ensembles.
struct Ensembles {
  std::vector<ReplicaResult> heat;  // R = 2000
  ProbeSpec heat_probes;
  Series heat1000;
  stats::EnsembleStats heat_all;
  Series neumann;
};

Outcome heat_regime(Ensembles& e) {
  auto c = segment_config(768, 128, 1.0, 0.0, 2000);
  const auto run = timed_simulate("heat regime (n = 128, L = 768)", c);
  e.heat = run.results;
  e.heat_probes = run.setup.probes;
  e.heat_all = *run.stats;
  e.heat1000 = variance_series(ensemble_stats(first(e.heat, 1000), e.heat_probes), "gamma");
  const auto v = compare(e.heat1000, theory_on(e.heat1000.t, [](double t) { return theory::var_gamma_heat(t, 0.5); }),
                         kThreeOfFour);
  return {v.pass, "R = 1000; " + describe(v)};
}

Outcome neumann_regime(Ensembles& e) {
  auto c = segment_config(768, 128, 1.0, std::numeric_limits<double>::infinity(), 1000);
  const auto run = timed_simulate("Neumann regime (beta = inf)", c);
  e.neumann = variance_series(*run.stats, "gamma");
  const auto v = compare(e.neumann, theory_on(e.neumann.t, [](double t) { return theory::var_gamma_neumann(t, 0.5); }),
                         kThreeOfFour);
  bool ratio_ok = true;
  std::ostringstream o;
  o << describe(v) << "; Neumann/heat ratio =";
  for (std::size_t g = 0; g < e.neumann.t.size(); ++g) {
    const double r = e.neumann.var[g] / e.heat1000.var[g];
    ratio_ok = ratio_ok && r >= 1.7 && r <= 2.3;
    o << ' ' << fmt(std::round(r * 1000) / 1000);
  }
  o << " (required in [1.7, 2.3])";
  return {v.pass && ratio_ok, o.str()};
}

Outcome robin_regime() {
  bool pass = true;
  std::ostringstream o;
  for (double alpha : {0.5, 2.0}) {
    auto c = segment_config(768, 128, alpha, 1.0, 1000);
    const auto run = timed_simulate("Robin regime alpha = " + fmt(alpha), c);
    const Series s = variance_series(*run.stats, "gamma");
    const auto th = theory_on(s.t, [alpha](double t) { return theory::var_gamma_robin(alpha, t, 0.5).value; });
    const auto v = compare(s, th, kThreeOfFour);
    bool between = true;
    for (std::size_t g = 0; g < s.t.size(); ++g) {
      between = between && s.var[g] > theory::var_gamma_heat(s.t[g], 0.5) && s.var[g] < theory::var_gamma_neumann(s.t[g], 0.5);
    }
    pass = pass && v.pass && between;
    o << "alpha " << fmt(alpha) << ": " << describe(v) << ", between heat and Neumann: " << (between ? "yes" : "no") << "; ";
  }
  return {pass, o.str()};
}

Outcome f_alpha_quadrature() {
  double worst = 0;
  for (double alpha : {0.1, 1.0, 10.0}) {
    for (double t : {0.1, 1.0, 10.0}) {
      const double q = theory::f_alpha(alpha, t).value;
      const double c = theory::f_alpha_closed(alpha, t);
      worst = std::max(worst, std::abs(q - c) / std::abs(c));
    }
  }
  return {worst <= 1e-10, "max relative difference " + fmt(worst) + " (limit 1e-10)"};
}

Outcome f_alpha_limits() {
  const double small = theory::f_alpha(1e-4, 1.0).value;
  const double large = theory::f_alpha(1e3, 1.0).value;
  const double d0 = std::abs(small - 1.0);
  const double d1 = std::abs(large);
  return {d0 <= 1e-6 && d1 <= 1e-6, "|F(1e-4, 1) - 1| = " + fmt(d0) + ", |F(1e3, 1)| = " + fmt(d1) + " (limit 1e-6)"};
}

Outcome kernel_limits() {
  bool pass = true;
  std::ostringstream o;
  const double h0 = 1.0 / std::sqrt(4.0 * std::numbers::pi);
  double worst_ratio = 0;
  for (double eps : {0.1, 0.05, 0.025}) {
    const double dh = std::abs(theory::kernel_pair_heat(eps, 1.0).value - h0);
    const double dn = std::abs(theory::kernel_pair_neumann(eps, 1.0).value - 2 * h0);
    worst_ratio = std::max({worst_ratio, dh / eps, dn / eps});
    pass = pass && dh <= 5 * eps && dn <= 5 * eps;
  }
  o << "max |error|/eps = " << fmt(worst_ratio) << " (limit 5)";
  for (double alpha : {0.5, 2.0}) {
    const double r = theory::kernel_pair_robin(0.01, alpha, 1.0).value;
    const double target = (1.0 + theory::f_alpha_closed(alpha, 1.0)) * h0;
    const double rel = std::abs(r / target - 1.0);
    pass = pass && rel <= 0.01;
    o << "; Robin alpha " << fmt(alpha) << " relative gap " << fmt(rel) << " (limit 0.01)";
  }
  return {pass, o.str()};
}

Outcome spectral_heat_n1024() {
  const auto dec = spectral::decompose(spectral::assemble(WSamples::identity(1024)));
  const double t = 0.01;
  const double spec = spectral::var_gamma_spectral(dec, t, 0.5, 0.0);
  const double chi_t2 = theory::chi(0.5) * t * t;
  const double heat = theory::var_gamma_heat(t, 0.5);
  const double rel = std::abs((spec - chi_t2) / heat - 1.0);
  const double rel_plain = std::abs(spec / heat - 1.0);
  return {rel <= 1e-6, "relative gap of (spectral - chi t^2) to heat " + fmt(rel) +
                           " (limit 1e-6); spectral vs heat without the subtraction " + fmt(rel_plain)};
}

Outcome spectral_expm_n8() {
  const std::size_t n = 8;
  const auto w = WSamples::from_function(
      [](double u) { return u + 0.3 * std::sin(std::numbers::pi * u) * std::sin(std::numbers::pi * u) / std::numbers::pi; }, n);
  const auto op = spectral::assemble(w);
  const auto dec = spectral::decompose(op);
  const Eigen::MatrixXd l = op.dense();
  double worst = 0;
  for (double t : {0.001, 0.01, 0.1}) {
    // Composite Simpson in u on 4000 panels of (t - u) n exp(L u)_{00}.
    const int m = 4000;
    const double h = t / m;
    double sum = 0;
    for (int i = 0; i <= m; ++i) {
      const double u = i * h;
      const Eigen::MatrixXd e = (l * u).exp();
      const double f = (t - u) * static_cast<double>(n) * e(0, 0);
      sum += f * (i == 0 || i == m ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    const double ref = 2 * theory::chi(0.5) * sum * h / 3.0;
    worst = std::max(worst, std::abs(spectral::var_gamma_spectral(dec, t, 0.5, 0.0) / ref - 1.0));
  }
  return {worst <= 1e-6, "max relative gap to the matrix-exponential oracle " + fmt(worst) + " (limit 1e-6)"};
}

Outcome torus_general_w() {
  auto c = torus_config(128, 1000);
  c.model.conductance.kind = "w_function";
  c.model.conductance.function = "sin2";
  c.model.conductance.amplitude = 0.3;
  const auto run = timed_simulate("torus general W", c);
  const auto rows = theory_table(c);
  const Series s = variance_series(*run.stats, "gamma");
  std::vector<double> th;
  for (const auto& r : rows) th.push_back(r.variance);
  const auto v = compare(s, th, kThreeOfFour);
  return {v.pass, describe(v)};
}

Outcome ou_covariance() {
  auto c = torus_config(128, 2000);
  c.model.rates.kind = "speed_change";
  c.model.rates.b = 1.0;
  c.run.T = 0.05;
  c.run.grid = {0.01, 0.05};
  c.observables.field_modes = {1};
  c.observables.current = false;
  const auto run = timed_simulate("OU mode covariance (b = 1)", c);
  const auto y0 = samples_at(run.results, run.setup.probes, "field_k1", 0);
  bool pass = true;
  std::ostringstream o;
  for (std::size_t g = 1; g <= c.run.grid.size(); ++g) {
    const double t = c.run.grid[g - 1];
    const auto yt = samples_at(run.results, run.setup.probes, "field_k1", g);
    const auto est = stats::covariance_with_se(yt, y0);
    const double th = theory::ou_mode_covariance(1, t, 0.5, 1.0);
    const double z = (est.covariance - th) / est.se;
    pass = pass && std::abs(z) <= kZLimit;
    o << "t " << fmt(t) << ": cov " << fmt(est.covariance) << " theory " << fmt(th) << " z " << fmt(std::round(z * 100) / 100)
      << "; ";
  }
  return {pass, o.str()};
}

Outcome hurst(Ensembles& e) {
  const auto heat_fit = stats::hurst_fit(e.heat_all, "gamma");
  auto c = segment_config(512, 128, 1.0, 0.0, 500);
  c.model.conductance.kind = "uniform";
  c.model.rates.kind = "porous_media";
  c.model.rates.m = 3;
  c.model.rates.b = 1.0;
  const auto run = timed_simulate("porous media m = 3, b = 1", c);
  const auto pm_fit = stats::hurst_fit(*run.stats, "gamma");
  const bool pass = std::abs(heat_fit.slope - 1.5) <= 0.15 && std::abs(pm_fit.slope - 1.5) <= 0.2;
  return {pass, "heat slope " + fmt(heat_fit.slope) + " (1.5 +- 0.15), porous media slope " + fmt(pm_fit.slope) +
                    " (1.5 +- 0.2)"};
}

Outcome replacement_bound() {
  auto c = torus_config(128, 500);
  c.run.T = 0.2;
  c.run.grid = {0.2};
  c.observables.epsilons = {0.05, 0.1, 0.2};
  c.observables.current = false;
  const auto run = timed_simulate("local replacement", c);
  bool pass = true;
  std::ostringstream o;
  for (double eps : c.observables.epsilons) {
    const auto x = samples_at(run.results, run.setup.probes, "replacement_eps_" + format_double(eps), 1);
    const auto r = stats::replacement_bound_check(x, 0.2, 0.5, 0.0, eps, 1.0, 3.0);
    pass = pass && r.pass;
    o << "eps " << fmt(eps) << ": E[X^2] " << fmt(r.second_moment) << " <= " << fmt(r.bound) << " + 3*" << fmt(r.second_moment_se)
      << (r.pass ? "" : " VIOLATED") << "; ";
  }
  return {pass, o.str()};
}

Outcome dichotomy() {
  double current_var[2] = {0, 0};
  bool gamma_ok = true;
  std::ostringstream o;
  const std::uint64_t ns[2] = {64, 128};
  for (int i = 0; i < 2; ++i) {
    auto c = segment_config(4 * ns[i], ns[i], 1.0, 2.0, 500);
    const auto run = timed_simulate("dichotomy beta = 2, n = " + std::to_string(ns[i]), c);
    const Series g = variance_series(*run.stats, "gamma");
    const auto v = compare(g, theory_on(g.t, [](double t) { return theory::var_gamma_neumann(t, 0.5); }), 1.0);
    gamma_ok = gamma_ok && v.pass;
    current_var[i] = variance_series(*run.stats, "current").var.back();
    o << "n " << ns[i] << ": occupation " << describe(v) << ", Var current(T) " << fmt(current_var[i]) << "; ";
  }
  const double ratio = current_var[0] / current_var[1];
  o << "current variance ratio n=64/n=128 " << fmt(ratio) << " (required >= 1.4)";
  return {gamma_ok && ratio >= 1.4, o.str()};
}

Outcome gaussianity(Ensembles& e) {
  const auto x = samples_at(e.heat, e.heat_probes, "gamma", 4);
  const auto r = stats::normality_check(x, 4.0);
  return {r.pass, "R = " + std::to_string(r.count) + ", excess kurtosis " + fmt(r.kurtosis) + ", limit 4*" + fmt(r.kurtosis_se)};
}

Outcome determinism() {
  auto c = torus_config(32, 12);
  c.run.T = 0.2;
  c.run.grid = {0.05, 0.1, 0.2};
  c.observables.epsilons = {0.25};
  c.observables.field_modes = {1, 2};
  c.observables.density_profile = true;
  bool same = true;
  std::string ref_csv, ref_json, ref_ens;
  for (std::uint64_t workers : {1, 2, 4}) {
    c.run.workers = workers;
    const auto run = simulate(c);
    const auto csv = cli::render_simulation(c, run, "csv");
    const auto js = cli::render_simulation(c, run, "json");
    if (workers == 1) {
      ref_csv = csv.table + csv.density;
      ref_json = js.table;
      ref_ens = csv.ensemble;
    } else {
      same = same && ref_csv == csv.table + csv.density && ref_json == js.table && ref_ens == csv.ensemble &&
             ref_ens == js.ensemble;
    }
  }
  return {same, "workers 1, 2, 4: CSV, JSON and ensemble outputs " + std::string(same ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
  Ensembles e;
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& f) {
    Outcome r;
    try {
      r = f();
    } catch (const std::exception& ex) {
      r = {false, std::string("error: ") + ex.what()};
    }
    failures += r.pass ? 0 : 1;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << name << "  | " << r.detail << std::endl;
  };

  report("determinism across worker counts", determinism);
  report("F_alpha quadrature vs closed form", f_alpha_quadrature);
  report("F_alpha limits", f_alpha_limits);
  report("kernel limits", kernel_limits);
  report("spectral vs heat at n = 1024", spectral_heat_n1024);
  report("spectral vs matrix exponential at n = 8", spectral_expm_n8);
  report("replacement bound", replacement_bound);
  report("OU mode covariance", ou_covariance);
  report("torus general W", torus_general_w);
  report("heat regime variance", [&] { return heat_regime(e); });
  report("Gaussianity of occupation time", [&] { return gaussianity(e); });
  report("Neumann regime variance", [&] { return neumann_regime(e); });
  report("Robin regime variance", robin_regime);
  report("Hurst exponent", [&] { return hurst(e); });
  report("current/occupation-time dichotomy", dichotomy);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
