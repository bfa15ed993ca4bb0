#pragma once

// Command-line front end. Exit codes: 0 success, 1 comparison failure,
// 2 usage or configuration error, 3 numerical failure at run time.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "occtime/experiment.hpp"

namespace occtime::cli {

enum ExitCode : int { kSuccess = 0, kComparisonFailed = 1, kUsageError = 2, kRuntimeError = 3 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> workers;
  std::string out_dir = ".";
  std::string format = "csv";
};

/// Config file values first, then flag overrides on top.
inline ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (o.seed) c.run.seed = *o.seed;
  if (o.workers) c.run.workers = *o.workers;
  validate(c);
  return c;
}

inline std::filesystem::path output_path(const CommonOptions& o, const std::string& name) {
  std::filesystem::create_directories(o.out_dir);
  return std::filesystem::path(o.out_dir) / name;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Per-replica table and ensemble document of a simulate run, as strings.
struct SimulateOutputs {
  std::string table;    // observables.csv or observables.json
  std::string ensemble; // ensemble.json
  std::string density;  // density.csv, empty unless enabled
};

inline SimulateOutputs render_simulation(const ExperimentConfig& c, const EnsembleRun& run, const std::string& format) {
  SimulateOutputs out;
  std::ostringstream table;
  if (format == "json") {
    table << dump(observables_json(run.results, run.setup.probes));
  } else {
    write_observables_csv(table, run.results, run.setup.probes);
  }
  out.table = table.str();
  out.ensemble = dump(ensemble_json(c, run));
  if (c.observables.density_profile) {
    std::ostringstream d;
    write_density_csv(d, run.results);
    out.density = d.str();
  }
  return out;
}

inline void write_simulation(const CommonOptions& o, const ExperimentConfig& c, const EnsembleRun& run) {
  const SimulateOutputs s = render_simulation(c, run, o.format);
  write_text(output_path(o, o.format == "json" ? "observables.json" : "observables.csv"), s.table);
  write_text(output_path(o, "ensemble.json"), s.ensemble);
  if (!s.density.empty()) write_text(output_path(o, "density.csv"), s.density);
}

inline void report_warnings(const EnsembleRun& run, std::ostream& err) {
  for (const auto& w : run.warnings) err << "warning: " << w << '\n';
}

inline int cmd_simulate(const CommonOptions& o, const std::string& event_log, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = resolve_config(o);
  const EnsembleRun run = simulate(c);
  write_simulation(o, c, run);
  if (!event_log.empty()) {
    std::ofstream log(event_log, std::ios::binary);
    if (!log) throw std::runtime_error("cannot write " + event_log);
    run_replica(run.setup, c.run.seed, 0, &log);
  }
  report_warnings(run, err);
  out << "simulated " << c.run.replicas << " replica(s) to T = " << format_double(c.run.T) << "; outputs in "
      << o.out_dir << '\n';
  return kSuccess;
}

inline int cmd_theory(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig c = resolve_config(o);
  const auto rows = theory_table(c);
  if (o.format == "csv") {
    std::ostringstream s;
    s << "regime,alpha,rho,t,variance,error_estimate\n";
    for (const auto& r : rows) {
      s << r.regime << ',' << (r.alpha ? format_double(*r.alpha) : "") << ',' << format_double(r.rho) << ','
        << format_double(r.t) << ',' << format_double(r.variance) << ',' << format_double(r.error_estimate) << '\n';
    }
    write_text(output_path(o, "theory.csv"), s.str());
  } else {
    write_text(output_path(o, "theory.json"), dump(theory_json(c, rows)));
  }
  out << "theory: " << rows.size() << " row(s), regime " << resolve_regime(c) << '\n';
  return kSuccess;
}

inline spectral::SpectralDecomposition torus_decomposition(const ExperimentConfig& c) {
  if (c.model.lattice.kind != "torus") throw ConfigError("model.lattice.kind", "spectral commands require a torus");
  return spectral::decompose(spectral::assemble(w_samples_for(c)));
}

inline int cmd_spectrum(const CommonOptions& o, std::ostream& out) {
  const ExperimentConfig c = resolve_config(o);
  const auto dec = torus_decomposition(c);
  const ModelParams p(c.model.rho, c.model.rates.b);
  const std::size_t site = c.model.lattice.marked;
  if (o.format == "csv") {
    std::ostringstream ev;
    ev << "k,eigenvalue\n";
    for (std::size_t k = 0; k < dec.n(); ++k) ev << k << ',' << format_double(dec.eigenvalues()[k]) << '\n';
    write_text(output_path(o, "eigenvalues.csv"), ev.str());
    std::ostringstream cv;
    cv << "t,kernel_at_origin,variance\n";
    for (double t : c.run.grid) {
      cv << format_double(t) << ',' << format_double(spectral::kernel_at_origin(dec, t, p.c_prime(), site)) << ','
         << format_double(spectral::var_gamma_spectral(dec, t, p.rho, p.b, site)) << '\n';
    }
    write_text(output_path(o, "spectrum.csv"), cv.str());
  } else {
    json curves = json::array();
    for (double t : c.run.grid) {
      curves.push_back({{"t", t},
                        {"kernel_at_origin", spectral::kernel_at_origin(dec, t, p.c_prime(), site)},
                        {"variance", spectral::var_gamma_spectral(dec, t, p.rho, p.b, site)}});
    }
    const json j = {{"version", version_string()},
                    {"config", config_to_json(c, false)},
                    {"n", dec.n()},
                    {"c_prime", p.c_prime()},
                    {"orthonormality_residual", dec.orthonormality_residual()},
                    {"eigenvalues", dec.eigenvalues()},
                    {"curves", curves}};
    write_text(output_path(o, "spectrum.json"), dump(j));
  }
  out << "spectrum: n = " << dec.n() << ", mu_1 = " << format_double(dec.n() > 1 ? dec.eigenvalues()[1] : 0.0) << '\n';
  return kSuccess;
}

/// Two-column (u, value) initial profile on the torus grid u = x/n.
inline std::vector<double> read_profile(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open profile file");
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double u = 0.0;
    double v = 0.0;
    std::string extra;
    if (!(ls >> u >> v) || (ls >> extra)) {
      throw ConfigError(path + ":" + std::to_string(lineno), "expected two numeric columns u, value");
    }
    const double expect = static_cast<double>(values.size()) / static_cast<double>(n);
    if (std::abs(u - expect) > 1e-9) {
      throw ConfigError(path + ":" + std::to_string(lineno), "u = " + format_double(u) + " but the grid expects " +
                                                                 format_double(expect));
    }
    if (!std::isfinite(v)) throw ConfigError(path + ":" + std::to_string(lineno), "value is not finite");
    values.push_back(v);
  }
  if (values.size() != n) {
    throw ConfigError(path, "profile has " + std::to_string(values.size()) + " rows; the torus has " + std::to_string(n) +
                                " sites");
  }
  return values;
}

inline int cmd_profile(const CommonOptions& o, const std::string& profile_path, std::ostream& out) {
  const ExperimentConfig c = resolve_config(o);
  if (profile_path.empty()) throw ConfigError("--profile", "an initial profile file is required");
  const auto dec = torus_decomposition(c);
  const ModelParams p(c.model.rho, c.model.rates.b);
  const std::vector<double> h0 = read_profile(profile_path, dec.n());
  std::vector<double> times{0.0};
  times.insert(times.end(), c.run.grid.begin(), c.run.grid.end());
  const double n = static_cast<double>(dec.n());
  if (o.format == "json") {
    json snaps = json::array();
    for (double t : times) snaps.push_back({{"t", t}, {"values", spectral::semigroup_apply(dec, h0, t, p.c_prime())}});
    const json j = {{"version", version_string()}, {"config", config_to_json(c, false)}, {"c_prime", p.c_prime()},
                    {"snapshots", snaps}};
    write_text(output_path(o, "profile.json"), dump(j));
  } else {
    std::ostringstream s;
    s << "t,x,u,value\n";
    for (double t : times) {
      const auto v = spectral::semigroup_apply(dec, h0, t, p.c_prime());
      for (std::size_t x = 0; x < v.size(); ++x) {
        s << format_double(t) << ',' << x << ',' << format_double(static_cast<double>(x) / n) << ',' << format_double(v[x])
          << '\n';
      }
    }
    write_text(output_path(o, "profile.csv"), s.str());
  }
  out << "profile: " << times.size() << " snapshot(s)\n";
  return kSuccess;
}

inline int cmd_compare(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = resolve_config(o);
  if (c.run.grid.empty()) throw ConfigError("run.grid", "comparison needs a nonempty grid");
  const auto rows = theory_table(c);
  if (rows.size() != c.run.grid.size()) {
    throw ConfigError("comparison.alpha", "compare takes a single alpha; got " + std::to_string(rows.size() / c.run.grid.size()));
  }
  const EnsembleRun run = simulate(c);
  write_simulation(o, c, run);
  write_text(output_path(o, "theory.json"), dump(theory_json(c, rows)));

  const auto& st = *run.stats;
  const std::size_t k = st.observable_index("gamma");
  std::vector<double> emp;
  std::vector<double> se;
  std::vector<double> th;
  for (std::size_t g = 0; g < st.times().size(); ++g) {
    const auto s = st.series(k, g);
    emp.push_back(s.variance);
    se.push_back(s.variance_se);
    th.push_back(rows[g].variance);
  }
  const auto v = stats::compare_series(st.times(), emp, se, th, c.comparison.z_limit, c.comparison.pass_fraction);

  json points = json::array();
  for (const auto& p : v.points) {
    points.push_back({{"observable", "gamma"},
                      {"t", p.t},
                      {"R", st.replicas()},
                      {"variance", p.empirical},
                      {"variance_SE", p.se},
                      {"theory_value", p.theory},
                      {"z_score", nullable(p.z)},
                      {"within", p.within}});
  }
  const json report = {{"version", version_string()},
                       {"config", config_to_json(c, false)},
                       {"regime", rows.front().regime},
                       {"z_limit", v.z_limit},
                       {"pass_fraction", v.pass_fraction},
                       {"points_within", v.within},
                       {"points", points},
                       {"verdict", v.pass ? "pass" : "fail"},
                       {"warnings", run.warnings}};
  write_text(output_path(o, "compare.json"), dump(report));

  report_warnings(run, err);
  out << "regime " << rows.front().regime << ", R = " << st.replicas() << '\n';
  out << "t\tvariance\tSE\ttheory\tz\n";
  for (const auto& p : v.points) {
    out << format_double(p.t) << '\t' << format_double(p.empirical) << '\t' << format_double(p.se) << '\t'
        << format_double(p.theory) << '\t' << format_double(p.z) << (p.within ? "" : "\t*") << '\n';
  }
  out << "verdict: " << (v.pass ? "PASS" : "FAIL") << " (" << v.within << "/" << v.points.size() << " within |z| <= "
      << format_double(v.z_limit) << ")\n";
  return v.pass ? kSuccess : kComparisonFailed;
}

/// Reads (t, variance) of `observable` from an ensemble JSON document.
inline void read_ensemble_variances(const std::string& path, const std::string& observable, std::vector<double>& t,
                                    std::vector<double>& var) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open ensemble file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
  if (!j.contains("summary") || !j["summary"].is_array()) throw ConfigError(path, "missing summary array");
  for (const auto& row : j["summary"]) {
    if (row.value("observable", "") != observable) continue;
    if (!row.contains("t") || !row.contains("variance") || !row["variance"].is_number()) {
      throw ConfigError(path, "summary row lacks t or a numeric variance");
    }
    t.push_back(row["t"].get<double>());
    var.push_back(row["variance"].get<double>());
  }
}

inline int cmd_hurst(const CommonOptions& o, const std::string& ensemble_path, const std::string& observable,
                     std::ostream& out) {
  std::vector<double> t;
  std::vector<double> var;
  json config;
  if (!ensemble_path.empty()) {
    read_ensemble_variances(ensemble_path, observable, t, var);
    config = nullptr;
  } else {
    const ExperimentConfig c = resolve_config(o);
    const EnsembleRun run = simulate(c);
    if (!run.stats) throw ConfigError("run.grid", "Hurst fit needs at least 3 grid times");
    t = run.stats->times();
    var = run.stats->variances(run.stats->observable_index(observable));
    config = config_to_json(c, false);
  }
  const auto fit = stats::hurst_fit(t, var);
  json points = json::array();
  for (std::size_t i = 0; i < t.size(); ++i) points.push_back({{"t", t[i]}, {"variance", var[i]}});
  const json j = {{"version", version_string()}, {"config", config},           {"observable", observable},
                  {"slope", fit.slope},          {"intercept", fit.intercept}, {"slope_SE", fit.slope_se},
                  {"hurst", fit.slope / 2.0},    {"points", points}};
  write_text(output_path(o, "hurst.json"), dump(j));
  out << "slope " << format_double(fit.slope) << " +- " << format_double(fit.slope_se) << " (H = "
      << format_double(fit.slope / 2.0) << ")\n";
  return kSuccess;
}

inline void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config_path, "experiment config (JSON)");
  app->add_option("--seed", o.seed, "master seed (overrides run.seed)");
  app->add_option("--workers", o.workers, "worker threads, 0 = all cores (overrides run.workers)");
  app->add_option("--out", o.out_dir, "output directory")->capture_default_str();
  app->add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Occupation-time simulator and theory engine for exclusion processes with conductances"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  CommonOptions o;
  std::string event_log;
  std::string profile_path;
  std::string ensemble_path;
  std::string observable = "gamma";

  auto* sim = app.add_subcommand("simulate", "run replicas and write per-replica and ensemble outputs");
  add_common(sim, o);
  sim->add_option("--event-log", event_log, "write the event stream of replica 0 as CSV");
  auto* th = app.add_subcommand("theory", "evaluate the limit variance on the grid");
  add_common(th, o);
  auto* sp = app.add_subcommand("spectrum", "eigenvalues, kernel and variance curves of the discrete operator");
  add_common(sp, o);
  auto* pr = app.add_subcommand("profile", "evolve an initial density profile under the limiting semigroup");
  add_common(pr, o);
  pr->add_option("--profile", profile_path, "two-column (u, value) initial profile")->required();
  auto* cmp = app.add_subcommand("compare", "simulate, evaluate theory and report z-scores");
  add_common(cmp, o);
  auto* hu = app.add_subcommand("hurst", "log-log variance fit over the grid");
  add_common(hu, o);
  hu->add_option("--ensemble", ensemble_path, "fit an existing ensemble.json instead of simulating");
  hu->add_option("--observable", observable, "observable to fit")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*sim) return cmd_simulate(o, event_log, out, err);
    if (*th) return cmd_theory(o, out);
    if (*sp) return cmd_spectrum(o, out);
    if (*pr) return cmd_profile(o, profile_path, out);
    if (*cmp) return cmd_compare(o, out, err);
    if (*hu) return cmd_hurst(o, ensemble_path, observable, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace occtime::cli
