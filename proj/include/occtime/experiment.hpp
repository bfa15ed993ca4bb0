#pragma once

// Experiment configuration, replica farming and the CSV/JSON artifacts
// shared by the command-line front end and the acceptance suite.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "occtime/engine.hpp"
#include "occtime/error.hpp"
#include "occtime/format.hpp"
#include "occtime/model.hpp"
#include "occtime/observables.hpp"
#include "occtime/quadrature.hpp"
#include "occtime/spectral.hpp"
#include "occtime/stats.hpp"
#include "occtime/theory.hpp"

#ifndef OCCTIME_VERSION
#define OCCTIME_VERSION "0.1.0"
#endif

namespace occtime {

using nlohmann::json;

inline std::string version_string() { return OCCTIME_VERSION; }

/// Configuration error tagged with the offending field path.
class ConfigError : public ValidationError {
public:
  ConfigError(const std::string& path, const std::string& what) : ValidationError(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

struct LatticeConfig {
  std::string kind = "torus";  // torus | segment
  std::uint64_t sites = 128;
  std::uint64_t scale = 0;   // segment only: macroscopic unit n
  std::uint64_t marked = 0;  // torus only
};

struct ConductanceConfig {
  std::string kind = "uniform";  // uniform | w_file | w_function | slow_bond
  std::string path;              // w_file
  std::string function = "identity";  // w_function: identity | sin2
  double amplitude = 0.3;             // sin2: W(u) = u + amplitude sin^2(pi u) / pi
  double alpha = 1.0;                 // slow_bond
  double beta = 0.0;                  // slow_bond, may be +inf
};

struct RatesConfig {
  std::string kind = "simple";  // simple | speed_change | porous_media
  double b = 0.0;
  int m = 2;
};

struct ModelConfig {
  LatticeConfig lattice;
  ConductanceConfig conductance;
  RatesConfig rates;
  double rho = 0.5;
};

struct RunConfig {
  double T = 0.4;
  std::vector<double> grid{0.05, 0.1, 0.2, 0.4};
  std::uint64_t replicas = 100;
  std::uint64_t seed = 1;
  std::uint64_t workers = 1;  // 0: all hardware threads
};

struct ObservablesConfig {
  std::vector<double> epsilons;
  std::vector<int> field_modes;
  bool current = true;
  bool density_profile = false;
};

struct ComparisonConfig {
  std::string regime = "auto";  // auto | heat | neumann | robin | spectral
  std::vector<double> alpha;
  double z_limit = 4.0;
  double pass_fraction = 0.9;
  double kurtosis_se_multiple = 4.0;
  double bound_se_multiple = 3.0;
  double quad_abs_tol = 1e-14;
  double quad_rel_tol = 1e-12;
};

struct ExperimentConfig {
  ModelConfig model;
  RunConfig run;
  ObservablesConfig observables;
  ComparisonConfig comparison;
};

namespace detail {

// Reads one JSON object, remembering the keys it consumed so unknown keys
// can be reported with their full path.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) out = as_number(*v, child(key));
  }

  void integer(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) out = as_unsigned(*v, child(key));
  }

  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
      out = v->get<int>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(child(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(child(key), "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], child(key) + "[" + std::to_string(i) + "]"));
    }
  }

  void integers(const std::string& key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(child(key), "expected an array of integers");
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        const json& e = (*v)[i];
        if (!e.is_number_integer()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected an integer");
        out.push_back(e.get<int>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown field");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    }
    throw ConfigError(path, "expected a number");
  }

  static std::uint64_t as_unsigned(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(path, "expected a nonnegative integer");
  }

private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return json(v);
}

template <class T>
bool one_of(const T& v, std::initializer_list<T> options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

}  // namespace detail

/// Cross-field validation; every message carries the field path.
inline void validate(const ExperimentConfig& c) {
  const auto& lat = c.model.lattice;
  const auto& cond = c.model.conductance;
  if (!detail::one_of<std::string>(lat.kind, {"torus", "segment"})) {
    throw ConfigError("model.lattice.kind", "must be \"torus\" or \"segment\", got \"" + lat.kind + "\"");
  }
  const bool torus = lat.kind == "torus";
  if (torus) {
    if (lat.sites < 4) throw ConfigError("model.lattice.sites", "torus needs at least 4 sites");
    if (lat.scale != 0 && lat.scale != lat.sites) {
      throw ConfigError("model.lattice.scale", "on a torus the scale is the site count; omit it or set it to sites");
    }
    if (lat.marked >= lat.sites) throw ConfigError("model.lattice.marked", "must be < sites");
  } else {
    if (lat.sites < 8) throw ConfigError("model.lattice.sites", "segment needs at least 8 sites");
    if (lat.scale < 1) throw ConfigError("model.lattice.scale", "segment requires the macroscopic scale n >= 1");
    if (lat.marked != 0) throw ConfigError("model.lattice.marked", "the segment marked site is fixed at its center");
    const double need = 6.0 * static_cast<double>(lat.scale) * std::sqrt(c.run.T);
    if (static_cast<double>(lat.sites) < need) {
      throw ConfigError("model.lattice.sites", "segment length " + std::to_string(lat.sites) +
                                                   " is below the guideline L >= 6 n sqrt(T) = " + format_double(need));
    }
  }

  if (!detail::one_of<std::string>(cond.kind, {"uniform", "w_file", "w_function", "slow_bond"})) {
    throw ConfigError("model.conductance.kind", "must be uniform, w_file, w_function or slow_bond");
  }
  if ((cond.kind == "w_file" || cond.kind == "w_function") && !torus) {
    throw ConfigError("model.conductance.kind", "W-driven conductances require a torus lattice");
  }
  if (cond.kind == "slow_bond" && torus) throw ConfigError("model.conductance.kind", "slow_bond requires a segment lattice");
  if (cond.kind == "w_file" && cond.path.empty()) throw ConfigError("model.conductance.path", "required for w_file");
  if (cond.kind == "w_function") {
    if (!detail::one_of<std::string>(cond.function, {"identity", "sin2"})) {
      throw ConfigError("model.conductance.function", "must be \"identity\" or \"sin2\"");
    }
    if (!(std::abs(cond.amplitude) < 1.0)) {
      throw ConfigError("model.conductance.amplitude", "|amplitude| must be < 1 for W to be strictly increasing");
    }
  }
  if (cond.kind == "slow_bond") {
    if (!(cond.alpha > 0.0) || !std::isfinite(cond.alpha)) throw ConfigError("model.conductance.alpha", "must be > 0");
    if (!(cond.beta >= 0.0)) throw ConfigError("model.conductance.beta", "must lie in [0, inf]");
  }

  const auto& r = c.model.rates;
  if (!detail::one_of<std::string>(r.kind, {"simple", "speed_change", "porous_media"})) {
    throw ConfigError("model.rates.kind", "must be simple, speed_change or porous_media");
  }
  if (r.kind != "simple" && !(r.b > -0.5)) throw ConfigError("model.rates.b", "must satisfy b > -1/2");
  if (r.kind == "simple" && r.b != 0.0) throw ConfigError("model.rates.b", "simple rates take b = 0");
  if (r.kind == "porous_media" && (r.m < 2 || r.m > 12)) throw ConfigError("model.rates.m", "must be an integer in [2, 12]");
  if (!(c.model.rho >= 0.0 && c.model.rho <= 1.0)) throw ConfigError("model.rho", "must lie in [0,1]");

  if (!(c.run.T >= 0.0) || !std::isfinite(c.run.T)) throw ConfigError("run.T", "must be a finite number >= 0");
  for (std::size_t i = 0; i < c.run.grid.size(); ++i) {
    const std::string p = "run.grid[" + std::to_string(i) + "]";
    if (!(c.run.grid[i] > 0.0)) throw ConfigError(p, "grid times must be > 0");
    if (c.run.grid[i] > c.run.T) throw ConfigError(p, "grid time exceeds run.T");
    if (i > 0 && !(c.run.grid[i] > c.run.grid[i - 1])) throw ConfigError(p, "grid times must be strictly increasing");
  }
  if (c.run.replicas < 1) throw ConfigError("run.replicas", "must be >= 1");

  const std::uint64_t n = torus ? lat.sites : lat.scale;
  for (std::size_t i = 0; i < c.observables.epsilons.size(); ++i) {
    const std::string p = "observables.epsilons[" + std::to_string(i) + "]";
    const double e = c.observables.epsilons[i];
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError(p, "must lie in (0,1]");
    const std::size_t l = box_sites(e, n);
    const std::size_t x0 = torus ? lat.marked : lat.sites / 2;
    if (l > lat.sites || (!torus && x0 + l > lat.sites)) throw ConfigError(p, "replacement box does not fit the lattice");
  }
  for (std::size_t i = 0; i < c.observables.field_modes.size(); ++i) {
    const std::string p = "observables.field_modes[" + std::to_string(i) + "]";
    if (c.observables.field_modes[i] < 0) throw ConfigError(p, "must be >= 0");
    if (!torus) throw ConfigError(p, "field modes are defined on the torus only");
  }

  const auto& cmp = c.comparison;
  if (!detail::one_of<std::string>(cmp.regime, {"auto", "heat", "neumann", "robin", "spectral"})) {
    throw ConfigError("comparison.regime", "must be auto, heat, neumann, robin or spectral");
  }
  for (std::size_t i = 0; i < cmp.alpha.size(); ++i) {
    if (!(cmp.alpha[i] > 0.0) || !std::isfinite(cmp.alpha[i])) {
      throw ConfigError("comparison.alpha[" + std::to_string(i) + "]", "must be > 0");
    }
  }
  if (!(cmp.z_limit > 0.0)) throw ConfigError("comparison.z_limit", "must be > 0");
  if (!(cmp.pass_fraction > 0.0 && cmp.pass_fraction <= 1.0)) throw ConfigError("comparison.pass_fraction", "must lie in (0,1]");
  if (!(cmp.kurtosis_se_multiple > 0.0)) throw ConfigError("comparison.kurtosis_se_multiple", "must be > 0");
  if (!(cmp.bound_se_multiple >= 0.0)) throw ConfigError("comparison.bound_se_multiple", "must be >= 0");
  if (!(cmp.quad_abs_tol > 0.0)) throw ConfigError("comparison.quad_abs_tol", "must be > 0");
  if (!(cmp.quad_rel_tol > 0.0)) throw ConfigError("comparison.quad_rel_tol", "must be > 0");
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::ObjectReader root(j, "");
  if (const json* m = root.find("model")) {
    detail::ObjectReader model(*m, "model");
    if (const json* l = model.find("lattice")) {
      detail::ObjectReader r(*l, "model.lattice");
      r.string("kind", c.model.lattice.kind);
      r.integer("sites", c.model.lattice.sites);
      r.integer("scale", c.model.lattice.scale);
      r.integer("marked", c.model.lattice.marked);
      r.finish();
    }
    if (const json* k = model.find("conductance")) {
      detail::ObjectReader r(*k, "model.conductance");
      r.string("kind", c.model.conductance.kind);
      r.string("path", c.model.conductance.path);
      r.string("function", c.model.conductance.function);
      r.number("amplitude", c.model.conductance.amplitude);
      r.number("alpha", c.model.conductance.alpha);
      r.number("beta", c.model.conductance.beta);
      r.finish();
    }
    if (const json* k = model.find("rates")) {
      detail::ObjectReader r(*k, "model.rates");
      r.string("kind", c.model.rates.kind);
      r.number("b", c.model.rates.b);
      r.integer("m", c.model.rates.m);
      r.finish();
    }
    model.number("rho", c.model.rho);
    model.finish();
  }
  if (const json* k = root.find("run")) {
    detail::ObjectReader r(*k, "run");
    r.number("T", c.run.T);
    r.numbers("grid", c.run.grid);
    r.integer("replicas", c.run.replicas);
    r.integer("seed", c.run.seed);
    r.integer("workers", c.run.workers);
    r.finish();
  }
  if (const json* k = root.find("observables")) {
    detail::ObjectReader r(*k, "observables");
    r.numbers("epsilons", c.observables.epsilons);
    r.integers("field_modes", c.observables.field_modes);
    r.boolean("current", c.observables.current);
    r.boolean("density_profile", c.observables.density_profile);
    r.finish();
  }
  if (const json* k = root.find("comparison")) {
    detail::ObjectReader r(*k, "comparison");
    r.string("regime", c.comparison.regime);
    r.numbers("alpha", c.comparison.alpha);
    r.number("z_limit", c.comparison.z_limit);
    r.number("pass_fraction", c.comparison.pass_fraction);
    r.number("kurtosis_se_multiple", c.comparison.kurtosis_se_multiple);
    r.number("bound_se_multiple", c.comparison.bound_se_multiple);
    r.number("quad_abs_tol", c.comparison.quad_abs_tol);
    r.number("quad_rel_tol", c.comparison.quad_rel_tol);
    r.finish();
  }
  root.finish();
  return c;
}

/// Full canonical form: every field present, keys sorted (nlohmann objects
/// are ordered maps). Loading it back gives the same configuration.
/// `with_workers = false` drops the execution-only worker count, which must
/// not leak into outputs that are required to be identical across hosts.
inline json config_to_json(const ExperimentConfig& c, bool with_workers = true) {
  json j;
  j["model"]["lattice"] = {{"kind", c.model.lattice.kind}, {"sites", c.model.lattice.sites}};
  if (c.model.lattice.kind == "segment") {
    j["model"]["lattice"]["scale"] = c.model.lattice.scale;
  } else {
    j["model"]["lattice"]["marked"] = c.model.lattice.marked;
  }
  const auto& k = c.model.conductance;
  json cond = {{"kind", k.kind}};
  if (k.kind == "w_file") cond["path"] = k.path;
  if (k.kind == "w_function") {
    cond["function"] = k.function;
    if (k.function == "sin2") cond["amplitude"] = k.amplitude;
  }
  if (k.kind == "slow_bond") {
    cond["alpha"] = k.alpha;
    cond["beta"] = detail::number_or_inf(k.beta);
  }
  j["model"]["conductance"] = cond;
  j["model"]["rates"] = {{"kind", c.model.rates.kind}, {"b", c.model.rates.b}};
  if (c.model.rates.kind == "porous_media") j["model"]["rates"]["m"] = c.model.rates.m;
  j["model"]["rho"] = c.model.rho;

  j["run"] = {{"T", c.run.T}, {"grid", c.run.grid}, {"replicas", c.run.replicas}, {"seed", c.run.seed}};
  if (with_workers) j["run"]["workers"] = c.run.workers;
  j["observables"] = {{"epsilons", c.observables.epsilons},
                      {"field_modes", c.observables.field_modes},
                      {"current", c.observables.current},
                      {"density_profile", c.observables.density_profile}};
  j["comparison"] = {{"regime", c.comparison.regime},
                     {"alpha", c.comparison.alpha},
                     {"z_limit", c.comparison.z_limit},
                     {"pass_fraction", c.comparison.pass_fraction},
                     {"kurtosis_se_multiple", c.comparison.kurtosis_se_multiple},
                     {"bound_se_multiple", c.comparison.bound_se_multiple},
                     {"quad_abs_tol", c.comparison.quad_abs_tol},
                     {"quad_rel_tol", c.comparison.quad_rel_tol}};
  return j;
}

inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source, std::string("invalid JSON: ") + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig c = parse_config(ss.str(), path);
  // A relative W file path is taken relative to the config file.
  auto& w = c.model.conductance.path;
  if (!w.empty() && std::filesystem::path(w).is_relative()) {
    w = (std::filesystem::path(path).parent_path() / w).lexically_normal().string();
  }
  return c;
}

/// Everything a replica needs, built once from a validated config.
struct SimulationSetup {
  Lattice lattice;
  ConductanceProfile xi;
  RateModel rates;
  ModelParams params;
  TimeGrid grid;
  ProbeSpec probes;
  std::optional<WSamples> w;  // torus only
};

inline WSamples w_samples_for(const ExperimentConfig& c) {
  const std::size_t n = c.model.lattice.sites;
  const auto& k = c.model.conductance;
  if (k.kind == "uniform") return WSamples::identity(n);
  if (k.kind == "w_file") {
    WSamples w = read_w_samples(k.path);
    if (w.n() != n) {
      throw ConfigError("model.conductance.path", "file has " + std::to_string(w.n() + 1) + " samples; the torus needs " +
                                                      std::to_string(n + 1));
    }
    return w;
  }
  if (k.function == "identity") return WSamples::identity(n);
  const double a = k.amplitude;
  return WSamples::from_function(
      [a](double u) {
        const double s = std::sin(std::numbers::pi * u);
        return u + a * s * s / std::numbers::pi;
      },
      n);
}

inline SimulationSetup build_setup(const ExperimentConfig& c) {
  validate(c);
  const bool torus = c.model.lattice.kind == "torus";
  Lattice lattice = torus ? Lattice::torus(c.model.lattice.sites, c.model.lattice.marked)
                          : Lattice::segment(c.model.lattice.sites, c.model.lattice.scale);
  std::optional<WSamples> w;
  std::optional<ConductanceProfile> xi;
  if (torus) {
    w = w_samples_for(c);
    xi = build_conductances_from_w(*w, lattice);
  } else if (c.model.conductance.kind == "slow_bond") {
    xi = build_slow_bond_conductances(c.model.conductance.alpha, c.model.conductance.beta, lattice);
  } else {
    xi = ConductanceProfile::uniform(lattice.bonds());
  }
  RateModel rates = RateModel::simple();
  if (c.model.rates.kind == "speed_change") rates = RateModel::speed_change(c.model.rates.b);
  if (c.model.rates.kind == "porous_media") rates = RateModel::porous_media(c.model.rates.b, c.model.rates.m);
  ProbeSpec probes;
  probes.rho = c.model.rho;
  probes.epsilons = c.observables.epsilons;
  probes.field_modes = c.observables.field_modes;
  probes.current = c.observables.current;
  probes.density_profile = c.observables.density_profile;
  return SimulationSetup{lattice, *xi, rates, ModelParams(c.model.rho, c.model.rates.b), TimeGrid(c.run.grid, c.run.T),
                         probes, w};
}

/// Column names of the per-replica table, after replica and t.
inline std::vector<std::string> observable_names(const ProbeSpec& spec) {
  std::vector<std::string> names{"gamma"};
  for (double e : spec.epsilons) names.push_back("replacement_eps_" + format_double(e));
  if (spec.current) names.push_back("current");
  for (int k : spec.field_modes) names.push_back("field_k" + std::to_string(k));
  return names;
}

/// Probe values of one record in observable_names order.
inline std::vector<double> record_values(const ProbeRecord& r, const ProbeSpec& spec) {
  std::vector<double> v{r.gamma};
  v.insert(v.end(), r.replacement.begin(), r.replacement.end());
  if (spec.current) v.push_back(r.current);
  v.insert(v.end(), r.field.begin(), r.field.end());
  return v;
}

struct ReplicaResult {
  std::uint64_t id = 0;
  std::vector<ProbeRecord> records;  // t = 0 first, then the grid
  bool halted = false;
  std::uint64_t events = 0;
  std::uint64_t end_swaps = 0;
};

inline ReplicaResult run_replica(const SimulationSetup& s, std::uint64_t master_seed, std::uint64_t id,
                                 std::ostream* event_log = nullptr) {
  SimState state(s.lattice, s.xi, s.rates, s.params.rho, SeedSpec{master_seed, id});
  ProbeSet probes(s.lattice, s.probes);
  probes.attach(state.eta());
  ReplicaResult out;
  out.id = id;
  auto advance = [&](auto& observer) {
    for (double t : s.grid.times()) {
      if (state.run_to(probes.micro_time(t), observer) == RunStatus::Halted) out.halted = true;
      probes.snapshot_at(state.eta(), t);
    }
  };
  if (event_log) {
    EventLogObserver log(*event_log);
    ObserverChain<ProbeSet, EventLogObserver> chain(probes, log);
    advance(chain);
  } else {
    advance(probes);
  }
  out.records = probes.records();
  out.events = state.event_count();
  out.end_swaps = state.end_swaps();
  return out;
}

/// Runs replicas 0..count-1 on `workers` threads (0: hardware concurrency).
/// Results are stored by replica id, so the output never depends on the
/// schedule.
inline std::vector<ReplicaResult> run_ensemble(const SimulationSetup& s, std::uint64_t master_seed, std::uint64_t count,
                                               std::uint64_t workers = 1) {
  std::vector<ReplicaResult> results(count);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<std::uint64_t>(workers, std::max<std::uint64_t>(count, 1));
  std::atomic<std::uint64_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  std::uint64_t error_id = std::numeric_limits<std::uint64_t>::max();
  auto work = [&] {
    for (std::uint64_t id = next++; id < count; id = next++) {
      try {
        results[id] = run_replica(s, master_seed, id);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (id < error_id) {
          error_id = id;
          error = std::current_exception();
        }
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::uint64_t i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return results;
}

/// Grid-time values of one replica (the t = 0 row is left out).
inline stats::ReplicaSummary summarize(const ReplicaResult& r, const ProbeSpec& spec) {
  stats::ReplicaSummary s;
  s.id = r.id;
  s.observables = observable_names(spec);
  s.values.assign(s.observables.size(), {});
  for (std::size_t i = 1; i < r.records.size(); ++i) {
    s.times.push_back(r.records[i].t);
    const auto v = record_values(r.records[i], spec);
    for (std::size_t k = 0; k < v.size(); ++k) s.values[k].push_back(v[k]);
  }
  return s;
}

inline stats::EnsembleStats ensemble_stats(const std::vector<ReplicaResult>& results, const ProbeSpec& spec) {
  std::vector<stats::ReplicaSummary> summaries;
  for (const auto& r : results) summaries.push_back(summarize(r, spec));
  return stats::aggregate(summaries);
}

/// All values of one observable at grid index g (g = 0 is t = 0), by replica id.
inline std::vector<double> samples_at(const std::vector<ReplicaResult>& results, const ProbeSpec& spec,
                                      const std::string& observable, std::size_t g) {
  const auto names = observable_names(spec);
  const auto it = std::find(names.begin(), names.end(), observable);
  if (it == names.end()) throw ValidationError("no observable named '" + observable + "'");
  const auto k = static_cast<std::size_t>(it - names.begin());
  std::vector<double> out;
  for (const auto& r : results) out.push_back(record_values(r.records.at(g), spec)[k]);
  return out;
}

inline void write_observables_csv(std::ostream& out, const std::vector<ReplicaResult>& results, const ProbeSpec& spec) {
  out << "replica,t";
  for (const auto& n : observable_names(spec)) out << ',' << n;
  out << '\n';
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      out << r.id << ',' << format_double(rec.t);
      for (double v : record_values(rec, spec)) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

inline json observables_json(const std::vector<ReplicaResult>& results, const ProbeSpec& spec) {
  json rows = json::array();
  const auto names = observable_names(spec);
  for (const auto& r : results) {
    for (const auto& rec : r.records) {
      json row = {{"replica", r.id}, {"t", rec.t}};
      const auto v = record_values(rec, spec);
      for (std::size_t k = 0; k < names.size(); ++k) row[names[k]] = v[k];
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_density_csv(std::ostream& out, const std::vector<ReplicaResult>& results) {
  out << "replica,t,occupancy\n";
  for (const auto& r : results) {
    for (const auto& rec : r.records) out << r.id << ',' << format_double(rec.t) << ',' << rec.density << '\n';
  }
}

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Summary rows {observable, t, R, mean, variance, variance_SE, kurtosis}.
inline json summary_json(const stats::EnsembleStats& st) {
  json rows = json::array();
  for (std::size_t k = 0; k < st.observables().size(); ++k) {
    for (std::size_t g = 0; g < st.times().size(); ++g) {
      const auto s = st.series(k, g);
      rows.push_back({{"observable", s.observable},
                      {"t", s.t},
                      {"R", s.count},
                      {"mean", nullable(s.mean)},
                      {"variance", nullable(s.variance)},
                      {"variance_SE", nullable(s.variance_se)},
                      {"kurtosis", nullable(s.kurtosis)}});
    }
  }
  return rows;
}

struct EnsembleRun {
  SimulationSetup setup;
  std::vector<ReplicaResult> results;
  std::optional<stats::EnsembleStats> stats;  // empty when the grid is empty
  std::vector<std::string> warnings;
  json diagnostics;
};

inline EnsembleRun simulate(const ExperimentConfig& c) {
  EnsembleRun run{build_setup(c), {}, std::nullopt, {}, json::object()};
  run.results = run_ensemble(run.setup, c.run.seed, c.run.replicas, c.run.workers);
  if (!run.setup.grid.empty()) run.stats = ensemble_stats(run.results, run.setup.probes);

  json halted = json::array();
  std::uint64_t events = 0;
  std::uint64_t end_swaps = 0;
  for (const auto& r : run.results) {
    if (r.halted) halted.push_back(r.id);
    events += r.events;
    end_swaps += r.end_swaps;
  }
  if (!halted.empty()) {
    run.warnings.push_back(std::to_string(halted.size()) +
                           " replica(s) reached an absorbing configuration and idled to the deadline");
  }
  if (run.setup.w) {
    const HolderReport h = holder_report(*run.setup.w, 1.0);
    if (h.warning) run.warnings.push_back("W samples show no O(eps) small-box bound (ratio growth " + format_double(h.growth) + ")");
  }
  run.diagnostics = {{"halted_replicas", halted}, {"total_events", events}};
  if (!run.setup.lattice.periodic()) run.diagnostics["segment_end_exchanges"] = end_swaps;
  return run;
}

/// Ensemble JSON document: provenance, warnings, diagnostics and summary.
inline json ensemble_json(const ExperimentConfig& c, const EnsembleRun& run) {
  json j;
  j["version"] = version_string();
  j["config"] = config_to_json(c, false);
  j["warnings"] = run.warnings;
  j["diagnostics"] = run.diagnostics;
  j["summary"] = run.stats ? summary_json(*run.stats) : json::array();
  return j;
}

struct TheoryRow {
  std::string regime;
  std::optional<double> alpha;
  double rho = 0.0;
  double t = 0.0;
  double variance = 0.0;
  double error_estimate = 0.0;
};

/// Regime implied by the model when comparison.regime is "auto".
inline std::string resolve_regime(const ExperimentConfig& c) {
  if (c.comparison.regime != "auto") return c.comparison.regime;
  if (c.model.lattice.kind == "torus") return "spectral";
  if (c.model.conductance.kind == "slow_bond") {
    const double beta = c.model.conductance.beta;
    if (beta < 1.0) return "heat";
    if (beta == 1.0) return "robin";
    return "neumann";
  }
  return "heat";
}

inline std::vector<double> robin_alphas(const ExperimentConfig& c) {
  if (!c.comparison.alpha.empty()) return c.comparison.alpha;
  if (c.model.conductance.kind == "slow_bond") return {c.model.conductance.alpha};
  throw ConfigError("comparison.alpha", "required for the robin regime without a slow-bond model");
}

inline std::vector<TheoryRow> theory_table(const ExperimentConfig& c) {
  validate(c);
  const std::string regime = resolve_regime(c);
  const double rho = c.model.rho;
  const QuadratureSpec q{c.comparison.quad_abs_tol, c.comparison.quad_rel_tol};
  std::vector<TheoryRow> rows;
  if (regime == "heat" || regime == "neumann") {
    for (double t : c.run.grid) {
      const double v = regime == "heat" ? theory::var_gamma_heat(t, rho) : theory::var_gamma_neumann(t, rho);
      rows.push_back({regime, std::nullopt, rho, t, v, 0.0});
    }
  } else if (regime == "robin") {
    for (double a : robin_alphas(c)) {
      for (double t : c.run.grid) {
        const QuadResult r = theory::var_gamma_robin(a, t, rho, q);
        rows.push_back({regime, a, rho, t, r.value, r.total_error()});
      }
    }
  } else {
    if (c.model.lattice.kind != "torus") throw ConfigError("comparison.regime", "spectral theory requires a torus lattice");
    const auto dec = spectral::decompose(spectral::assemble(w_samples_for(c)));
    for (double t : c.run.grid) {
      const double v = spectral::var_gamma_spectral(dec, t, rho, c.model.rates.b, c.model.lattice.marked);
      rows.push_back({regime, std::nullopt, rho, t, v, 0.0});
    }
  }
  return rows;
}

inline json theory_json(const ExperimentConfig& c, const std::vector<TheoryRow>& rows) {
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"regime", r.regime},
                     {"alpha", r.alpha ? json(*r.alpha) : json(nullptr)},
                     {"rho", r.rho},
                     {"t", r.t},
                     {"variance", r.variance},
                     {"error_estimate", r.error_estimate}});
  }
  return {{"version", version_string()}, {"config", config_to_json(c, false)}, {"table", table}};
}

}  // namespace occtime
