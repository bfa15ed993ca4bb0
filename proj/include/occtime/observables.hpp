#pragma once

// Exact accumulation of trajectory functionals: occupation time of the
// marked site, local-replacement integrals, current across the bond left of
// the marked site, density fluctuation field and density snapshots.
//
// The configuration is constant between events, so each time integral is a
// sum of (piecewise-constant integrand) x (interval length). A piece is only
// committed when the integrand changes value, and snapshots read the open
// piece without committing it. Adding snapshot times therefore changes no
// recorded value.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "occtime/error.hpp"
#include "occtime/model.hpp"

namespace occtime {

/// Compensated (Kahan) running sum.
class KahanSum {
public:
  void add(double x) noexcept {
    const double y = x - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const noexcept { return sum_; }

private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// Macroscopic snapshot times 0 < t_1 < ... < t_G <= t_max.
class TimeGrid {
public:
  TimeGrid() = default;

  TimeGrid(std::vector<double> times, double t_max) : times_(std::move(times)), t_max_(t_max) {
    for (std::size_t i = 0; i < times_.size(); ++i) {
      if (!(times_[i] > 0.0)) throw ValidationError("grid times must be > 0");
      if (times_[i] > t_max) throw ValidationError("grid time exceeds T");
      if (i > 0 && !(times_[i] > times_[i - 1])) throw ValidationError("grid times must be strictly increasing");
    }
  }

  const std::vector<double>& times() const noexcept { return times_; }
  double t_max() const noexcept { return t_max_; }
  std::size_t size() const noexcept { return times_.size(); }
  bool empty() const noexcept { return times_.empty(); }

private:
  std::vector<double> times_;
  double t_max_ = 0.0;
};

/// Integral of an integer-valued piecewise-constant integrand in microscopic
/// time, committed lazily.
class PiecewiseIntegral {
public:
  void start(std::int64_t value, double t) noexcept {
    value_ = value;
    since_ = t;
  }

  void update(std::int64_t value, double t) noexcept {
    if (value == value_) return;
    committed_.add(static_cast<double>(value_) * (t - since_));
    value_ = value;
    since_ = t;
  }

  double at(double t) const noexcept { return committed_.value() + static_cast<double>(value_) * (t - since_); }

private:
  KahanSum committed_;
  std::int64_t value_ = 0;
  double since_ = 0.0;
};

struct ProbeSpec {
  double rho = 0.5;
  std::vector<double> epsilons;  ///< replacement box widths
  std::vector<int> field_modes;  ///< k = 0: H = 1; k >= 1: H = sqrt(2) cos(2 pi k u)
  bool current = true;
  bool density_profile = false;
};

struct ProbeRecord {
  double t = 0.0;
  double gamma = 0.0;
  std::vector<double> replacement;
  double current = 0.0;
  std::vector<double> field;
  std::string density;
};

/// Test function H_k sampled at u.
inline double field_mode_value(int k, double u) {
  if (k == 0) return 1.0;
  return std::numbers::sqrt2 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) * u);
}

/// All probes attached to one trajectory. Acts as an engine observer.
class ProbeSet {
public:
  ProbeSet(const Lattice& lattice, ProbeSpec spec)
      : lattice_(lattice), spec_(std::move(spec)), x0_(lattice.marked_site()), n_(static_cast<double>(lattice.scale())) {
    if (!(spec_.rho >= 0.0 && spec_.rho <= 1.0)) throw ValidationError("probe density must lie in [0,1]");
    for (double eps : spec_.epsilons) {
      if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("replacement eps must lie in (0,1]");
      const std::size_t l = box_sites(eps, lattice.scale());
      if (l > lattice.sites()) throw ValidationError("replacement box wider than the lattice");
      if (!lattice.periodic() && x0_ + l > lattice.sites()) {
        throw ValidationError("replacement box runs past the segment end");
      }
      Box box;
      box.len = l;
      box.member.assign(lattice.sites(), 0);
      for (std::size_t i = 0; i < l; ++i) box.member[lattice.offset_site(x0_, static_cast<std::ptrdiff_t>(i))] = 1;
      boxes_.push_back(std::move(box));
    }
    for (int k : spec_.field_modes) {
      if (k < 0) throw ValidationError("field mode index must be >= 0");
      std::vector<double> h(lattice.sites());
      for (std::size_t x = 0; x < lattice.sites(); ++x) h[x] = field_mode_value(k, site_coordinate(x));
      field_h_.push_back(std::move(h));
    }
    if (spec_.current) current_bond_ = lattice.bond_left_of_marked();
  }

  const ProbeSpec& spec() const noexcept { return spec_; }
  const std::vector<ProbeRecord>& records() const noexcept { return records_; }
  std::size_t current_bond() const noexcept { return current_bond_; }
  std::int64_t current_count() const noexcept { return current_; }
  std::uint64_t current_bond_events() const noexcept { return current_events_; }

  /// Microscopic deadline for macroscopic time t.
  double micro_time(double t) const noexcept { return t * n_ * n_; }

  /// Macroscopic coordinate of site x: x/n on the torus, (x - x0)/n on a segment.
  double site_coordinate(std::size_t x) const noexcept {
    if (lattice_.periodic()) return static_cast<double>(x) / n_;
    return (static_cast<double>(x) - static_cast<double>(x0_)) / n_;
  }

  /// Binds the probes to the initial configuration and records the t = 0 row.
  void attach(const Configuration& eta, double micro_t0 = 0.0) {
    if (eta.size() != lattice_.sites()) throw ValidationError("configuration length does not match lattice");
    occupied_.start(eta[x0_], micro_t0);
    for (auto& box : boxes_) {
      box.count = 0;
      for (std::size_t x = 0; x < eta.size(); ++x) box.count += box.member[x] & eta[x];
      box.integral.start(replacement_integrand(box, eta), micro_t0);
    }
    t0_ = micro_t0;
    attached_ = true;
    records_.clear();
    last_t_ = -1.0;
    take_snapshot(eta, 0.0, micro_t0);
  }

  /// Adds (integrand at eta) x (t_end - t_begin) to every integral probe.
  void observe_interval(const Configuration& eta, double t_begin, double /*t_end*/) {
    occupied_.update(eta[x0_], t_begin);
    for (auto& box : boxes_) box.integral.update(replacement_integrand(box, eta), t_begin);
  }

  void on_interval(const Configuration& eta, double t_begin, double t_end) { observe_interval(eta, t_begin, t_end); }

  void on_swap(const Configuration& eta, std::size_t bond, double /*t*/) {
    const auto [x, y] = lattice_.bond_sites(bond);
    if (eta[x] == eta[y]) return;
    for (auto& box : boxes_) {
      if (box.member[x] != box.member[y]) {
        // The particle leaves the box when it sits on the member site.
        const std::size_t inside = box.member[x] ? x : y;
        box.count += eta[inside] ? -1 : 1;
      }
    }
    if (spec_.current && bond == current_bond_) {
      current_ += eta[x] ? 1 : -1;
      ++current_events_;
    }
  }

  /// Records every probe at macroscopic time t; the engine clock must equal
  /// micro_time(t) and eta must be the configuration at that time.
  void snapshot_at(const Configuration& eta, double t) {
    if (!attached_) throw std::logic_error("ProbeSet::snapshot_at before attach");
    if (!(t > last_t_)) throw std::logic_error("ProbeSet::snapshot_at called out of order");
    take_snapshot(eta, t, t0_ + micro_time(t));
  }

  /// Occupation time in microscopic units, integral of (eta_s(x0) - rho) ds.
  double gamma_integral(double micro_t) const noexcept { return occupied_.at(micro_t) - spec_.rho * (micro_t - t0_); }

private:
  struct Box {
    std::size_t len = 0;
    std::vector<std::uint8_t> member;
    std::int64_t count = 0;
    PiecewiseIntegral integral;  // of len * eta(x0) - count
  };

  std::int64_t replacement_integrand(const Box& box, const Configuration& eta) const noexcept {
    return static_cast<std::int64_t>(box.len) * eta[x0_] - box.count;
  }

  void take_snapshot(const Configuration& eta, double t, double micro_t) {
    ProbeRecord rec;
    rec.t = t;
    rec.gamma = gamma_integral(micro_t) / (n_ * std::sqrt(n_));
    for (const auto& box : boxes_) {
      // sqrt(n) * integral over macroscopic time = sqrt(n)/n^2 * microscopic integral.
      rec.replacement.push_back(box.integral.at(micro_t) / static_cast<double>(box.len) / (n_ * std::sqrt(n_)));
    }
    rec.current = static_cast<double>(current_) / std::sqrt(n_);
    for (const auto& h : field_h_) {
      KahanSum y;
      for (std::size_t x = 0; x < eta.size(); ++x) y.add(h[x] * (static_cast<double>(eta[x]) - spec_.rho));
      rec.field.push_back(y.value() / std::sqrt(n_));
    }
    if (spec_.density_profile) rec.density = eta.to_string();
    records_.push_back(std::move(rec));
    last_t_ = t;
  }

  Lattice lattice_;
  ProbeSpec spec_;
  std::size_t x0_;
  double n_;
  double t0_ = 0.0;
  bool attached_ = false;
  double last_t_ = -1.0;
  PiecewiseIntegral occupied_;
  std::vector<Box> boxes_;
  std::vector<std::vector<double>> field_h_;
  std::size_t current_bond_ = 0;
  std::int64_t current_ = 0;
  std::uint64_t current_events_ = 0;
  std::vector<ProbeRecord> records_;
};

}  // namespace occtime
