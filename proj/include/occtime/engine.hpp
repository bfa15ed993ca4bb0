#pragma once

// Event-driven simulation of the exclusion process with conductances.
//
// Only discordant bonds (eta(x) != eta(x+1)) carry weight, since exchanging
// equal occupations is the identity. Each event draws one uniform for the
// exponential waiting time and a second one for the tree descent that picks
// the bond.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "occtime/error.hpp"
#include "occtime/format.hpp"
#include "occtime/model.hpp"
#include "occtime/rate_index.hpp"
#include "occtime/rng.hpp"

namespace occtime {

/// Each site occupied independently with probability rho, one uniform per
/// site in site order.
inline Configuration sample_initial(double rho, const Lattice& lattice, ReplicaRng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("density rho must lie in [0,1]");
  Configuration eta(lattice.sites(), 0);
  for (auto& s : eta.occ) s = rng.uniform() < rho ? 1 : 0;
  return eta;
}

inline Configuration sample_initial(double rho, const Lattice& lattice, const SeedSpec& seed) {
  ReplicaRng rng(seed);
  return sample_initial(rho, lattice, rng);
}

struct Event {
  double dt;
  std::size_t bond;
};

enum class RunStatus { Reached, Halted };

/// Observer that ignores everything; also documents the observer protocol.
struct NullObserver {
  /// eta is constant on [t_begin, t_end) in microscopic time.
  void on_interval(const Configuration& /*eta*/, double /*t_begin*/, double /*t_end*/) {}
  /// Called at time t, before the exchange across `bond` is applied.
  void on_swap(const Configuration& /*eta_before*/, std::size_t /*bond*/, double /*t*/) {}
};

/// Mutable state of one replica: configuration, bond rates, microscopic
/// clock and random stream. Not shareable between threads.
class SimState {
public:
  static constexpr std::uint64_t kRebuildPeriod = std::uint64_t{1} << 20;

  SimState(Lattice lattice, ConductanceProfile xi, RateModel model, Configuration eta, ReplicaRng rng)
      : lattice_(std::move(lattice)),
        xi_(std::move(xi)),
        model_(model),
        eta_(std::move(eta)),
        rng_(std::move(rng)),
        rates_(lattice_.bonds()) {
    if (eta_.size() != lattice_.sites()) throw ValidationError("configuration length does not match lattice");
    if (xi_.size() != lattice_.bonds()) throw ValidationError("conductance profile length does not match lattice");
    halo_ = static_cast<std::size_t>(model_.window_radius()) + 1;
    if (lattice_.periodic() && halo_ > lattice_.sites()) {
      throw ValidationError("rate window wider than the torus");
    }
    padded_.assign(lattice_.sites() + 2 * halo_, 0);
    for (std::size_t x = 0; x < lattice_.sites(); ++x) write_site(x, eta_[x]);
    for (std::size_t e = 0; e < lattice_.bonds(); ++e) rates_.set_leaf_only(e, fast_weight(e));
    rates_.rebuild();
  }

  SimState(Lattice lattice, ConductanceProfile xi, RateModel model, double rho, const SeedSpec& seed)
      : SimState(make(std::move(lattice), std::move(xi), model, rho, seed)) {}

  const Lattice& lattice() const noexcept { return lattice_; }
  const ConductanceProfile& conductances() const noexcept { return xi_; }
  const RateModel& rate_model() const noexcept { return model_; }
  const Configuration& eta() const noexcept { return eta_; }
  const RateIndex& rates() const noexcept { return rates_; }
  double micro_time() const noexcept { return time_; }
  std::uint64_t event_count() const noexcept { return events_; }
  double total_rate() const noexcept { return rates_.total(); }
  /// Exchanges involving a site within the rate window of a segment end.
  std::uint64_t end_swaps() const noexcept { return end_swaps_; }

  /// xi_e c_e(eta) 1{eta discordant at e}, evaluated from scratch.
  double reference_weight(std::size_t e) const {
    if (xi_[e] == 0.0) return 0.0;
    const auto [x, y] = lattice_.bond_sites(e);
    if (eta_[x] == eta_[y]) return 0.0;
    return xi_[e] * local_rate(model_, lattice_, eta_, e);
  }

  /// Full O(n) recompute of every weight and of the tree, compared exactly.
  bool rates_consistent() const {
    RateIndex fresh(lattice_.bonds());
    for (std::size_t e = 0; e < lattice_.bonds(); ++e) fresh.set_leaf_only(e, reference_weight(e));
    fresh.rebuild();
    return fresh == rates_;
  }

  /// One event. Returns nullopt (Halted) when no bond can fire.
  std::optional<Event> step() {
    NullObserver none;
    return advance(none);
  }

  /// Runs until the microscopic clock reaches `deadline`. An event whose
  /// time would cross the deadline stays pending and fires in a later call,
  /// so splitting a run at intermediate deadlines gives a bit-identical
  /// trajectory.
  template <class Observer>
  RunStatus run_to(double deadline, Observer& obs) {
    if (deadline < time_) throw ValidationError("run_to deadline lies in the past");
    while (true) {
      if (!pending_) {
        const double total = rates_.total();
        if (!(total > 0.0)) {
          obs.on_interval(eta_, time_, deadline);
          time_ = deadline;
          return RunStatus::Halted;
        }
        pending_ = time_ + rng_.exponential(total);
      }
      if (*pending_ > deadline) {
        obs.on_interval(eta_, time_, deadline);
        time_ = deadline;
        return RunStatus::Reached;
      }
      advance(obs);
    }
  }

  RunStatus run_to(double deadline) {
    NullObserver none;
    return run_to(deadline, none);
  }

private:
  static SimState make(Lattice lattice, ConductanceProfile xi, RateModel model, double rho, const SeedSpec& seed) {
    ReplicaRng rng(seed);
    Configuration eta = sample_initial(rho, lattice, rng);
    return SimState(std::move(lattice), std::move(xi), model, std::move(eta), std::move(rng));
  }

  template <class Observer>
  std::optional<Event> advance(Observer& obs) {
    const double total = rates_.total();
    if (!pending_) {
      if (!(total > 0.0)) return std::nullopt;
      pending_ = time_ + rng_.exponential(total);
    }
    const double t_event = *pending_;
    pending_.reset();
    const std::size_t bond = rates_.find(rng_.uniform() * total);

    obs.on_interval(eta_, time_, t_event);
    obs.on_swap(eta_, bond, t_event);

    const double dt = t_event - time_;
    const auto [x, y] = lattice_.bond_sites(bond);
    std::swap(eta_.occ[x], eta_.occ[y]);
    write_site(x, eta_[x]);
    write_site(y, eta_[y]);
    refresh_around(bond);
    if (!lattice_.periodic()) {
      const std::size_t r = static_cast<std::size_t>(model_.window_radius());
      if (x <= r || y + r + 1 >= lattice_.sites()) ++end_swaps_;
    }

    time_ = t_event;
    if (++events_ % kRebuildPeriod == 0) rates_.rebuild();
    return Event{dt, bond};
  }

  void write_site(std::size_t x, std::uint8_t v) noexcept {
    padded_[x + halo_] = v;
    if (lattice_.periodic()) {
      const std::size_t n = lattice_.sites();
      if (x < halo_) padded_[x + n + halo_] = v;
      if (x + halo_ >= n) padded_[x + halo_ - n] = v;
    }
  }

  double fast_weight(std::size_t e) const noexcept {
    const double xi = xi_[e];
    const std::uint8_t* p = padded_.data() + e + halo_;
    if (xi == 0.0 || p[0] == p[1]) return 0.0;
    return xi * model_.rate([p](int off) { return static_cast<int>(p[off]); });
  }

  void refresh_around(std::size_t bond) noexcept {
    const std::size_t nb = lattice_.bonds();
    std::size_t first = bond >= halo_ ? bond - halo_ : 0;
    std::size_t last = std::min(bond + halo_, nb - 1);
    if (lattice_.periodic() && 2 * halo_ + 1 >= nb) {
      for (std::size_t e = 0; e < nb; ++e) rates_.set_leaf_only(e, fast_weight(e));
      rates_.refresh_range(0, nb - 1);
      return;
    }
    if (lattice_.periodic() && (bond < halo_ || bond + halo_ >= nb)) {
      // The window wraps: refresh the two pieces separately.
      for (std::size_t d = 0; d <= 2 * halo_; ++d) {
        const std::size_t e = (bond + nb - halo_ + d) % nb;
        rates_.set_leaf_only(e, fast_weight(e));
      }
      if (bond < halo_) {
        rates_.refresh_range(0, bond + halo_);
        rates_.refresh_range(nb + bond - halo_, nb - 1);
      } else {
        rates_.refresh_range(bond - halo_, nb - 1);
        rates_.refresh_range(0, bond + halo_ - nb);
      }
      return;
    }
    for (std::size_t e = first; e <= last; ++e) rates_.set_leaf_only(e, fast_weight(e));
    rates_.refresh_range(first, last);
  }

  Lattice lattice_;
  ConductanceProfile xi_;
  RateModel model_;
  Configuration eta_;
  ReplicaRng rng_;
  RateIndex rates_;
  std::size_t halo_ = 1;
  std::vector<std::uint8_t> padded_;
  double time_ = 0.0;
  std::optional<double> pending_;
  std::uint64_t events_ = 0;
  std::uint64_t end_swaps_ = 0;
};

/// Writes "event_count,micro_time,bond" lines for every applied event.
class EventLogObserver {
public:
  explicit EventLogObserver(std::ostream& out, bool header = true) : out_(out) {
    if (header) out_ << "event_count,micro_time,bond\n";
  }

  void on_interval(const Configuration&, double, double) {}

  void on_swap(const Configuration&, std::size_t bond, double t) {
    out_ << ++count_ << ',' << format_double(t) << ',' << bond << '\n';
  }

private:
  std::ostream& out_;
  std::uint64_t count_ = 0;
};

/// Fans observer callbacks out to several observers in order.
template <class... Observers>
class ObserverChain {
public:
  explicit ObserverChain(Observers&... obs) : obs_(obs...) {}

  void on_interval(const Configuration& eta, double t0, double t1) {
    std::apply([&](auto&... o) { (o.on_interval(eta, t0, t1), ...); }, obs_);
  }
  void on_swap(const Configuration& eta, std::size_t bond, double t) {
    std::apply([&](auto&... o) { (o.on_swap(eta, bond, t), ...); }, obs_);
  }

private:
  std::tuple<Observers&...> obs_;
};

}  // namespace occtime
