#pragma once

// Lattices, conductance profiles, jump-rate models and configurations of the
// speed-change exclusion process with conductances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "occtime/error.hpp"

namespace occtime {

enum class LatticeKind { Torus, Segment };

/// A one-dimensional lattice: a periodic torus of n sites, or a closed
/// segment of L sites standing in for Z. The marked site is the origin for
/// the occupation time and for the slow bond.
///
/// `scale()` is the macroscopic unit n: time is accelerated by n^2 and
/// fields are tested against H(x/n). On a torus it equals the site count; on
/// a segment it is an independent parameter.
class Lattice {
public:
  static Lattice torus(std::size_t n, std::size_t marked = 0) {
    if (n < 4) throw ValidationError("torus needs n >= 4 sites, got " + std::to_string(n));
    if (marked >= n) throw ValidationError("marked site " + std::to_string(marked) + " outside torus");
    return Lattice(LatticeKind::Torus, n, n, marked);
  }

  /// Segment of `length` sites with the marked site at its center.
  static Lattice segment(std::size_t length, std::size_t scale) {
    if (length < 8) throw ValidationError("segment needs L >= 8 sites, got " + std::to_string(length));
    if (scale < 1) throw ValidationError("segment scale must be >= 1");
    return Lattice(LatticeKind::Segment, length, scale, length / 2);
  }

  LatticeKind kind() const noexcept { return kind_; }
  bool periodic() const noexcept { return kind_ == LatticeKind::Torus; }
  std::size_t sites() const noexcept { return sites_; }
  std::size_t bonds() const noexcept { return periodic() ? sites_ : sites_ - 1; }
  std::size_t scale() const noexcept { return scale_; }
  std::size_t marked_site() const noexcept { return marked_; }

  /// Sites joined by bond `b`: (b, b+1), wrapping on the torus.
  std::pair<std::size_t, std::size_t> bond_sites(std::size_t b) const noexcept {
    return {b, (b + 1 == sites_) ? 0 : b + 1};
  }

  /// Bond whose right endpoint is the marked site (the slow bond).
  std::size_t bond_left_of_marked() const {
    if (marked_ == 0) {
      if (!periodic()) throw ValidationError("marked site at segment end has no left bond");
      return sites_ - 1;
    }
    return marked_ - 1;
  }

  /// Site index `x + offset`, wrapped on the torus; nullopt-like sentinel
  /// `sites()` when it falls off a segment.
  std::size_t offset_site(std::size_t x, std::ptrdiff_t offset) const noexcept {
    auto y = static_cast<std::ptrdiff_t>(x) + offset;
    const auto n = static_cast<std::ptrdiff_t>(sites_);
    if (periodic()) {
      y %= n;
      if (y < 0) y += n;
      return static_cast<std::size_t>(y);
    }
    return (y < 0 || y >= n) ? sites_ : static_cast<std::size_t>(y);
  }

  bool operator==(const Lattice&) const = default;

private:
  Lattice(LatticeKind kind, std::size_t sites, std::size_t scale, std::size_t marked)
      : kind_(kind), sites_(sites), scale_(scale), marked_(marked) {}

  LatticeKind kind_;
  std::size_t sites_;
  std::size_t scale_;
  std::size_t marked_;
};

/// Samples W(0/n), W(1/n), ..., W(n/n) of a strictly increasing driving
/// function, one per site boundary of an n-site torus.
class WSamples {
public:
  explicit WSamples(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw ValidationError("W needs at least two samples");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) {
        throw ValidationError("W sample " + std::to_string(i) + " is not finite");
      }
      if (i > 0 && !(values_[i] > values_[i - 1])) {
        throw ValidationError("W samples not strictly increasing at index " + std::to_string(i));
      }
    }
  }

  static WSamples from_function(const std::function<double(double)>& w, std::size_t n) {
    std::vector<double> v(n + 1);
    for (std::size_t x = 0; x <= n; ++x) v[x] = w(static_cast<double>(x) / static_cast<double>(n));
    return WSamples(std::move(v));
  }

  static WSamples identity(std::size_t n) {
    return from_function([](double u) { return u; }, n);
  }

  std::size_t n() const noexcept { return values_.size() - 1; }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t x) const noexcept { return values_[x]; }
  double periodic_increment() const noexcept { return values_.back() - values_.front(); }

  /// W((x+1)/n) - W(x/n), with the periodic extension at the last bond.
  double increment(std::size_t x) const noexcept { return values_[x + 1] - values_[x]; }

private:
  std::vector<double> values_;
};

/// Reads a two-column (u, W(u)) text file. Blank lines and lines starting
/// with '#' are skipped. The u column must be the uniform grid 0, 1/n, ...,
/// 1 covering exactly one period.
inline WSamples parse_w_samples(std::istream& in, const std::string& source = "<stream>") {
  std::vector<double> us;
  std::vector<double> ws;
  std::vector<std::size_t> lines;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](std::size_t at, const std::string& msg) -> ValidationError {
    return ValidationError(source + ":" + std::to_string(at) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double u = 0.0;
    double w = 0.0;
    if (!(row >> u >> w)) throw fail(lineno, "expected two numeric columns (u, W(u))");
    std::string extra;
    if (row >> extra) throw fail(lineno, "unexpected trailing field '" + extra + "'");
    if (!us.empty() && !(u > us.back())) throw fail(lineno, "u column not strictly increasing");
    if (!ws.empty() && !(w > ws.back())) throw fail(lineno, "W not strictly increasing");
    us.push_back(u);
    ws.push_back(w);
    lines.push_back(lineno);
  }
  if (us.size() < 5) throw fail(lineno, "need at least 5 samples (n >= 4)");
  const std::size_t n = us.size() - 1;
  for (std::size_t i = 0; i <= n; ++i) {
    const double expect = static_cast<double>(i) / static_cast<double>(n);
    if (std::abs(us[i] - expect) > 1e-9) {
      throw fail(lines[i], "u = " + std::to_string(us[i]) + " is off the uniform grid of one period (expected " +
                               std::to_string(expect) + ")");
    }
  }
  return WSamples(std::move(ws));
}

inline WSamples read_w_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open W sample file '" + path + "'");
  return parse_w_samples(in, path);
}

/// Per-bond conductances xi. Entries are strictly positive, except that a
/// disconnecting slow bond may contribute a single exact zero.
class ConductanceProfile {
public:
  explicit ConductanceProfile(std::vector<double> xi, bool allow_single_zero = false) : xi_(std::move(xi)) {
    std::size_t zeros = 0;
    for (std::size_t e = 0; e < xi_.size(); ++e) {
      if (!std::isfinite(xi_[e]) || xi_[e] < 0.0) {
        throw ValidationError("conductance at bond " + std::to_string(e) + " is not a nonnegative number");
      }
      if (xi_[e] == 0.0) ++zeros;
    }
    if (zeros > (allow_single_zero ? 1u : 0u)) throw ValidationError("conductance profile has zero entries");
  }

  static ConductanceProfile uniform(std::size_t bonds, double value = 1.0) {
    return ConductanceProfile(std::vector<double>(bonds, value));
  }

  std::size_t size() const noexcept { return xi_.size(); }
  double operator[](std::size_t e) const noexcept { return xi_[e]; }
  const std::vector<double>& values() const noexcept { return xi_; }

private:
  std::vector<double> xi_;
};

/// xi_{x,x+1} = 1 / (n (W((x+1)/n) - W(x/n))) on the torus.
inline ConductanceProfile build_conductances_from_w(const WSamples& w, const Lattice& lattice) {
  if (!lattice.periodic()) throw ValidationError("W-driven conductances require a torus lattice");
  if (w.n() != lattice.sites()) {
    throw ValidationError("W has " + std::to_string(w.n() + 1) + " samples but the torus has " +
                          std::to_string(lattice.sites()) + " sites (expected n+1 samples)");
  }
  const auto n = static_cast<double>(w.n());
  std::vector<double> xi(w.n());
  for (std::size_t x = 0; x < w.n(); ++x) xi[x] = 1.0 / (n * w.increment(x));
  return ConductanceProfile(std::move(xi));
}

/// Slow bond of rate alpha * n^-beta immediately left of the marked site of
/// a segment; every other bond has rate 1. beta = +inf disconnects exactly.
inline ConductanceProfile build_slow_bond_conductances(double alpha, double beta, const Lattice& lattice) {
  if (lattice.periodic()) throw ValidationError("slow-bond profile requires a segment lattice");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("slow bond alpha must be > 0");
  if (!(beta >= 0.0)) throw ValidationError("slow bond beta must lie in [0, inf]");
  std::vector<double> xi(lattice.bonds(), 1.0);
  const double scale = static_cast<double>(lattice.scale());
  xi[lattice.bond_left_of_marked()] = std::isinf(beta) ? 0.0 : alpha * std::pow(scale, -beta);
  return ConductanceProfile(std::move(xi), true);
}

enum class RateKind { Simple, SpeedChange, PorousMedia };

/// Occupancy-dependent rate factor c_{x,x+1}(eta).
///
/// SpeedChange: 1 + b (eta(x-1) + eta(x+2)).
/// PorousMedia(m): 1 + b * sum of the m products of m-1 consecutive
/// occupations taken from sliding windows around the bond that skip x and x+1.
/// Simple: 1.
class RateModel {
public:
  static RateModel simple() { return RateModel(RateKind::Simple, 0.0, 0); }

  static RateModel speed_change(double b) {
    check_b(b);
    return RateModel(RateKind::SpeedChange, b, 2);
  }

  static RateModel porous_media(double b, int m) {
    check_b(b);
    if (m < 2) throw ValidationError("porous-media exponent m must be an integer >= 2, got " + std::to_string(m));
    if (m > 12) throw ValidationError("porous-media exponent m > 12 is not supported");
    RateModel model(RateKind::PorousMedia, b, m);
    model.check_positive_on_all_windows();
    return model;
  }

  RateKind kind() const noexcept { return kind_; }
  double b() const noexcept { return b_; }
  int m() const noexcept { return m_; }

  /// Sites x - radius + 1 ... x + radius are read by the rate of bond x.
  int window_radius() const noexcept {
    switch (kind_) {
      case RateKind::SpeedChange: return 2;
      case RateKind::PorousMedia: return m_;
      case RateKind::Simple: break;
    }
    return 0;
  }

  /// Rate of bond x given an accessor `occ(offset)` returning eta(x + offset)
  /// (0 for sites that do not exist).
  template <class Occ>
  double rate(Occ&& occ) const {
    switch (kind_) {
      case RateKind::Simple: return 1.0;
      case RateKind::SpeedChange: return 1.0 + b_ * static_cast<double>(occ(-1) + occ(2));
      case RateKind::PorousMedia: {
        int sum = 0;
        for (int i = 0; i < m_; ++i) {
          int prod = 1;
          for (int j = -(m_ - 1) + i; j <= 1 + i && prod; ++j) {
            if (j == 0 || j == 1) continue;
            prod &= occ(j);
          }
          sum += prod;
        }
        return 1.0 + b_ * static_cast<double>(sum);
      }
    }
    return 1.0;
  }

private:
  RateModel(RateKind kind, double b, int m) : kind_(kind), b_(b), m_(m) {}

  static void check_b(double b) {
    if (!(b > -0.5) || !std::isfinite(b)) {
      throw ValidationError("interaction strength b must satisfy b > -1/2, got " + std::to_string(b));
    }
  }

  // Enumerates every occupation of the 2m sites that can enter the rate.
  void check_positive_on_all_windows() const {
    const int width = 2 * m_;
    for (std::uint32_t mask = 0; mask < (1u << width); ++mask) {
      auto occ = [&](int offset) { return static_cast<int>((mask >> (offset + m_ - 1)) & 1u); };
      if (!(rate(occ) > 0.0)) {
        throw ValidationError("porous-media rate with b=" + std::to_string(b_) + ", m=" + std::to_string(m_) +
                              " vanishes on some local configuration");
      }
    }
  }

  RateKind kind_;
  double b_;
  int m_;
};

/// Occupation bit per site.
struct Configuration {
  std::vector<std::uint8_t> occ;

  Configuration() = default;
  explicit Configuration(std::vector<std::uint8_t> bits) : occ(std::move(bits)) {}
  Configuration(std::size_t n, std::uint8_t value) : occ(n, value) {}

  /// Parses strings like "1010".
  static Configuration from_string(const std::string& bits) {
    Configuration c;
    c.occ.reserve(bits.size());
    for (char ch : bits) {
      if (ch != '0' && ch != '1') throw ValidationError("configuration string must be 0/1");
      c.occ.push_back(static_cast<std::uint8_t>(ch - '0'));
    }
    return c;
  }

  std::size_t size() const noexcept { return occ.size(); }
  std::uint8_t operator[](std::size_t x) const noexcept { return occ[x]; }
  std::uint8_t& operator[](std::size_t x) noexcept { return occ[x]; }

  std::size_t particles() const noexcept {
    return static_cast<std::size_t>(std::count(occ.begin(), occ.end(), std::uint8_t{1}));
  }

  std::string to_string() const {
    std::string s(occ.size(), '0');
    for (std::size_t i = 0; i < occ.size(); ++i) s[i] = static_cast<char>('0' + occ[i]);
    return s;
  }

  bool operator==(const Configuration&) const = default;
};

/// c_{x,x+1}(eta) for bond x. Off-segment neighbours count as empty.
inline double local_rate(const RateModel& model, const Lattice& lattice, const Configuration& eta, std::size_t bond) {
  auto occ = [&](int offset) -> int {
    const auto y = lattice.offset_site(bond, offset);
    return y == lattice.sites() ? 0 : eta[y];
  };
  return model.rate(occ);
}

inline void swap_in_place(Configuration& eta, const Lattice& lattice, std::size_t bond) noexcept {
  const auto [x, y] = lattice.bond_sites(bond);
  std::swap(eta.occ[x], eta.occ[y]);
}

/// eta^{x,x+1}: occupations at the two endpoints of `bond` exchanged.
inline Configuration swap(Configuration eta, const Lattice& lattice, std::size_t bond) {
  swap_in_place(eta, lattice, bond);
  return eta;
}

/// Density and interaction strength with the derived quantities chi = rho(1-rho)
/// and c' = 1 + 2 b rho.
struct ModelParams {
  double rho;
  double b;

  ModelParams(double rho_, double b_) : rho(rho_), b(b_) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("density rho must lie in [0,1]");
    if (!(b > -0.5)) throw ValidationError("interaction strength b must satisfy b > -1/2");
  }

  double chi() const noexcept { return rho * (1.0 - rho); }
  double c_prime() const noexcept { return 1.0 + 2.0 * b * rho; }
};

/// E_{nu_rho}[1 / c_{x,x+1}] for the speed-change rates.
inline double c_rho(double rho, double b) {
  if (!(b > -0.5)) throw ValidationError("c_rho requires b > -1/2");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("c_rho requires rho in [0,1]");
  const double q = 1.0 - rho;
  return q * q + 2.0 * rho * q / (1.0 + b) + rho * rho / (1.0 + 2.0 * b);
}

/// Number of sites in the replacement box of relative width eps: ceil(eps n).
inline std::size_t box_sites(double eps, std::size_t n) {
  const double raw = eps * static_cast<double>(n);
  auto l = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::max<std::size_t>(l, 1);
}

struct HolderRow {
  double eps;
  std::size_t box;  ///< ceil(eps n) sites
  double lhs;       ///< box mean of W(y/n) - W(0), y = 0 .. box-1
  double ratio;     ///< lhs / eps^theta
};

struct HolderReport {
  double theta;
  std::vector<HolderRow> rows;
  double growth;  ///< max ratio / ratio at the largest eps
  bool warning;
};

/// Tabulates the small-box average of W(y/n) - W(0) against eps^theta.
/// A warning is raised when the ratio grows by more than `growth_factor`
/// from the largest eps to the smallest ones (no O(eps^theta) bound).
inline HolderReport holder_report(const WSamples& w, double theta, std::vector<double> eps_grid = {},
                                  double growth_factor = 4.0) {
  if (!(theta > 0.0)) throw ValidationError("theta must be > 0");
  const std::size_t n = w.n();
  if (eps_grid.empty()) {
    for (double e = 0.5; e * static_cast<double>(n) >= 1.0; e *= 0.5) eps_grid.push_back(e);
  }
  std::sort(eps_grid.begin(), eps_grid.end(), std::greater<>());
  HolderReport report{theta, {}, 1.0, false};
  for (double eps : eps_grid) {
    if (!(eps > 0.0 && eps <= 1.0)) throw ValidationError("eps grid entries must lie in (0,1]");
    const std::size_t l = std::min(box_sites(eps, n), n);
    double sum = 0.0;
    for (std::size_t y = 0; y < l; ++y) sum += w[y] - w[0];
    const double lhs = sum / static_cast<double>(l);
    report.rows.push_back({eps, l, lhs, lhs / std::pow(eps, theta)});
  }
  if (!report.rows.empty()) {
    const double base = report.rows.front().ratio;
    double mx = base;
    for (const auto& r : report.rows) mx = std::max(mx, r.ratio);
    report.growth = base > 0.0 ? mx / base : (mx > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    report.warning = report.growth > growth_factor;
  }
  return report;
}

}  // namespace occtime
