#pragma once

#include <bit>
#include <cassert>
#include <cstddef>
#include <vector>

namespace occtime {

/// Fixed-shape binary sum tree over nonnegative leaf weights, padded to a
/// power of two. Every internal node is always recomputed as left + right,
/// so an incremental update leaves the tree bitwise equal to a full rebuild
/// from the same leaves.
class RateIndex {
public:
  RateIndex() = default;

  explicit RateIndex(std::size_t leaves)
      : leaves_(leaves), cap_(std::bit_ceil(leaves < 1 ? std::size_t{1} : leaves)), node_(2 * cap_, 0.0) {}

  std::size_t size() const noexcept { return leaves_; }
  double total() const noexcept { return node_[1]; }
  double weight(std::size_t leaf) const noexcept { return node_[cap_ + leaf]; }

  void set(std::size_t leaf, double w) noexcept {
    assert(leaf < leaves_ && w >= 0.0);
    std::size_t i = cap_ + leaf;
    node_[i] = w;
    for (i >>= 1; i > 0; i >>= 1) node_[i] = node_[2 * i] + node_[2 * i + 1];
  }

  /// Recomputes the ancestors of leaves first..last (inclusive) after their
  /// weights were written with set_leaf_only. Shared ancestors are visited once.
  void refresh_range(std::size_t first, std::size_t last) noexcept {
    assert(first <= last && last < leaves_);
    std::size_t lo = (cap_ + first) >> 1;
    std::size_t hi = (cap_ + last) >> 1;
    while (lo > 0) {
      for (std::size_t i = lo; i <= hi; ++i) node_[i] = node_[2 * i] + node_[2 * i + 1];
      lo >>= 1;
      hi >>= 1;
    }
  }

  /// Writes leaves without touching internal nodes; call rebuild() after.
  void set_leaf_only(std::size_t leaf, double w) noexcept { node_[cap_ + leaf] = w; }

  void rebuild() noexcept {
    for (std::size_t i = cap_ - 1; i > 0; --i) node_[i] = node_[2 * i] + node_[2 * i + 1];
  }

  /// Leaf selected with probability proportional to its weight, for a
  /// target `r` in [0, total()). Never returns a zero-weight leaf while
  /// total() > 0, even when rounding pushes `r` past a subtree sum.
  std::size_t find(double r) const noexcept {
    std::size_t i = 1;
    while (i < cap_) {
      const double left = node_[2 * i];
      const bool right = !(r < left) && node_[2 * i + 1] > 0.0;
      r -= right ? left : 0.0;
      i = 2 * i + static_cast<std::size_t>(right);
    }
    return i - cap_;
  }

  /// Sum of leaves recomputed from scratch, for consistency checks.
  double recomputed_total() const noexcept {
    RateIndex copy = *this;
    copy.rebuild();
    return copy.total();
  }

  bool operator==(const RateIndex&) const = default;

private:
  std::size_t leaves_ = 0;
  std::size_t cap_ = 1;
  std::vector<double> node_ = std::vector<double>(2, 0.0);
};

}  // namespace occtime
