#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace occtime {

/// SplitMix64 finalizer (Steele, Lea, Flood), bit-exact:
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   z =  z ^ (z >> 31)
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Identifies one replica's random stream.
///
/// The stream is std::mt19937_64 seeded with
///   splitmix64_mix(master_seed + (replica_index + 1) * 0x9E3779B97F4A7C15)
/// so it is a pure function of (master_seed, replica_index).
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t replica_index = 0;

  constexpr std::uint64_t stream_seed() const noexcept {
    return splitmix64_mix(master_seed + (replica_index + 1) * 0x9E3779B97F4A7C15ULL);
  }
};

/// Deterministic per-replica generator. Uniforms are (x >> 11) * 2^-53 in
/// [0,1), which does not depend on the standard library's distributions.
class ReplicaRng {
public:
  explicit ReplicaRng(const SeedSpec& seed) : engine_(seed.stream_seed()) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// -ln(1 - U) / rate.
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  bool operator==(const ReplicaRng&) const = default;

private:
  std::mt19937_64 engine_;
};

}  // namespace occtime
