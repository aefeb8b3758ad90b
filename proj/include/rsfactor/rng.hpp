#pragma once

/// \file rng.hpp
/// Deterministic random-number helpers. All randomness in the project flows
/// through these functions so that results are reproducible bit-for-bit
/// across runs, platforms, and standard-library versions (std::shuffle and
/// the std distributions are implementation-defined, so they are avoided).

#include <cstdint>
#include <random>
#include <vector>

namespace rsfactor {

/// SplitMix64 stream; used to derive independent per-item seeds from a
/// user seed so work items can be processed in any order.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a child seed for item `index` of a stream rooted at `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (0x12345678abcdef00ULL + index * 0x9e3779b97f4a7c15ULL);
  return splitmix64(s);
}

/// Uniform double in [0, 1) from a raw 64-bit draw (53-bit mantissa).
inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Deterministic RNG wrapper around mt19937_64 with hand-rolled
/// distributions (uniform, normal, bounded int).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return to_unit(engine_()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; one value per call, no caching, so the
  /// draw sequence is independent of call-site pairing.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Uniform integer in [0, n) by rejection-free multiply-shift; slight bias
  /// below 2^-32 is irrelevant here and the mapping is fully deterministic.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(engine_()) * n) >> 64);
  }

  /// Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rsfactor
