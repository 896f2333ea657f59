#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace dyncov {

// Small counter-friendly random stream (SplitMix64 core) that satisfies
// UniformRandomBitGenerator, so the <random> distributions work on it.
//
// Substreams are keyed by a tuple of integers; seeding one is a handful of
// integer mixes, which is what makes per-particle, per-step streams cheap.
// Streams are value types: copy one to fork it, never share one across threads.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(mix(seed)) {}

  // Deterministic stream for (key, a, b, c). Distinct tuples give
  // statistically independent streams.
  static Rng substream(std::uint64_t key, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0) {
    std::uint64_t h = mix(key ^ 0x6a09e667f3bcc909ULL);
    h = mix(h ^ (a + 0xbb67ae8584caa73bULL));
    h = mix(h ^ (b + 0x3c6ef372fe94f82bULL));
    h = mix(h ^ (c + 0xa54ff53a5f1d36f1ULL));
    Rng r;
    r.state_ = h;
    return r;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  double chi_squared(double dof) {
    std::gamma_distribution<double> g(0.5 * dof, 2.0);
    return g(*this);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
  std::normal_distribution<double> normal_;
};

}  // namespace dyncov
