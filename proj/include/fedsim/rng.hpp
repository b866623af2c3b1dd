#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fedsim {

// All randomness in the library flows through this wrapper. The distributions
// are hand-rolled on top of std::mt19937_64 (whose output sequence is fixed by
// the standard) because std::*_distribution implementations differ between
// standard libraries, which would break byte-identical reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix(seed)) {}

  // Derives an independent stream from (seed, stream, index). Used to give
  // each worker / component its own sequence so that consumption order in the
  // event loop cannot perturb unrelated draws.
  static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    std::uint64_t s = mix(seed);
    s = mix(s ^ (0x9e3779b97f4a7c15ULL + stream));
    s = mix(s ^ (0xbf58476d1ce4e5b9ULL + index));
    return Rng(s);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Multiply-shift; bias is O(n / 2^64).
  std::size_t below(std::size_t n) {
    using u128 = unsigned __int128;
    return static_cast<std::size_t>((u128(gen_()) * u128(n)) >> 64);
  }

  // Box-Muller (cosine branch). Consumes exactly two engine outputs per call.
  double normal(double mu = 0.0, double sigma = 1.0) {
    double u1 = uniform01();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * kPi * u2);
  }

  double exponential(double mean) { return -mean * std::log(1.0 - uniform01()); }

  // Lognormal with mean 1 and the given coefficient of variation.
  // cv = 0 degenerates to exactly 1 (still consumes two engine outputs).
  double lognormal_unit_mean(double cv) {
    const double s2 = std::log(1.0 + cv * cv);
    return std::exp(normal(-0.5 * s2, std::sqrt(s2)));
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  // splitmix64 finalizer; spreads low-entropy seeds over the full state space.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 gen_;
};

}  // namespace fedsim
