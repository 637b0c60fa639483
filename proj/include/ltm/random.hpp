#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace ltm {

// Deterministic random source. Distributions are derived by hand from the raw
// 64-bit engine output so that streams are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  // splitmix64 finalizer; used to decorrelate derived seeds.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL));
  }

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double uniform_open_zero() { return 1.0 - uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Draws an index from an (unnormalized, non-negative) weight vector.
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    const int n = static_cast<int>(weights.size());
    for (int i = 0; i < n; ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    // Rounding fallthrough: last state with positive weight.
    for (int i = n - 1; i >= 0; --i)
      if (weights[i] > 0.0) return i;
    return n - 1;
  }

  double exponential() { return -std::log(uniform_open_zero()); }

  // Symmetric Dirichlet(1) draw written into `out`.
  void dirichlet(std::span<double> out) {
    double total = 0.0;
    for (double& v : out) {
      v = exponential();
      total += v;
    }
    for (double& v : out) v /= total;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ltm
