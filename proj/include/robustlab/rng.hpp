#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace robustlab {

// Deterministic random streams. Every consumer derives its own stream from a
// master seed plus structural indices (epoch, batch, example, ...) so that
// results do not depend on evaluation order or batch composition.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // splitmix64 warmup so that small seeds do not produce correlated streams
    for (int i = 0; i < 4; ++i) next();
  }

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; one value per call, no cached state
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // integer in [0, n)
  uint64_t randint(uint64_t n) { return next() % n; }

  std::vector<int64_t> permutation(int64_t n) {
    std::vector<int64_t> p(n);
    for (int64_t i = 0; i < n; ++i) p[i] = i;
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = static_cast<int64_t>(randint(static_cast<uint64_t>(i + 1)));
      std::swap(p[i], p[j]);
    }
    return p;
  }

  // Mixes a master seed with up to three stream indices into a child seed.
  static uint64_t derive(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = master;
    for (uint64_t x : {a, b, c}) {
      h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h *= 0xff51afd7ed558ccdULL;
      h ^= h >> 33;
    }
    return h;
  }

 private:
  uint64_t state_;
};

}  // namespace robustlab
