#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gtp {

/// Seeded PRNG threaded explicitly through initialization, shuffling and the
/// synthetic generator. The uniform/gaussian mappings are written out so the
/// stream does not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed), seed_mix_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  size_t index(size_t n) {
    return n == 0 ? 0 : static_cast<size_t>(uniform() * static_cast<double>(n)) % n;
  }

  /// Standard normal via Box-Muller.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  /// Deterministic child stream, independent of call order elsewhere.
  Rng fork(uint64_t salt) const {
    uint64_t x = seed_mix_ ^ (salt + 0x9e3779b97f4a7c15ULL);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return Rng(x);
  }

 private:
  std::mt19937_64 engine_;
  uint64_t seed_mix_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace gtp
