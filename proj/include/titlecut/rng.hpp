#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace titlecut {

// Seeded RNG with hand-rolled distributions. std::*_distribution output is
// implementation-defined, so uniform/normal draws are built here from raw
// mt19937_64 words to keep runs reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller; spare value cached.
  double normal(double mean, double stddev) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + stddev * r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream; distinct tag per purpose.
  Rng fork(std::uint64_t tag) {
    return Rng(engine_() ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace titlecut
