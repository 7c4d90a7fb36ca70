#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fp {

// splitmix64 finalizer; used to mix seeds for derived streams
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Purpose tags so every consumer of randomness gets its own stream.
enum class Stream : uint64_t {
  DataGen = 1,
  TestData,
  Shard,
  ValSplit,
  ParamInit,
  AuxInit,
  FleetSample,
  FleetTick,
  LocalTrain,
  ValAttack,
  TestAttack,
  Dstar,
  Certify,
  Diag,
};

inline uint64_t derive_seed(uint64_t run_seed, Stream s, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = mix64(run_seed ^ 0xA0761D6478BD642Full);
  h = mix64(h ^ static_cast<uint64_t>(s));
  h = mix64(h ^ a);
  return mix64(h ^ b);
}

// mt19937_64 engine (bit-stream is pinned by the standard) with hand-rolled
// uniform/normal transforms; std::*_distribution output is implementation
// defined and would break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }

  // [0,1)
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0,n)
  size_t index(size_t n) {
    if (n <= 1) return 0;
    uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n + 1) % n;
    uint64_t v = bits();
    while (v > limit) v = bits();
    return static_cast<size_t>(v % n);
  }

  // Box-Muller, pair cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fp
