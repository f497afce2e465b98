#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace hahe {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random stream. All randomness in the library flows from a
// single user seed through named sub-streams, so that e.g. parameter
// initialization and neighbor sampling are decoupled: consuming more draws
// in one stream never shifts another. Distribution code is hand-rolled on
// top of mt19937_64 because the std:: distributions are not pinned by the
// standard and would break bit-level reproducibility across toolchains.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream) {
    std::uint64_t state = seed ^ fnv1a64(stream);
    std::uint64_t a = splitmix64(state);
    std::uint64_t b = splitmix64(state);
    engine_.seed(a ^ (b << 1));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double next_real01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_real01();
  }

  bool bernoulli(double p) { return next_real01() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hahe
