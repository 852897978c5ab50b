#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace semclip {

// splitmix64 counter generator. Chosen over std::mt19937_64 +
// distributions because the distribution outputs are not pinned by the
// standard; this keeps seeds reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  bool coin() { return (next_u64() & 1ull) != 0; }

  // Box-Muller without a cached spare, so the draw count per call is fixed.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Named sub-stream derivation; order-independent so tensors can be
// initialized in any order for the same seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  Rng mix(seed ^ fnv1a64(tag));
  return mix.next_u64();
}

}  // namespace semclip
