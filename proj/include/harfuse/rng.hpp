#ifndef HARFUSE_RNG_HPP
#define HARFUSE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace harfuse {

/// Deterministic generator used for every random draw in the library.
///
/// The integer stream is SplitMix64: the state advances by the 64-bit golden
/// ratio constant and each output is the state passed through two
/// xor-shift/multiply rounds. Uniform doubles take the top 53 bits. Normals
/// use the Box-Muller transform; the second value of each pair is cached.
/// The stream depends on nothing but the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) without modulo bias. n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Independent child generator; used to give each run its own stream.
  Rng split() { return Rng(next_u64()); }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Fisher-Yates shuffle driven by `rng`.
template <typename Container>
void shuffle(Container& values, Rng& rng) {
  for (auto i = values.size(); i > 1; --i) {
    const auto j = rng.uniform_index(i);
    using std::swap;
    swap(values[i - 1], values[j]);
  }
}

}  // namespace harfuse

#endif  // HARFUSE_RNG_HPP
