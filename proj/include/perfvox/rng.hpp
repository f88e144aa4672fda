#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <utility>

namespace perfvox {

// Portable generator: xoshiro256** (Blackman & Vigna) seeded through SplitMix64.
// Uniform doubles take the top 53 bits; normals use the Box-Muller transform,
// consuming two uniforms per pair and returning the cosine branch first.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  std::uint64_t operator()() { return next_u64(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);  // uniform in [0, n), rejection-sampled
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Independent stream seed for item `index` derived from a base seed.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace perfvox
