#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace convformer {

/// One step of splitmix64: advances `state` and returns the next output.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** seeded through splitmix64. Every derived quantity (uniform
/// doubles, bounded integers, normals) is computed with integer and IEEE
/// arithmetic only, so a seed produces the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer on [0, n). Unbiased (rejection sampling); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller (cosine branch only, no cached state).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent generator for a named sub-stream.
  Rng split(std::uint64_t stream) const;

  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace convformer
