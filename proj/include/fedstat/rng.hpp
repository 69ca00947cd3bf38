#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedstat {

/// xoshiro256** generator seeded through splitmix64. The stream is fully
/// specified here so results do not depend on the standard library vendor.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), n > 0, without modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal via the Box-Muller transform; the second variate of
  /// each pair is cached.
  double normal();

  /// Fisher-Yates shuffle driven by uniform_index.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  bool operator==(const SeededRng& other) const = default;

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic substream: the seed is folded together with each label by
/// repeated splitmix avalanche, so distinct label tuples give unrelated
/// streams.
SeededRng derive_stream(std::uint64_t master_seed, std::span<const std::uint64_t> labels);
SeededRng derive_stream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> labels);

}  // namespace fedstat
