#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sdlab {

/// xoshiro256++ with splitmix64 seeding. Hand-rolled so that identical seeds
/// give identical streams on every platform (std:: distributions do not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();

  /// Standard normal via Box-Muller (second value cached).
  double normal();

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_below(std::size_t n);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace sdlab
