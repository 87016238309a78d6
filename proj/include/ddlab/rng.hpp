#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace ddlab {

/// Seeded 64-bit generator with platform-independent derived draws.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the C++ standard.
/// The distribution helpers are implemented here instead of using
/// <random> distributions, whose algorithms differ between standard
/// libraries, so that every draw is reproducible across toolchains.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n), rejection-sampled so there is no modulo bias.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via the Box-Muller transform (one value per call).
  double normal();

  /// Fisher-Yates shuffle, last element first.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Full engine state as text (the standard stream representation).
  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ddlab
