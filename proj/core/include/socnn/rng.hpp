#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace socnn {

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, so it can drive
/// the standard distributions, but the helpers below are used for anything
/// that must be bit-reproducible across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Independent stream for a named consumer ("init", "shuffle", ...) and an
  /// optional index (epoch, sample).
  Rng split(std::string_view consumer, std::uint64_t index = 0) const;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box–Muller.
  double normal();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace socnn
