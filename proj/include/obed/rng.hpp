#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace obed {

/// Counter-based random stream.
///
/// A stream is a 64-bit key plus a draw counter; the i-th draw is a SplitMix64
/// finalisation of (key, i). Child streams are derived by hashing a label into
/// the key, so a stream path such as seed -> "npf" -> t -> m always yields the
/// same sequence no matter how many other streams were consumed, how many
/// particles exist elsewhere, or which thread runs it.
///
/// Satisfies UniformRandomBitGenerator, so it can drive the <random>
/// distributions directly.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed = 0);

  RngStream split(std::string_view label) const;
  RngStream split(std::uint64_t index) const;

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal draw.
  double normal();

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RngStream(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t mix64(std::uint64_t z);
std::uint64_t hash_label(std::string_view label);

}  // namespace obed
