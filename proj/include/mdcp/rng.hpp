#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace mdcp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by a 64-bit key; the counter advances per block of
/// four 32-bit words. Distinct (seed, stream) pairs map to distinct keys via
/// `Rng::substream`, so streams can be split by run index, source id, etc.
/// without sharing state. Satisfies UniformRandomBitGenerator.
class Rng {
public:
  using result_type = std::uint32_t;

  static constexpr std::string_view kAlgorithm = "philox4x32-10";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  /// Derive an independent generator keyed by (this key, tag).
  Rng substream(std::uint64_t tag) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t next64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }

private:
  void refill();

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool hasSpare_ = false;
  double spare_ = 0.0;
};

/// One Philox4x32-10 block. Exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer; used to mix seeds into Philox keys.
std::uint64_t mix64(std::uint64_t x);

} // namespace mdcp
