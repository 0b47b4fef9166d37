#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace vqr {

/// Philox4x32-10 counter-based generator. A stream is identified by
/// (global seed, stream name, optional split index); drawing from one stream
/// never shifts another.
class Rng {
 public:
  /// Named stream under a global seed, e.g. stream(seed, "init").
  static Rng stream(std::uint64_t seed, std::string_view name);

  /// Independent child stream; the parent is not advanced.
  Rng split(std::uint64_t index) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, no cached second value).
  double normal();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

 private:
  Rng(std::array<std::uint32_t, 2> key, std::uint64_t stream_id)
      : key_(key), stream_id_(stream_id) {}
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
};

/// FNV-1a, 64-bit.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace vqr
