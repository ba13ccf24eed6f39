#pragma once

// Counter-based random numbers: every draw is a pure function of
// (seed, stream, axis, trial, index), so Monte-Carlo output does not depend
// on how trials are scheduled across threads.

#include <array>
#include <cstdint>

namespace uwbpose {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Independent draws keyed by a trial coordinate. `stream` separates uses
/// (noise, outlier positions, ...) that share the same trial.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint32_t stream, std::uint32_t axis, std::uint64_t trial);

  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t index) const;
  /// Standard normal via Box-Muller on a pair of uniforms.
  double normal(std::uint64_t index) const;

 private:
  std::array<std::uint32_t, 4> block(std::uint64_t block_index, std::uint32_t lane) const;

  std::array<std::uint32_t, 2> key_;
  std::uint32_t axis_stream_;
  std::uint64_t trial_;
};

}  // namespace uwbpose
