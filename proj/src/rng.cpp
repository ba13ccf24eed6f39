#include "uwbpose/rng.hpp"

#include <cmath>
#include <numbers>

namespace uwbpose {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

CounterRng::CounterRng(std::uint64_t seed, std::uint32_t stream, std::uint32_t axis,
                       std::uint64_t trial)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      axis_stream_((axis << 8) ^ (stream & 0xFFu)),
      trial_(trial) {}

std::array<std::uint32_t, 4> CounterRng::block(std::uint64_t block_index,
                                               std::uint32_t lane) const {
  // 40 bits of block index, 24 bits of trial, axis/stream in the top word.
  const std::array<std::uint32_t, 4> ctr{
      static_cast<std::uint32_t>(block_index),
      static_cast<std::uint32_t>((block_index >> 32) & 0xFFu) |
          (static_cast<std::uint32_t>(trial_ & 0xFFFFFFu) << 8),
      static_cast<std::uint32_t>(trial_ >> 24) ^ (lane << 31),
      axis_stream_};
  return philox4x32_10(ctr, key_);
}

double CounterRng::uniform(std::uint64_t index) const {
  const auto b = block(index >> 1, 1u);
  return (index & 1u) ? to_unit(b[2], b[3]) : to_unit(b[0], b[1]);
}

double CounterRng::normal(std::uint64_t index) const {
  const auto b = block(index >> 1, 0u);
  const double u1 = to_unit(b[0], b[1]);
  const double u2 = to_unit(b[2], b[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index & 1u) ? radius * std::sin(angle) : radius * std::cos(angle);
}

}  // namespace uwbpose
