#pragma once

#include <array>
#include <cstdint>

namespace netpod {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3", SC'11). Stateless: the output is a pure function of the
/// 128-bit counter and the 64-bit key.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

inline constexpr const char* kRngAlgorithm = "philox4x32-10";

/// Independent substreams drawn from one user seed.
enum class RngStream : std::uint32_t {
  sbm_edges = 1,
  initial_state = 2,
  curing_rates = 3,
  kmeans = 16,  // kmeans + restart index
};

/// Uniform double in [0, 1) from 53 random bits.
inline double to_unit_double(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// 64 bits for the coordinate (stream, a, b) under `seed`.
std::uint64_t counter_bits(std::uint64_t seed, std::uint32_t stream, std::uint32_t a,
                           std::uint32_t b) noexcept;

/// Sequential generator over one stream: draw i is counter_bits(seed, stream, i_lo, i_hi).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint32_t stream) noexcept : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() noexcept {
    const auto index = index_++;
    return counter_bits(seed_, stream_, static_cast<std::uint32_t>(index),
                        static_cast<std::uint32_t>(index >> 32));
  }

  double uniform() noexcept { return to_unit_double(next_u64()); }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_;
  std::uint64_t index_ = 0;
};

}  // namespace netpod
