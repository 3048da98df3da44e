#pragma once

#include <cstdint>

namespace pemreg {

/// Stateless counter-based generator. Every draw is a pure function of
/// (seed, stream, counter, lane), so results do not depend on evaluation
/// order or on how work is split across threads.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t counter,
                                             std::uint64_t lane = 0) const noexcept {
    return mix(key_ ^ mix(counter * 0x9e3779b97f4a7c15ULL + lane));
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  [[nodiscard]] constexpr double uniform(std::uint64_t counter,
                                         std::uint64_t lane = 0) const noexcept {
    return static_cast<double>(bits(counter, lane) >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [lo, hi].
  [[nodiscard]] constexpr std::int64_t uniform_int(std::int64_t lo, std::int64_t hi,
                                                   std::uint64_t counter,
                                                   std::uint64_t lane = 0) const noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Multiply-shift reduction; bias is below 2^-40 for the spans used here.
    const auto r = static_cast<unsigned __int128>(bits(counter, lane)) * span;
    return lo + static_cast<std::int64_t>(r >> 64);
  }

  [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

}  // namespace pemreg
