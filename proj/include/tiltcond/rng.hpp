#pragma once

#include <cstdint>
#include <random>

namespace tiltcond {

using RngStream = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Engine for stream `id` under a base seed. Stream derivation depends only on
/// (seed, id), so per-path streams reproduce the same draws no matter how work
/// is split across threads.
inline RngStream make_stream(std::uint64_t seed, std::uint64_t id = 0) {
  std::uint64_t state = seed ^ (0xd1342543de82ef95ULL * (id + 0x632be59bd9b4e019ULL));
  const std::uint64_t w0 = detail::splitmix64(state);
  const std::uint64_t w1 = detail::splitmix64(state);
  const std::uint64_t w2 = detail::splitmix64(state);
  const std::uint64_t w3 = detail::splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(w0), static_cast<std::uint32_t>(w0 >> 32),
                    static_cast<std::uint32_t>(w1), static_cast<std::uint32_t>(w1 >> 32),
                    static_cast<std::uint32_t>(w2), static_cast<std::uint32_t>(w2 >> 32),
                    static_cast<std::uint32_t>(w3), static_cast<std::uint32_t>(w3 >> 32)};
  return RngStream(seq);
}

}  // namespace tiltcond
