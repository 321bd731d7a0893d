#pragma once

#include <cstdint>
#include <random>

namespace gridwalk {

using Rng = std::mt19937_64;

// splitmix64 finalizer. Used to derive independent stream seeds from one
// master seed so that topology, tasks, walk and every node draw from
// separate generators.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

namespace stream {
inline constexpr std::uint64_t kTopology = 1;
inline constexpr std::uint64_t kTasks = 2;
inline constexpr std::uint64_t kWalk = 3;
inline constexpr std::uint64_t kNodeBase = 1000;
}  // namespace stream

}  // namespace gridwalk
