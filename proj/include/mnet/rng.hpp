#pragma once

#include <cstdint>
#include <random>

namespace mnet {

using Rng = std::mt19937_64;

// splitmix64 step; used to derive independent sub-streams from one seed so
// that consuming one stream never shifts another.
inline uint64_t splitmix64(uint64_t& state)
{
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream)
{
    uint64_t s = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
    return splitmix64(s);
}

inline Rng make_rng(uint64_t seed, uint64_t stream = 0)
{
    return Rng(derive_seed(seed, stream));
}

} // namespace mnet
