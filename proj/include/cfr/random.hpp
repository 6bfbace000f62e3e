#pragma once

#include <cstdint>
#include <random>

namespace cfr {

using Rng = std::mt19937_64;

// Independent stream for (master_seed, index); realizations and seeds never
// share state.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t master, std::uint64_t index) { return Rng(derive_seed(master, index)); }

}  // namespace cfr
