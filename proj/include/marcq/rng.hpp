#pragma once

#include <cstdint>
#include <random>

namespace marcq {

using Rng = std::mt19937_64;

/// Named substreams derived from one master seed. Each replication and each
/// role gets its own generator, so results do not depend on scheduling.
enum class Stream : std::uint32_t {
    arrivals = 1,
    msj_service = 2,
    ak_service = 3,
    shared_service = 4,
    chain_service = 5,
    delta_mc = 6,
};

inline Rng make_stream(std::uint64_t seed, std::uint64_t replication, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Rng(seq);
}

inline double sample_exponential(Rng& rng, double rate) {
    return std::exponential_distribution<double>(rate)(rng);
}

inline double sample_uniform(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

} // namespace marcq
