#pragma once

#include <cmath>

#include "triadstego/codec.hpp"
#include "triadstego/image.hpp"
#include "triadstego/rng.hpp"

namespace triadstego {

// Blind +-1 embedder used to bootstrap the steganalyzer: round(payload*w*h)
// keyed positions (the same placement machinery the real embedder's message
// spreading uses) are changed by +-1 with equal probability; a change that
// would leave [0,255] flips its sign instead. Everything else is untouched.
inline GrayImage baseline_pm1_embed(const GrayImage& cover, double payload_bpp,
                                    const StegoKey& key) {
    if (payload_bpp < 0.0 || payload_bpp > 1.0) {
        throw CapacityError("baseline payload must lie in [0,1], got " +
                            std::to_string(payload_bpp));
    }
    const std::uint64_t cells =
        static_cast<std::uint64_t>(cover.width) * static_cast<std::uint64_t>(cover.height);
    const auto m_len = static_cast<std::uint64_t>(
        std::llround(payload_bpp * static_cast<double>(cells)));
    SplitMix64 rng(derive_seed(key));
    const auto order = partial_shuffle(cells, m_len, rng);
    GrayImage stego = cover;
    for (const std::uint32_t pos : order) {
        const int delta = (rng.next() & 1ull) ? 1 : -1;
        const int p = stego.pixels[pos];
        int q = p + delta;
        if (q < 0 || q > 255) q = p - delta;
        stego.pixels[pos] = static_cast<std::uint8_t>(q);
    }
    return stego;
}

}  // namespace triadstego
