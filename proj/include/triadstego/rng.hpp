#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <vector>

namespace triadstego {

// SplitMix64. Single u64 of state, trivially serializable, identical output
// on every platform. All randomness in the toolkit flows through this so
// that runs are reproducible bit-for-bit from the seeds alone.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Uniform integer in [0, bound). Modulo bias is below 2^-47 for the
    // bounds used here (image cells, dataset sizes).
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }

    // Uniform real in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool coin() { return (next() & 1ull) != 0; }

    // Box-Muller; consumes two draws per pair, caches the second.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_ = 0;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

// Stateless sub-seed derivation: hash (seed, purpose tag, counter) into a
// fresh seed. Lets the trainer draw per-iteration randomness without
// carrying RNG state across checkpoints beyond plain counters.
inline std::uint64_t derive_subseed(std::uint64_t seed, std::uint64_t tag,
                                    std::uint64_t counter) {
    SplitMix64 h(seed ^ (tag * 0x9e3779b97f4a7c15ull));
    h.next();
    SplitMix64 h2(h.next() ^ counter);
    h2.next();
    return h2.next();
}

// First `take` entries of a Fisher-Yates shuffle of {0, ..., n-1}.
inline std::vector<std::uint32_t> partial_shuffle(std::uint64_t n,
                                                  std::uint64_t take,
                                                  SplitMix64& rng) {
    std::vector<std::uint32_t> idx(n);
    for (std::uint64_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    if (take > n) take = n;
    for (std::uint64_t i = 0; i < take; ++i) {
        const std::uint64_t j = i + rng.below(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    return idx;
}

}  // namespace triadstego
