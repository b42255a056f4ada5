#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "triadstego/rng.hpp"

using namespace triadstego;

TEST_CASE("splitmix64 is deterministic and stateful", "[rng]") {
    SplitMix64 a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next() == b.next());
    REQUIRE(a.state() == b.state());

    SplitMix64 c(42), d(43);
    bool differ = false;
    for (int i = 0; i < 10; ++i) differ |= (c.next() != d.next());
    REQUIRE(differ);
}

TEST_CASE("splitmix64 state round-trips", "[rng]") {
    SplitMix64 a(7);
    a.next();
    a.next();
    SplitMix64 b;
    b.set_state(a.state());
    for (int i = 0; i < 10; ++i) REQUIRE(a.next() == b.next());
}

TEST_CASE("below stays in range and covers values", "[rng]") {
    SplitMix64 rng(1);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng.below(10);
        REQUIRE(v < 10);
        seen.insert(v);
    }
    REQUIRE(seen.size() == 10);
}

TEST_CASE("uniform lies in [0,1) with sane mean", "[rng]") {
    SplitMix64 rng(2);
    double acc = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double v = rng.uniform();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        acc += v;
    }
    REQUIRE(std::abs(acc / 20000 - 0.5) < 0.01);
}

TEST_CASE("gaussian has roughly unit variance", "[rng]") {
    SplitMix64 rng(3);
    double mean = 0.0, m2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.gaussian();
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    m2 /= n;
    REQUIRE(std::abs(mean) < 0.03);
    REQUIRE(std::abs(m2 - 1.0) < 0.05);
}

TEST_CASE("derive_subseed separates tags and counters", "[rng]") {
    std::set<std::uint64_t> seeds;
    for (std::uint64_t tag = 0; tag < 8; ++tag) {
        for (std::uint64_t ctr = 0; ctr < 64; ++ctr) {
            seeds.insert(derive_subseed(12345, tag, ctr));
        }
    }
    REQUIRE(seeds.size() == 8 * 64);
    REQUIRE(derive_subseed(1, 2, 3) == derive_subseed(1, 2, 3));
}

TEST_CASE("partial_shuffle yields distinct in-range prefixes", "[rng]") {
    SplitMix64 rng(9);
    const auto got = partial_shuffle(100, 30, rng);
    REQUIRE(got.size() == 30);
    std::set<std::uint32_t> unique(got.begin(), got.end());
    REQUIRE(unique.size() == 30);
    for (const auto v : got) REQUIRE(v < 100);

    SplitMix64 rng2(9);
    REQUIRE(partial_shuffle(100, 30, rng2) == got);

    SplitMix64 rng3(9);
    const auto full = partial_shuffle(10, 10, rng3);
    std::set<std::uint32_t> all(full.begin(), full.end());
    REQUIRE(all.size() == 10);

    SplitMix64 rng4(9);
    REQUIRE(partial_shuffle(5, 50, rng4).size() == 5);
}

TEST_CASE("partial_shuffle prefix distribution is uniform", "[rng]") {
    // Cell 0 should land in the first 4 of 16 slots about 1/4 of the time.
    SplitMix64 rng(11);
    int hits = 0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
        const auto order = partial_shuffle(16, 4, rng);
        hits += std::count(order.begin(), order.end(), 0u);
    }
    const double freq = static_cast<double>(hits) / trials;
    REQUIRE(freq > 0.22);
    REQUIRE(freq < 0.28);
}
