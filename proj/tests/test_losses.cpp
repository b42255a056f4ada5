#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "triadstego/codec.hpp"
#include "triadstego/losses.hpp"

using namespace triadstego;

TEST_CASE("loss weight validation", "[losses]") {
    LossWeights ok;
    REQUIRE_NOTHROW(ok.validate());

    LossWeights bad_sum{0.5, 0.4, 0.4, 0.0};
    REQUIRE_THROWS_AS(bad_sum.validate(), ConfigError);

    LossWeights out_of_range{1.2, -0.1, -0.1, 0.0};
    REQUIRE_THROWS_AS(out_of_range.validate(), ConfigError);

    LossWeights bad_beta{0.2, 0.4, 0.4, -0.5};
    REQUIRE_THROWS_AS(bad_beta.validate(), ConfigError);
}

TEST_CASE("steganalyzer cross-entropy", "[losses]") {
    REQUIRE(eve_loss(1.0, 0.5) == Catch::Approx(std::log(2.0)));
    REQUIRE(eve_loss(1.0, 1.0 - 1e-12) == Catch::Approx(0.0).margin(1e-6));
    REQUIRE(eve_loss(0.0, 1e-12) == Catch::Approx(0.0).margin(1e-6));
    // Confident and wrong: clamped at 1e-7 from the boundary.
    REQUIRE(eve_loss(0.0, 1.0) >= std::log(1e7) - 1e-6);
    REQUIRE(eve_loss(1.0, 0.0) >= std::log(1e7) - 1e-6);
    REQUIRE(std::isfinite(eve_loss(1.0, 0.0)));
}

TEST_CASE("message extraction loss", "[losses]") {
    const std::vector<double> m{0.0, 1.0};
    REQUIRE(bob_loss_message(m, m) == 0.0);
    REQUIRE(bob_loss_message(m, std::vector<double>{1.0, 1.0}) == Catch::Approx(0.5));
    REQUIRE(bob_loss_message(std::vector<double>{1.0}, std::vector<double>{0.5}) ==
            Catch::Approx(0.25));
    REQUIRE_THROWS_AS(bob_loss_message(m, std::vector<double>{1.0}), ConfigError);
    REQUIRE_THROWS_AS(bob_loss_message(std::vector<double>{}, std::vector<double>{}),
                      ConfigError);
}

TEST_CASE("spread-domain loss ignores off-mask cells", "[losses]") {
    SplitMix64 rng(61);
    const auto key = StegoKey::random(128, rng);
    const auto m = SecretMessage::random(40, rng);
    const auto s = spread(m, key, 12, 12);

    REQUIRE(bob_loss_spread(s.plane, s.plane, s.occupancy, 40) == 0.0);

    auto off_mask = s.plane;
    for (std::size_t i = 0; i < off_mask.size(); ++i) {
        if (!s.occupancy[i]) off_mask[i] += 0.7f;
    }
    REQUIRE(bob_loss_spread(s.plane, off_mask, s.occupancy, 40) == 0.0);

    REQUIRE_THROWS_AS(bob_loss_spread(s.plane, s.plane, s.occupancy, 39), ConfigError);
}

TEST_CASE("spread and message forms agree on random instances", "[losses]") {
    SplitMix64 rng(62);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = 8 + static_cast<int>(rng.below(9));
        const int h = 8 + static_cast<int>(rng.below(9));
        const auto key = StegoKey::random(128, rng);
        const std::size_t m_len = 1 + rng.below(static_cast<std::uint64_t>(w) * h);
        const auto m = SecretMessage::random(m_len, rng);
        const auto s = spread(m, key, w, h);

        std::vector<double> s_plane(s.plane.begin(), s.plane.end());
        std::vector<double> s_hat(s_plane.size());
        for (auto& v : s_hat) v = rng.uniform();

        std::vector<double> m_bits(m.bits.begin(), m.bits.end());
        const auto m_hat = despread(s_hat, key, m_len, w, h);

        const double via_spread = bob_loss_spread(s_plane, s_hat, s.occupancy, m_len);
        const double via_message = bob_loss_message(m_bits, m_hat);
        REQUIRE(std::abs(via_spread - via_message) < 1e-12);
    }
}

TEST_CASE("pixel distortion", "[losses]") {
    const std::vector<double> x{0.1, 0.5, 0.9, 0.0};
    REQUIRE(pixel_dist_mse(x, x) == 0.0);
    std::vector<double> y = x;
    for (auto& v : y) v += 1.0 / 255.0;
    REQUIRE(pixel_dist_mse(x, y) == Catch::Approx(1.0 / (255.0 * 255.0)));
    REQUIRE_THROWS_AS(pixel_dist_mse(x, std::vector<double>{0.1}), ConfigError);
}

TEST_CASE("modification-map distance is the change rate", "[losses]") {
    REQUIRE(modmap_dist(std::vector<double>(16, 0.0)) == 0.0);
    REQUIRE(modmap_dist(std::vector<double>(16, 1.0)) == 1.0);
    std::vector<double> half(16, 0.0);
    for (int i = 0; i < 8; ++i) half[i] = (i % 2) ? 1.0 : -1.0;
    REQUIRE(modmap_dist(half) == Catch::Approx(0.5));
    REQUIRE_THROWS_AS(modmap_dist(std::vector<double>{}), ConfigError);
}

TEST_CASE("first-architecture embedder loss", "[losses]") {
    const LossWeights w{0.2, 0.4, 0.4, 0.0};
    REQUIRE(alice_loss_v1(0.1, 0.2, std::log(2.0), w) == Catch::Approx(-0.17726).margin(1e-5));
    REQUIRE(alice_loss_v1(0.0, 0.0, 0.0, w) == 0.0);
    // Alice maximizes Eve's loss: increasing l_eve decreases her own.
    REQUIRE(alice_loss_v1(0.1, 0.2, 0.9, w) < alice_loss_v1(0.1, 0.2, 0.3, w));
}

TEST_CASE("beta-anchored embedder loss", "[losses]") {
    LossWeights w{0.2, 0.4, 0.4, 0.1};
    REQUIRE(alice_loss_v23(0.3, 0.1, 0.7, w) == Catch::Approx(-0.2));

    // dist == beta kills the first term.
    REQUIRE(alice_loss_v23(0.1, 0.25, 0.5, w) ==
            Catch::Approx(0.4 * 0.25 - 0.4 * 0.5));

    // beta = 0 reduces to the v1 form on the map distance.
    w.beta = 0.0;
    REQUIRE(alice_loss_v23(0.3, 0.1, 0.7, w) == Catch::Approx(alice_loss_v1(0.3, 0.1, 0.7, w)));
}

TEST_CASE("third-architecture extractor loss", "[losses]") {
    REQUIRE(bob_loss_v3(0.0, 0.0) == 0.0);
    REQUIRE(bob_loss_v3(0.2, 0.4) == Catch::Approx(0.3));
    REQUIRE(bob_loss_v3(0.4, 0.2) == bob_loss_v3(0.2, 0.4));
    REQUIRE_THROWS_AS(bob_loss_v3(-0.1, 0.2), ConfigError);
}
