#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fd_check.hpp"
#include "triadstego/agents.hpp"
#include "triadstego/codec.hpp"
#include "triadstego/losses.hpp"

using namespace triadstego;
using nn::NodePtr;

namespace {

NetConfig toy_config() {
    NetConfig cfg;
    cfg.image_size = 8;
    cfg.stack0_layers = 1;
    cfg.stack0_channels = 4;
    cfg.stack3_layers = 1;
    cfg.stack3_channels = 4;
    cfg.stack1_layers = 1;
    cfg.stack1_channels = 4;
    cfg.stack2_layers = 1;
    cfg.stack2_channels = 4;
    cfg.unet_depth = 2;
    cfg.unet_base = 4;
    cfg.eve_channels = {4, 4, 8, 8, 8};
    cfg.eve_fc1 = 8;
    cfg.eve_fc2 = 4;
    return cfg;
}

// Covers live on the 8-bit pixel grid, like images loaded from disk.
template <typename T>
NodePtr<T> cover_batch(const NetConfig& cfg, int n, std::uint64_t seed, T lo = T(0.2),
                       T hi = T(0.8)) {
    Tensor<T> x({n, 1, cfg.image_size, cfg.image_size});
    SplitMix64 rng(seed);
    x.fill_uniform(rng, lo, hi);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<T>(std::round(static_cast<double>(x[i]) * 255.0) / 255.0);
    }
    return nn::make_constant<T>(std::move(x), "covers");
}

template <typename T>
NodePtr<T> message_batch(const NetConfig& cfg, int n, std::size_t m_len, std::uint64_t seed) {
    Tensor<T> s({n, 1, cfg.image_size, cfg.image_size});
    SplitMix64 rng(seed);
    for (int ni = 0; ni < n; ++ni) {
        const auto key = StegoKey::random(kDefaultKeyBits, rng);
        const auto m = SecretMessage::random(m_len, rng);
        const auto sp = spread(m, key, cfg.image_size, cfg.image_size);
        const std::size_t plane = sp.plane.size();
        for (std::size_t i = 0; i < plane; ++i) {
            s[static_cast<std::size_t>(ni) * plane + i] = static_cast<T>(sp.plane[i]);
        }
    }
    return nn::make_constant<T>(std::move(s), "spread_msgs");
}

template <typename T>
std::vector<NodePtr<T>> trainable_leaves(const std::vector<nn::BoundLayer<T>>& bound) {
    std::vector<NodePtr<T>> leaves;
    for (const auto& b : bound) {
        if (!b.kernels->requires_grad) continue;
        leaves.push_back(b.kernels);
        leaves.push_back(b.bias);
        if (b.params->has_bn) {
            leaves.push_back(b.gamma);
            leaves.push_back(b.beta);
        }
    }
    return leaves;
}

}  // namespace

TEST_CASE("first-architecture embedder synthesizes a full-size stego", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(121);
    AliceNet<float> alice(1, cfg, rng);
    auto bound = alice.bind(false);
    auto x = cover_batch<float>(cfg, 2, 1);
    auto s = message_batch<float>(cfg, 2, 20, 2);

    auto out = alice.forward(bound, x, s, false, false);
    REQUIRE(out.y->value.shape() == x->value.shape());
    REQUIRE(out.y->value.all_finite());
    REQUIRE(out.n_map == nullptr);

    // Determinism for fixed parameters and inputs.
    auto bound2 = alice.bind(false);
    auto out2 = alice.forward(bound2, x, s, false, false);
    for (std::size_t i = 0; i < out.y->value.size(); ++i) {
        REQUIRE(out.y->value[i] == out2.y->value[i]);
    }
}

TEST_CASE("zeroed final layer makes the embedder constant", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(122);
    AliceNet<float> alice(1, cfg, rng);
    auto& last = alice.params().layers.back();
    last.kernels.fill(0.0f);
    last.bias.fill(0.37f);
    auto bound = alice.bind(false);
    auto out = alice.forward(bound, cover_batch<float>(cfg, 1, 3),
                             message_batch<float>(cfg, 1, 10, 4), false, false);
    for (std::size_t i = 0; i < out.y->value.size(); ++i) {
        REQUIRE(out.y->value[i] == Catch::Approx(0.37f));
    }

    AliceNet<float> alice2(2, cfg, rng);
    auto& last2 = alice2.params().layers.back();
    last2.kernels.fill(0.0f);
    last2.bias.fill(0.25f);
    auto bound2 = alice2.bind(false);
    auto out2 = alice2.forward(bound2, cover_batch<float>(cfg, 1, 5),
                               message_batch<float>(cfg, 1, 10, 6), false, false);
    for (std::size_t i = 0; i < out2.n_map->value.size(); ++i) {
        REQUIRE(out2.n_map->value[i] == Catch::Approx(std::tanh(0.25f)));
    }
}

TEST_CASE("embedder rejects mismatched shapes", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(123);
    AliceNet<float> alice(2, cfg, rng);
    auto bound = alice.bind(false);
    auto x = cover_batch<float>(cfg, 1, 7);
    auto s_small = nn::make_constant<float>(Tensor<float>({1, 1, 4, 4}), "s");
    REQUIRE_THROWS_AS(alice.forward(bound, x, s_small, false, false), ConfigError);

    auto x_bad = nn::make_constant<float>(Tensor<float>({1, 1, 4, 4}), "x");
    REQUIRE_THROWS_AS(alice.forward(bound, x_bad, x_bad, false, false), ConfigError);

    REQUIRE_THROWS_AS(AliceNet<float>(4, cfg, rng), ConfigError);
}

TEST_CASE("modification maps are tanh bounded and ternarize exactly", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(124);
    AliceNet<float> alice(2, cfg, rng);
    auto bound = alice.bind(false);
    auto x = cover_batch<float>(cfg, 2, 8);
    auto s = message_batch<float>(cfg, 2, 30, 9);

    auto soft = alice.forward(bound, x, s, false, false);
    for (std::size_t i = 0; i < soft.n_map->value.size(); ++i) {
        REQUIRE(soft.n_map->value[i] >= -1.0f);
        REQUIRE(soft.n_map->value[i] <= 1.0f);
    }

    auto hard = alice.forward(bound, x, s, false, true);
    for (std::size_t i = 0; i < hard.n_map->value.size(); ++i) {
        const float v = hard.n_map->value[i];
        REQUIRE((v == -1.0f || v == 0.0f || v == 1.0f));
    }

    // Discretized stegos are integer-valued in the 255 domain and within one
    // pixel level of the cover.
    for (std::size_t i = 0; i < hard.y->value.size(); ++i) {
        const double pix = 255.0 * static_cast<double>(hard.y->value[i]);
        REQUIRE(std::abs(pix - std::round(pix)) < 1e-3);
        REQUIRE(std::abs(hard.y->value[i] - x->value[i]) <= 1.0f / 255.0f + 1e-6f);
    }
}

TEST_CASE("integer coupler clamps at the pixel range", "[agents]") {
    GrayImage x(2, 2);
    x.pixels = {0, 100, 255, 7};
    REQUIRE(apply_mod_map(x, {0, 0, 0, 0}) == x);

    const auto y = apply_mod_map(x, {-1, 1, 1, -1});
    REQUIRE(y.pixels == std::vector<std::uint8_t>{0, 101, 255, 6});
    for (std::size_t i = 0; i < y.size(); ++i) {
        REQUIRE(std::abs(static_cast<int>(y.pixels[i]) - static_cast<int>(x.pixels[i])) <= 1);
    }

    REQUIRE_THROWS_AS(apply_mod_map(x, {2, 0, 0, 0}), ConfigError);
    REQUIRE_THROWS_AS(apply_mod_map(x, {0, 0, 0}), ConfigError);
}

TEST_CASE("plain extractor emits per-cell probabilities", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(125);
    BobNet<float> bob(1, cfg, rng);
    auto bound = bob.bind(false);
    auto y = cover_batch<float>(cfg, 2, 10);
    auto out = bob.forward(bound, y, false);
    REQUIRE(out.s_hat->value.shape() == y->value.shape());
    REQUIRE(out.x_prime == nullptr);
    for (std::size_t i = 0; i < out.s_hat->value.size(); ++i) {
        REQUIRE(out.s_hat->value[i] > 0.0f);
        REQUIRE(out.s_hat->value[i] < 1.0f);
    }
    auto bound2 = bob.bind(false);
    auto out2 = bob.forward(bound2, y, false);
    for (std::size_t i = 0; i < out.s_hat->value.size(); ++i) {
        REQUIRE(out.s_hat->value[i] == out2.s_hat->value[i]);
    }
}

TEST_CASE("source separation keeps the subtraction identity", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(126);
    BobNet<double> bob(3, cfg, rng);
    auto bound = bob.bind(false);
    auto y = cover_batch<double>(cfg, 2, 11);
    auto out = bob.forward(bound, y, false);
    REQUIRE(out.s_hat->value.shape() == y->value.shape());
    REQUIRE(out.x_prime->value.shape() == y->value.shape());
    REQUIRE(out.x_prime->value.all_finite());
    for (std::size_t i = 0; i < y->value.size(); ++i) {
        // n' is literally the subtraction node's output...
        REQUIRE(out.n_prime->value[i] == y->value[i] - out.x_prime->value[i]);
        // ...so the reconstruction identity holds to rounding.
        REQUIRE(out.n_prime->value[i] + out.x_prime->value[i] ==
                Catch::Approx(y->value[i]).margin(1e-12));
    }
    for (std::size_t i = 0; i < out.s_hat->value.size(); ++i) {
        REQUIRE(out.s_hat->value[i] > 0.0);
        REQUIRE(out.s_hat->value[i] < 1.0);
    }
}

TEST_CASE("u-net extractor needs divisible image sizes", "[agents]") {
    auto cfg = toy_config();
    cfg.image_size = 9;
    SplitMix64 rng(127);
    BobNet<float> bob(3, cfg, rng);
    auto bound = bob.bind(false);
    Tensor<float> y({1, 1, 9, 9}, 0.5f);
    REQUIRE_THROWS_AS(bob.forward(bound, nn::make_constant<float>(std::move(y)), false),
                      ConfigError);
}

TEST_CASE("steganalyzer scores one probability per image", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(128);
    EveNet<float> eve(cfg, rng);
    auto bound = eve.bind(false);
    auto z = cover_batch<float>(cfg, 3, 12);
    auto scores = eve.forward(bound, z, false);
    REQUIRE(scores->value.shape() == std::vector<int>{3, 1});
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(scores->value[i] > 0.0f);
        REQUIRE(scores->value[i] < 1.0f);
    }
    auto bound2 = eve.bind(false);
    auto scores2 = eve.forward(bound2, z, false);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(scores->value[i] == scores2->value[i]);

    auto wrong = nn::make_constant<float>(Tensor<float>({1, 1, 16, 16}, 0.5f), "wrong");
    REQUIRE_THROWS_AS(eve.forward(bound, wrong, false), ConfigError);

    auto bad_cfg = cfg;
    bad_cfg.image_size = 12;
    REQUIRE_THROWS_AS(EveNet<float>(bad_cfg, rng), ConfigError);
}

TEST_CASE("payloads of any length ride the same agents", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(129);
    AliceNet<float> alice(2, cfg, rng);
    auto bound = alice.bind(false);
    auto x = cover_batch<float>(cfg, 1, 13);
    for (const std::size_t m_len : {1ul, 16ul, 64ul}) {
        auto s = message_batch<float>(cfg, 1, m_len, 14 + m_len);
        auto out = alice.forward(bound, x, s, false, false);
        REQUIRE(out.y->value.shape() == x->value.shape());
    }
}

TEST_CASE("discretization still lets gradients reach the embedder", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(130);
    AliceNet<double> alice(2, cfg, rng);
    auto bound = alice.bind(true);
    auto x = cover_batch<double>(cfg, 2, 15);
    auto s = message_batch<double>(cfg, 2, 20, 16);
    auto out = alice.forward(bound, x, s, true, true);
    auto target = nn::make_constant<double>(Tensor<double>(x->value.shape(), 0.5));
    auto loss = nn::mse_between<double>(out.y, target);
    nn::backward(loss);
    bool any_nonzero = false;
    for (const auto& leaf : trainable_leaves(bound)) {
        if (!leaf->grad_ready) continue;
        REQUIRE(leaf->grad.all_finite());
        for (std::size_t i = 0; i < leaf->grad.size(); ++i) {
            any_nonzero = any_nonzero || leaf->grad[i] != 0.0;
        }
    }
    REQUIRE(any_nonzero);
}

TEST_CASE("embedder gradients pass the finite-difference oracle", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(131);
    auto x = cover_batch<double>(cfg, 2, 17, 0.3, 0.7);
    auto s = message_batch<double>(cfg, 2, 16, 18);

    for (const int arch : {1, 2}) {
        AliceNet<double> alice(arch, cfg, rng);
        auto bound = alice.bind(true);
        auto target = nn::make_constant<double>(Tensor<double>(x->value.shape(), 0.4));
        testing::check_gradients(trainable_leaves(bound), [&] {
            auto out = alice.forward(bound, x, s, true, false);
            return nn::mse_between<double>(out.y, target);
        }, 1e-4, 1e-4, 150);
    }
}

TEST_CASE("extractor gradients pass the finite-difference oracle", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(132);
    auto y = cover_batch<double>(cfg, 2, 19, 0.3, 0.7);
    auto target = nn::make_constant<double>(Tensor<double>(y->value.shape(), 0.6));

    for (const int arch : {1, 3}) {
        BobNet<double> bob(arch, cfg, rng);
        auto bound = bob.bind(true);
        testing::check_gradients(trainable_leaves(bound), [&] {
            auto out = bob.forward(bound, y, true);
            return nn::mse_between<double>(out.s_hat, target);
        }, 1e-4, 1e-4, 150);
    }
}

TEST_CASE("steganalyzer gradients pass the finite-difference oracle", "[agents]") {
    const auto cfg = toy_config();
    SplitMix64 rng(133);
    EveNet<double> eve(cfg, rng);
    auto bound = eve.bind(true);
    auto z = cover_batch<double>(cfg, 2, 20, 0.3, 0.7);
    testing::check_gradients(trainable_leaves(bound), [&] {
        auto scores = eve.forward(bound, z, true);
        return nn::bce_loss<double>(scores, {1.0, 0.0}, kScoreClamp);
    }, 1e-4, 1e-4, 150);
}
