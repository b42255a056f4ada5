#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "triadstego/baseline.hpp"
#include "triadstego/eval.hpp"
#include "triadstego/textures.hpp"
#include "triadstego/trainer.hpp"

using namespace triadstego;

namespace {

TrainConfig tiny_config(int arch = 1) {
    TrainConfig tc;
    tc.architecture = arch;
    tc.net.image_size = 8;
    tc.net.stack0_layers = 1;
    tc.net.stack0_channels = 3;
    tc.net.stack3_layers = 1;
    tc.net.stack3_channels = 3;
    tc.net.stack1_layers = 1;
    tc.net.stack1_channels = 3;
    tc.net.stack2_layers = 1;
    tc.net.stack2_channels = 3;
    tc.net.unet_depth = 2;
    tc.net.unet_base = 3;
    tc.net.eve_channels = {2, 2, 4, 4, 4};
    tc.net.eve_fc1 = 4;
    tc.net.eve_fc2 = 3;
    tc.batch_size = 2;
    tc.it1 = 2;
    tc.it2 = 1;
    tc.max_iter = 1;
    tc.val_batch = 2;
    tc.weights.beta = arch == 1 ? 0.0 : 0.1;
    tc.discretization_start = 1 << 20;
    return tc;
}

std::vector<GrayImage> small_covers(int count, std::uint64_t seed) {
    // Texture synthesis needs room for its low-frequency field, so cut 8x8
    // cover patches out of 16x16 textures.
    const auto big = synth_textures(count, 16, 16, seed);
    std::vector<GrayImage> out;
    out.reserve(big.size());
    for (const auto& img : big) {
        GrayImage patch(8, 8);
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                patch.pixels[static_cast<std::size_t>(r) * 8 + c] =
                    img.pixels[static_cast<std::size_t>(r) * 16 + c];
            }
        }
        out.push_back(std::move(patch));
    }
    return out;
}


TrainSession<float> tiny_session(int arch = 1, std::uint64_t seed = 7) {
    auto covers = small_covers(8, seed);
    std::vector<GrayImage> train(covers.begin(), covers.begin() + 6);
    std::vector<GrayImage> val(covers.begin() + 6, covers.end());
    return TrainSession<float>(tiny_config(arch), std::move(train), std::move(val));
}

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("pe combines false alarms and missed detections", "[eval]") {
    // Perfect separation.
    const auto perfect = compute_pe({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9});
    REQUIRE(perfect.pe == 0.0);
    REQUIRE(perfect.false_alarm_rate == 0.0);
    REQUIRE(perfect.missed_detection_rate == 0.0);

    // A scorer glued to the threshold calls everything stego.
    const auto flat = compute_pe({0, 0, 1, 1}, {0.5, 0.5, 0.5, 0.5});
    REQUIRE(flat.false_alarm_rate == 1.0);
    REQUIRE(flat.missed_detection_rate == 0.0);
    REQUIRE(flat.pe == 0.5);

    // FA 1/5 and MD 2/5 average to 0.3.
    const auto mixed = compute_pe({0, 0, 0, 0, 0, 1, 1, 1, 1, 1},
                                  {0.9, 0.1, 0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.1, 0.1});
    REQUIRE(mixed.false_alarm_rate == Catch::Approx(0.2));
    REQUIRE(mixed.missed_detection_rate == Catch::Approx(0.4));
    REQUIRE(mixed.pe == Catch::Approx(0.3));

    // Custom threshold moves the decision boundary.
    const auto strict = compute_pe({0, 1}, {0.6, 0.9}, 0.7);
    REQUIRE(strict.false_alarm_rate == 0.0);
    REQUIRE(strict.pe == 0.0);
    REQUIRE(strict.threshold == 0.7);

    REQUIRE_THROWS_AS(compute_pe({0, 0}, {0.1, 0.2}), ConfigError);       // one class
    REQUIRE_THROWS_AS(compute_pe({0, 1}, {0.1}), ConfigError);            // size mismatch
    REQUIRE_THROWS_AS(compute_pe({0, 2}, {0.1, 0.2}), ConfigError);       // bad label
}

TEST_CASE("extraction evaluation validates and bookkeeps", "[eval]") {
    auto sess = tiny_session();
    const auto covers = small_covers(3, 31);

    REQUIRE_THROWS_AS(evaluate_extraction(sess, covers, 1.5, std::nullopt, 1), CapacityError);
    REQUIRE_THROWS_AS(evaluate_extraction(sess, covers, -0.1, std::nullopt, 1), CapacityError);
    REQUIRE_THROWS_AS(evaluate_extraction(sess, {}, 0.4, std::nullopt, 1), ConfigError);

    const auto zero = evaluate_extraction(sess, covers, 0.0, std::nullopt, 1);
    REQUIRE_FALSE(zero.applicable);
    REQUIRE(zero.images == 3);

    // 0.4 bpp on 8x8 is 26 bits: three 7-bit blocks embed 21 coded / 12 data bits.
    const auto h7 = evaluate_extraction(sess, covers, 0.4, HammingVariant::H7_4, 1);
    REQUIRE(h7.applicable);
    REQUIRE(h7.ecc_used);
    REQUIRE(h7.embedded_bits == 21);
    REQUIRE(h7.data_bits == 12);
    REQUIRE(h7.real_payload_bpp == Catch::Approx(0.4 * 4.0 / 7.0));
    REQUIRE(h7.ber_pre_ecc >= 0.0);
    REQUIRE(h7.ber_pre_ecc <= 1.0);
    REQUIRE(h7.ber_post_ecc >= 0.0);
    REQUIRE(h7.ber_post_ecc <= 1.0);

    // An untrained extractor is close to chance, so the failure flag is set.
    REQUIRE(h7.extraction_failed == (h7.ber_pre_ecc > HammingCode::h7_4().correction_capability()));

    // A 15-bit block does not fit into a 4-bit budget.
    REQUIRE_THROWS_AS(evaluate_extraction(sess, covers, 0.06, HammingVariant::H15_11, 1),
                      CapacityError);

    // Without a code the data bits equal the embedded bits.
    const auto raw = evaluate_extraction(sess, covers, 0.4, std::nullopt, 1);
    REQUIRE(raw.embedded_bits == 26);
    REQUIRE(raw.data_bits == 26);
    REQUIRE_FALSE(raw.ecc_used);
    REQUIRE(raw.ber_post_ecc == raw.ber_pre_ecc);
    REQUIRE(raw.real_payload_bpp == Catch::Approx(0.4));

    // Same seed, same report.
    const auto again = evaluate_extraction(sess, covers, 0.4, std::nullopt, 1);
    REQUIRE(again.ber_pre_ecc == raw.ber_pre_ecc);
    const auto other = evaluate_extraction(sess, covers, 0.4, std::nullopt, 2);
    REQUIRE((other.ber_pre_ecc != raw.ber_pre_ecc || other.ber_post_ecc != raw.ber_post_ecc));
}

TEST_CASE("modification maps mark changed pixels", "[eval]") {
    const auto dir = temp_dir("triadstego_modmap_test");
    const auto covers = small_covers(1, 41);
    const GrayImage& cover = covers.front();

    const double none = export_mod_map(cover, cover, dir / "none.pgm");
    REQUIRE(none == 0.0);
    const GrayImage black = read_pgm(dir / "none.pgm");
    for (const auto p : black.pixels) REQUIRE(p == 0);

    GrayImage one = cover;
    one.pixels[5] = static_cast<std::uint8_t>(one.pixels[5] ^ 1);
    const double single = export_mod_map(cover, one, dir / "one.pgm");
    REQUIRE(single == Catch::Approx(1.0 / 64.0));
    const GrayImage map = read_pgm(dir / "one.pgm");
    REQUIRE(map.pixels[5] == 255);
    REQUIRE(map.pixels[4] == 0);

    GrayImage wrong(4, 4);
    REQUIRE_THROWS_AS(export_mod_map(cover, wrong, dir / "bad.pgm"), ConfigError);

    // The +/-1 baseline at rate 0.4 flips about 40% of pixels.
    const auto big = synth_textures(1, 32, 32, 42).front();
    SplitMix64 rng(43);
    const auto key = StegoKey::random(kDefaultKeyBits, rng);
    const auto stego = baseline_pm1_embed(big, 0.4, key);
    const double frac = export_mod_map(big, stego, dir / "baseline.pgm");
    REQUIRE(frac > 0.3);
    REQUIRE(frac < 0.5);
    std::filesystem::remove_all(dir);
}

TEST_CASE("key sensitivity compares stegos under two keys", "[eval]") {
    auto sess = tiny_session(2);
    SplitMix64 rng(51);
    const auto key1 = StegoKey::random(kDefaultKeyBits, rng);
    const auto key2 = StegoKey::random(kDefaultKeyBits, rng);
    const auto msg = SecretMessage::random(sess.message_length(), rng);
    const auto cover = small_covers(1, 52).front();

    const auto r = key_sensitivity(sess, cover, msg, key1, key2);
    REQUIRE_FALSE(r.keys_identical);
    REQUIRE(r.stego1.width == 8);
    REQUIRE(r.diff_map.width == 8);
    REQUIRE(r.diff_fraction >= 0.0);
    REQUIRE(r.diff_fraction <= 1.0);
    REQUIRE(r.change_rate1 <= 1.0);
    std::size_t white = 0;
    for (const auto p : r.diff_map.pixels) {
        REQUIRE((p == 0 || p == 255));
        if (p == 255) ++white;
    }
    REQUIRE(static_cast<double>(white) / 64.0 == Catch::Approx(r.diff_fraction));

    const auto same = key_sensitivity(sess, cover, msg, key1, key1);
    REQUIRE(same.keys_identical);
    REQUIRE(same.diff_fraction == 0.0);
    REQUIRE(same.stego1 == same.stego2);

    const auto again = key_sensitivity(sess, cover, msg, key1, key2);
    REQUIRE(again.diff_fraction == r.diff_fraction);
    REQUIRE(again.stego1 == r.stego1);
}

TEST_CASE("steganalysis experiments validate their splits", "[eval]") {
    const auto covers = small_covers(8, 61);
    const auto cfg = tiny_config().net;
    StegExpConfig opt;
    opt.train_iters = 1;
    opt.batch_pairs = 2;
    const auto identity = [](std::size_t, const GrayImage& c) { return c; };

    REQUIRE_THROWS_AS(
        steganalysis_experiment<float>(identity, covers, cfg, opt, {}, {0, 1}), ConfigError);
    REQUIRE_THROWS_AS(
        steganalysis_experiment<float>(identity, covers, cfg, opt, {0, 1}, {}), ConfigError);
    REQUIRE_THROWS_AS(
        steganalysis_experiment<float>(identity, covers, cfg, opt, {0, 1, 2}, {2, 3}),
        ConfigError);
    REQUIRE_THROWS_AS(
        steganalysis_experiment<float>(identity, covers, cfg, opt, {0, 1}, {99}), ConfigError);
}

TEST_CASE("an invisible embedder scores at chance", "[eval]") {
    const auto covers = small_covers(16, 62);
    const auto cfg = tiny_config().net;
    StegExpConfig opt;
    opt.train_iters = 8;
    opt.batch_pairs = 2;
    opt.test_frac = 0.25;
    opt.seed = 5;
    opt.dataset_id = "synthetic";
    const auto identity = [](std::size_t, const GrayImage& c) { return c; };
    const auto r = steganalysis_experiment<float>(identity, covers, cfg, opt);
    // Identical inputs under both labels: every pair scores identically, so
    // FA + MD = 1 exactly and Pe sits at one half.
    REQUIRE(r.pe == Catch::Approx(0.5));
    REQUIRE(r.dataset_id == "synthetic");
    REQUIRE(r.steganalyzer_id == "fresh-eve");

    const auto again = steganalysis_experiment<float>(identity, covers, cfg, opt);
    REQUIRE(again.pe == r.pe);
    REQUIRE(again.false_alarm_rate == r.false_alarm_rate);
}

TEST_CASE("a loud baseline embedder is detectable", "[eval]") {
    // Detection statistics need pixel count: at 8x8 the pooled residual of a
    // 40% +/-1 flip field drowns in texture noise, at 32x32 it separates.
    const auto covers = synth_textures(96, 32, 32, 63);
    auto cfg = tiny_config().net;
    cfg.image_size = 32;
    cfg.eve_channels = {8, 8, 16, 16, 32};
    cfg.eve_fc1 = 32;
    cfg.eve_fc2 = 16;
    StegExpConfig opt;
    opt.train_iters = 200;
    opt.batch_pairs = 4;
    opt.test_frac = 0.25;
    opt.lr = 1e-3;
    opt.seed = 6;
    const auto loud = [](std::size_t i, const GrayImage& c) {
        SplitMix64 rng(1000 + i);
        return baseline_pm1_embed(c, 0.4, StegoKey::random(kDefaultKeyBits, rng));
    };
    const auto r = steganalysis_experiment<float>(loud, covers, cfg, opt);
    REQUIRE(r.pe < 0.35);
}

TEST_CASE("payload sweeps report one row per payload", "[eval]") {
    auto sess = tiny_session();
    const auto covers = small_covers(4, 71);
    StegExpConfig opt;
    opt.train_iters = 2;
    opt.batch_pairs = 2;
    opt.test_frac = 0.5;
    const std::vector<double> payloads = {0.2, 0.4};
    const auto rows = payload_sweep(sess, covers, payloads, HammingVariant::H7_4, opt, 9);
    REQUIRE(rows.size() == 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(rows[i].payload_bpp == payloads[i]);
        REQUIRE(rows[i].real_payload_bpp ==
                Catch::Approx(real_payload(payloads[i], HammingVariant::H7_4)));
        REQUIRE(rows[i].ber >= 0.0);
        REQUIRE(rows[i].ber <= 1.0);
        REQUIRE(rows[i].pe >= 0.0);
        REQUIRE(rows[i].pe <= 1.0);
        REQUIRE(rows[i].extraction_failed ==
                (rows[i].ber > HammingCode::h7_4().correction_capability()));
    }
}
