#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "triadstego/agents.hpp"
#include "triadstego/baseline.hpp"
#include "triadstego/checkpoint.hpp"
#include "triadstego/codec.hpp"
#include "triadstego/config.hpp"
#include "triadstego/dataset.hpp"
#include "triadstego/errors.hpp"
#include "triadstego/hamming.hpp"
#include "triadstego/image.hpp"
#include "triadstego/losses.hpp"
#include "triadstego/rng.hpp"

namespace triadstego {

// Sub-seed purposes. Every random draw in training hashes (seed, tag,
// counter), so checkpoints only need to carry the counters.
namespace seedtag {
inline constexpr std::uint64_t kInitAlice = 0x11;
inline constexpr std::uint64_t kInitBob = 0x12;
inline constexpr std::uint64_t kInitEve = 0x13;
inline constexpr std::uint64_t kDataEpoch = 0x21;
inline constexpr std::uint64_t kEveBatch = 0x22;
inline constexpr std::uint64_t kKey = 0x31;
inline constexpr std::uint64_t kMessage = 0x32;
inline constexpr std::uint64_t kValKey = 0x41;
inline constexpr std::uint64_t kValMessage = 0x42;
inline constexpr std::uint64_t kPretrainKey = 0x51;
inline constexpr std::uint64_t kPretrainData = 0x52;
}  // namespace seedtag

struct TrainConfig {
    int architecture = 1;  // 1 direct synthesis, 2 modification map, 3 + source separation
    LossWeights weights;   // lambda a/b/e = 0.2/0.4/0.4; beta used by arch 2/3
    double payload_bpp = 0.4;

    // Alternation schedule. it1 team-1 (Bob then Alice) iterations, then it2
    // steganalyzer iterations, is one outer loop.
    int it1 = 50;
    int it2 = 1;
    int max_iter = 5000;  // outer loops; desk-scale stand-in for the full-scale 1e6
    int batch_size = 4;

    std::uint64_t seed_data = 1;
    std::uint64_t seed_keys = 2;
    std::uint64_t seed_messages = 3;
    std::uint64_t seed_init = 4;

    // Outer-loop index at which the discretizer turns on; -1 = automatic,
    // when the moving-average losses flatten out.
    int discretization_start = -1;
    int fine_tune_iters = 500;

    double lr_alice = 1e-4;
    double lr_bob = 1e-4;
    double lr_eve = 1e-4;

    double convergence_tol = 0.01;
    int convergence_window = 200;
    int val_batch = 8;

    // Steganalyzer pre-training on the +/-1 baseline embedder.
    int pretrain_iters = 2000;
    int pretrain_patience = 5;
    int pretrain_eval_every = 50;
    double pretrain_change_rate = 0.4;
    double pretrain_min_accuracy = 0.6;

    std::string out_dir;  // NaN-abort dumps land here when set
    int log_every = 0;    // print a progress line every N outer loops (0 = silent)

    NetConfig net;

    void validate() const {
        weights.validate();
        if (architecture < 1 || architecture > 3) {
            throw ConfigError("architecture must be 1, 2, or 3");
        }
        if (log_every < 0) throw ConfigError("log_every must be non-negative");
        if (payload_bpp < 0.0 || payload_bpp > 1.0) {
            throw ConfigError("payload must lie in [0,1] bits per pixel");
        }
        if (it1 < 1) throw ConfigError("it1 must be at least 1");
        if (it2 < 0) throw ConfigError("it2 must be non-negative");
        if (max_iter < 0) throw ConfigError("max_iter must be non-negative");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (fine_tune_iters < 0) throw ConfigError("fine_tune_iters must be non-negative");
        if (convergence_window < 1) throw ConfigError("convergence_window must be positive");
        if (val_batch < 1) throw ConfigError("val_batch must be positive");
    }
};

struct TrainRecord {
    std::uint64_t loop = 0;
    double l_alice = 0.0;
    double l_bob = 0.0;
    double l_eve = 0.0;
    double ber = 0.0;
    double change_rate = 0.0;
    std::string phase;  // "main" or "fine_tune"
};

struct TrainLog {
    std::vector<TrainRecord> records;

    void write_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write training log " + path.string());
        out << "loop,l_alice,l_bob,l_eve,ber,change_rate,phase\n";
        for (const auto& r : records) {
            out << r.loop << ',' << r.l_alice << ',' << r.l_bob << ',' << r.l_eve << ','
                << r.ber << ',' << r.change_rate << ',' << r.phase << '\n';
        }
        if (!out) throw IoError("failed writing training log " + path.string());
    }
};

namespace detail {

// Per-image fresh key/message pair derived from a global counter; the
// counter is the only state, so two batches can never repeat a pair.
inline StegoKey counter_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t counter) {
    SplitMix64 rng(derive_subseed(seed, tag, counter));
    return StegoKey::random(kDefaultKeyBits, rng);
}

// The checkpoint carries the full network shape so inference commands can
// rebuild a session from the file alone.
inline void put_net_config(Checkpoint& cp, const NetConfig& net) {
    auto put = [&cp](const char* key, std::uint64_t v) { cp.ints[std::string("net/") + key] = v; };
    put("stack0_layers", static_cast<std::uint64_t>(net.stack0_layers));
    put("stack0_channels", static_cast<std::uint64_t>(net.stack0_channels));
    put("stack3_layers", static_cast<std::uint64_t>(net.stack3_layers));
    put("stack3_channels", static_cast<std::uint64_t>(net.stack3_channels));
    put("stack1_layers", static_cast<std::uint64_t>(net.stack1_layers));
    put("stack1_channels", static_cast<std::uint64_t>(net.stack1_channels));
    put("stack2_layers", static_cast<std::uint64_t>(net.stack2_layers));
    put("stack2_channels", static_cast<std::uint64_t>(net.stack2_channels));
    put("unet_depth", static_cast<std::uint64_t>(net.unet_depth));
    put("unet_base", static_cast<std::uint64_t>(net.unet_base));
    for (std::size_t i = 0; i < net.eve_channels.size(); ++i) {
        put(("eve_channels" + std::to_string(i + 1)).c_str(),
            static_cast<std::uint64_t>(net.eve_channels[i]));
    }
    put("eve_fc1", static_cast<std::uint64_t>(net.eve_fc1));
    put("eve_fc2", static_cast<std::uint64_t>(net.eve_fc2));
    put("srm_trainable_alice", net.srm_trainable_alice ? 1 : 0);
    put("srm_trainable_bob", net.srm_trainable_bob ? 1 : 0);
    put("srm_trainable_eve", net.srm_trainable_eve ? 1 : 0);
    cp.reals["net/leaky_alpha"] = net.leaky_alpha;
    cp.reals["net/bn_momentum"] = net.bn_momentum;
    cp.reals["net/bn_eps"] = net.bn_eps;
}

inline NetConfig get_net_config(const Checkpoint& cp, int image_size) {
    auto get = [&cp](const char* key) {
        const auto it = cp.ints.find(std::string("net/") + key);
        if (it == cp.ints.end()) {
            throw IoError(std::string("checkpoint is missing \"net/") + key + "\"");
        }
        return static_cast<int>(it->second);
    };
    NetConfig net;
    net.image_size = image_size;
    net.stack0_layers = get("stack0_layers");
    net.stack0_channels = get("stack0_channels");
    net.stack3_layers = get("stack3_layers");
    net.stack3_channels = get("stack3_channels");
    net.stack1_layers = get("stack1_layers");
    net.stack1_channels = get("stack1_channels");
    net.stack2_layers = get("stack2_layers");
    net.stack2_channels = get("stack2_channels");
    net.unet_depth = get("unet_depth");
    net.unet_base = get("unet_base");
    for (std::size_t i = 0; i < net.eve_channels.size(); ++i) {
        net.eve_channels[i] = get(("eve_channels" + std::to_string(i + 1)).c_str());
    }
    net.eve_fc1 = get("eve_fc1");
    net.eve_fc2 = get("eve_fc2");
    net.srm_trainable_alice = get("srm_trainable_alice") != 0;
    net.srm_trainable_bob = get("srm_trainable_bob") != 0;
    net.srm_trainable_eve = get("srm_trainable_eve") != 0;
    net.leaky_alpha = cp.reals.at("net/leaky_alpha");
    net.bn_momentum = cp.reals.at("net/bn_momentum");
    net.bn_eps = cp.reals.at("net/bn_eps");
    return net;
}

inline SecretMessage counter_message(std::uint64_t seed, std::uint64_t tag,
                                     std::uint64_t counter, std::size_t length) {
    SplitMix64 rng(derive_subseed(seed, tag, counter));
    return SecretMessage::random(length, rng);
}

}  // namespace detail

// Tag for building a session that only embeds/extracts (no cover sets, no
// validation batch); training entry points then fail on the empty cover set.
struct InferenceOnly {};

template <typename T = float>
class TrainSession {
public:
    TrainSession(TrainConfig config, InferenceOnly)
        : cfg_(std::move(config)), alice_(make_alice()), bob_(make_bob()), eve_(make_eve()) {
        cfg_.validate();
        const int side = cfg_.net.image_size;
        m_len_ = static_cast<std::size_t>(std::llround(
            cfg_.payload_bpp * static_cast<double>(side) * static_cast<double>(side)));
        if (m_len_ == 0) throw ConfigError("payload rounds to zero bits per image");
    }

    TrainSession(TrainConfig config, std::vector<GrayImage> train_covers,
                 std::vector<GrayImage> val_covers)
        : cfg_(std::move(config)),
          alice_(make_alice()),
          bob_(make_bob()),
          eve_(make_eve()),
          train_covers_(std::move(train_covers)),
          val_covers_(std::move(val_covers)) {
        cfg_.validate();
        if (train_covers_.empty()) throw ConfigError("training cover set is empty");
        if (val_covers_.empty()) throw ConfigError("validation cover set is empty");
        for (const auto& img : train_covers_) check_cover(img);
        for (const auto& img : val_covers_) check_cover(img);
        const int side = cfg_.net.image_size;
        m_len_ = static_cast<std::size_t>(std::llround(
            cfg_.payload_bpp * static_cast<double>(side) * static_cast<double>(side)));
        if (m_len_ == 0) throw ConfigError("payload rounds to zero bits per image");
        build_validation_set();
    }

    const TrainConfig& config() const { return cfg_; }
    AliceNet<T>& alice() { return alice_; }
    BobNet<T>& bob() { return bob_; }
    EveNet<T>& eve() { return eve_; }
    TrainLog& log() { return log_; }
    const TrainLog& log() const { return log_; }
    std::uint64_t loop() const { return loop_; }
    std::uint64_t team1_steps() const { return team1_steps_; }
    std::uint64_t eve_steps() const { return eve_steps_; }
    bool discretizing() const { return discretize_; }
    std::size_t message_length() const { return m_len_; }

    // One team-1 iteration: a Bob update on the extraction loss, then an
    // Alice update on the full three-term objective. The steganalyzer runs
    // inference-mode and unbound, so its parameters, optimizer slots, and
    // batch-norm buffers all stay bit-constant.
    void team1_iteration() {
        const Batch batch = next_train_batch();

        {   // Bob step.
            auto alice_bound = alice_.bind(false);
            auto bob_bound = bob_.bind(true);
            auto x = nn::make_constant<T>(batch.covers, "batch/covers");
            auto s = nn::make_constant<T>(batch.spread, "batch/spread");
            auto out = alice_.forward(alice_bound, x, s, true, discretize_);
            auto bob_out = bob_.forward(bob_bound, out.y, true);
            auto l_bob = bob_loss_node(bob_out, x, s, batch);
            check_finite(l_bob->value[0], "extractor loss", &batch);
            nn::backward(l_bob);
            nn::AdamHyper h;
            h.lr = cfg_.lr_bob;
            bob_.params().apply(bob_bound, h);
            last_l_bob_ = static_cast<double>(l_bob->value[0]);
        }

        {   // Alice step: gradients flow through frozen Bob and Eve.
            auto alice_bound = alice_.bind(true);
            auto bob_bound = bob_.bind(false);
            auto eve_bound = eve_.bind(false);
            auto x = nn::make_constant<T>(batch.covers, "batch/covers");
            auto s = nn::make_constant<T>(batch.spread, "batch/spread");
            auto out = alice_.forward(alice_bound, x, s, true, discretize_);
            auto bob_out = bob_.forward(bob_bound, out.y, true);
            auto l_bob = bob_loss_node(bob_out, x, s, batch);
            auto scores = eve_.forward(eve_bound, out.y, false);
            const std::vector<T> stego_labels(static_cast<std::size_t>(cfg_.batch_size), T(1));
            auto l_eve = nn::bce_loss(scores, stego_labels, kScoreClamp, "alice/l_eve");

            nn::NodePtr<T> dist;
            if (cfg_.architecture == 1) {
                dist = nn::mse_between(out.y, x, "alice/dist_mse");
            } else {
                // |mean(|n|) - beta| anchors the change rate at beta from
                // both sides; the logged objective keeps this form.
                dist = nn::abs_minus(nn::mean_abs(out.n_map, "alice/change_rate"),
                                     cfg_.weights.beta, "alice/dist_beta");
            }
            auto l_alice = nn::weighted_sum<T>({{cfg_.weights.lambda_a, dist},
                                                {cfg_.weights.lambda_b, l_bob},
                                                {-cfg_.weights.lambda_e, l_eve}},
                                               0.0, "alice/objective");
            check_finite(l_alice->value[0], "embedder loss", &batch);
            nn::backward(l_alice);
            nn::AdamHyper h;
            h.lr = cfg_.lr_alice;
            alice_.params().apply(alice_bound, h);
            last_l_alice_ = static_cast<double>(l_alice->value[0]);
            last_l_adv_ = static_cast<double>(l_eve->value[0]);
        }

        ++team1_steps_;
    }

    // One steganalyzer iteration: covers against stegos the current embedder
    // just produced, label 0/1. Alice and Bob run unbound in inference mode,
    // so their parameters and buffers stay bit-constant here.
    void team2_iteration() {
        SplitMix64 pick(derive_subseed(cfg_.seed_data, seedtag::kEveBatch, eve_steps_));
        const int b = cfg_.batch_size;
        std::vector<std::size_t> idx(static_cast<std::size_t>(b));
        for (auto& i : idx) i = static_cast<std::size_t>(pick.below(train_covers_.size()));

        Batch batch = make_batch(idx, eve_sample_counter_, seedtag::kKey, seedtag::kMessage);
        eve_sample_counter_ += static_cast<std::uint64_t>(b);

        Tensor<T> stego;
        {
            auto alice_bound = alice_.bind(false);
            auto x = nn::make_constant<T>(batch.covers, "eve_batch/covers");
            auto s = nn::make_constant<T>(batch.spread, "eve_batch/spread");
            auto out = alice_.forward(alice_bound, x, s, false, discretize_);
            stego = out.y->value;
        }

        const int side = cfg_.net.image_size;
        Tensor<T> z({2 * b, 1, side, side});
        std::copy(batch.covers.data(), batch.covers.data() + batch.covers.size(), z.data());
        std::copy(stego.data(), stego.data() + stego.size(), z.data() + batch.covers.size());
        std::vector<T> labels(static_cast<std::size_t>(2 * b), T(0));
        for (int i = 0; i < b; ++i) labels[static_cast<std::size_t>(b + i)] = T(1);

        auto eve_bound = eve_.bind(true);
        auto zn = nn::make_constant<T>(std::move(z), "eve_batch/images");
        auto scores = eve_.forward(eve_bound, zn, true);
        auto l_eve = nn::bce_loss(scores, labels, kScoreClamp, "eve/objective");
        check_finite(l_eve->value[0], "steganalyzer loss", &batch);
        nn::backward(l_eve);
        nn::AdamHyper h;
        h.lr = cfg_.lr_eve;
        eve_.params().apply(eve_bound, h);
        last_l_eve_ = static_cast<double>(l_eve->value[0]);

        ++eve_steps_;
    }

    // Turns the discretizer on. Returns false (and changes nothing) when it
    // is already active.
    bool enable_discretization() {
        if (discretize_) {
            std::cerr << "warning: discretization already enabled; ignoring\n";
            return false;
        }
        discretize_ = true;
        discretize_loop_ = loop_;
        return true;
    }

    // The alternating optimization: it1 team-1 iterations then it2
    // steganalyzer iterations per outer loop, a per-loop log record, and the
    // late discretization switch (explicit loop index or loss-plateau
    // automatic). After the switch, training continues fine_tune_iters loops.
    void train() {
        maybe_activate_discretization();
        while (loop_ < end_loop()) {
            for (int i = 0; i < cfg_.it1; ++i) team1_iteration();
            for (int j = 0; j < cfg_.it2; ++j) team2_iteration();
            ++loop_;
            append_record();
            if (cfg_.log_every > 0 && loop_ % static_cast<std::uint64_t>(cfg_.log_every) == 0) {
                const auto& r = log_.records.back();
                std::cout << "loop " << r.loop << "  l_alice " << r.l_alice << "  l_bob "
                          << r.l_bob << "  l_eve " << r.l_eve << "  ber " << r.ber
                          << "  change " << r.change_rate << "  " << r.phase << std::endl;
            }
            maybe_activate_discretization();
        }
    }

    // --- single-image entry points (evaluation, CLI) ---------------------------

    GrayImage embed(const GrayImage& cover, const SecretMessage& msg, const StegoKey& key,
                    std::optional<bool> discretize = std::nullopt) {
        check_cover(cover);
        const int side = cfg_.net.image_size;
        const auto sp = spread(msg, key, side, side);
        Tensor<T> x({1, 1, side, side});
        const auto norm = normalize<T>(cover);
        std::copy(norm.begin(), norm.end(), x.data());
        Tensor<T> s({1, 1, side, side});
        for (std::size_t i = 0; i < sp.plane.size(); ++i) s[i] = static_cast<T>(sp.plane[i]);

        auto alice_bound = alice_.bind(false);
        auto xn = nn::make_constant<T>(std::move(x), "embed/cover");
        auto sn = nn::make_constant<T>(std::move(s), "embed/spread");
        auto out = alice_.forward(alice_bound, xn, sn, false, discretize.value_or(discretize_));
        std::vector<T> values(out.y->value.data(), out.y->value.data() + out.y->value.size());
        return denormalize_round(values, side, side);
    }

    std::vector<std::uint8_t> extract(const GrayImage& stego, const StegoKey& key,
                                      std::size_t message_bits) {
        return harden(extract_soft(stego, key, message_bits));
    }

    std::vector<double> extract_soft(const GrayImage& stego, const StegoKey& key,
                                     std::size_t message_bits) {
        check_cover(stego);
        const int side = cfg_.net.image_size;
        Tensor<T> y({1, 1, side, side});
        const auto norm = normalize<T>(stego);
        std::copy(norm.begin(), norm.end(), y.data());
        auto bob_bound = bob_.bind(false);
        auto yn = nn::make_constant<T>(std::move(y), "extract/stego");
        auto out = bob_.forward(bob_bound, yn, false);
        std::vector<double> plane(out.s_hat->value.size());
        for (std::size_t i = 0; i < plane.size(); ++i) {
            plane[i] = static_cast<double>(out.s_hat->value[i]);
        }
        return despread(plane, key, message_bits, side, side);
    }

    // --- checkpointing ----------------------------------------------------------

    Checkpoint to_checkpoint() const {
        Checkpoint cp;
        cp.texts["format"] = "triadstego-session";
        cp.ints["arch"] = static_cast<std::uint64_t>(cfg_.architecture);
        cp.ints["image_size"] = static_cast<std::uint64_t>(cfg_.net.image_size);
        cp.ints["loop"] = loop_;
        cp.ints["team1_steps"] = team1_steps_;
        cp.ints["eve_steps"] = eve_steps_;
        cp.ints["sample_counter"] = sample_counter_;
        cp.ints["eve_sample_counter"] = eve_sample_counter_;
        cp.ints["data_cursor"] = data_cursor_;
        cp.ints["discretize"] = discretize_ ? 1 : 0;
        cp.ints["discretize_loop"] = discretize_loop_;
        cp.reals["payload_bpp"] = cfg_.payload_bpp;
        cp.reals["weights/lambda_a"] = cfg_.weights.lambda_a;
        cp.reals["weights/lambda_b"] = cfg_.weights.lambda_b;
        cp.reals["weights/lambda_e"] = cfg_.weights.lambda_e;
        cp.reals["weights/beta"] = cfg_.weights.beta;
        detail::put_net_config(cp, cfg_.net);
        checkpoint_store_params(cp, alice_.params());
        checkpoint_store_params(cp, bob_.params());
        checkpoint_store_params(cp, eve_.params());
        put_history(cp, "trainer/history_alice", hist_alice_);
        put_history(cp, "trainer/history_bob", hist_bob_);
        put_history(cp, "trainer/history_eve", hist_eve_);
        return cp;
    }

    void restore(const Checkpoint& cp) {
        const auto fmt = cp.texts.find("format");
        if (fmt == cp.texts.end() || fmt->second != "triadstego-session") {
            throw IoError("checkpoint is not a training session");
        }
        if (cp.ints.at("arch") != static_cast<std::uint64_t>(cfg_.architecture)) {
            throw ConfigError("checkpoint architecture " + std::to_string(cp.ints.at("arch")) +
                              " does not match configured architecture " +
                              std::to_string(cfg_.architecture));
        }
        if (cp.ints.at("image_size") != static_cast<std::uint64_t>(cfg_.net.image_size)) {
            throw ConfigError("checkpoint image size does not match configuration");
        }
        checkpoint_load_params(cp, alice_.params());
        checkpoint_load_params(cp, bob_.params());
        checkpoint_load_params(cp, eve_.params());
        loop_ = cp.ints.at("loop");
        team1_steps_ = cp.ints.at("team1_steps");
        eve_steps_ = cp.ints.at("eve_steps");
        sample_counter_ = cp.ints.at("sample_counter");
        eve_sample_counter_ = cp.ints.at("eve_sample_counter");
        data_cursor_ = cp.ints.at("data_cursor");
        discretize_ = cp.ints.at("discretize") != 0;
        discretize_loop_ = cp.ints.at("discretize_loop");
        get_history(cp, "trainer/history_alice", hist_alice_);
        get_history(cp, "trainer/history_bob", hist_bob_);
        get_history(cp, "trainer/history_eve", hist_eve_);
    }

    void load_eve_checkpoint(const Checkpoint& cp) {
        checkpoint_load_params(cp, eve_.params());
    }

    // --- per-loop validation metrics --------------------------------------------

    struct ValMetrics {
        double ber = 0.0;
        double change_rate = 0.0;
    };

    ValMetrics validation_metrics() {
        auto alice_bound = alice_.bind(false);
        auto bob_bound = bob_.bind(false);
        auto x = nn::make_constant<T>(val_covers_t_, "val/covers");
        auto s = nn::make_constant<T>(val_spread_t_, "val/spread");
        auto out = alice_.forward(alice_bound, x, s, false, discretize_);
        auto bob_out = bob_.forward(bob_bound, out.y, false);

        const int side = cfg_.net.image_size;
        const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
        ValMetrics m;
        std::size_t changed = 0;
        for (std::size_t i = 0; i < out.y->value.size(); ++i) {
            const double yv = std::round(255.0 * static_cast<double>(out.y->value[i]));
            const double xv = std::round(255.0 * static_cast<double>(val_covers_t_[i]));
            if (yv != xv) ++changed;
        }
        m.change_rate = static_cast<double>(changed) / static_cast<double>(out.y->value.size());

        double ber_acc = 0.0;
        for (std::size_t item = 0; item < val_items_.size(); ++item) {
            std::vector<double> soft(plane);
            for (std::size_t i = 0; i < plane; ++i) {
                soft[i] = static_cast<double>(bob_out.s_hat->value[item * plane + i]);
            }
            const auto got =
                harden(despread(soft, val_items_[item].key, m_len_, side, side));
            ber_acc += ber(val_items_[item].msg.bits, got);
        }
        m.ber = ber_acc / static_cast<double>(val_items_.size());
        return m;
    }

private:
    struct Batch {
        Tensor<T> covers;   // (b,1,h,w) normalized
        Tensor<T> spread;   // (b,1,h,w) spread message planes
        Tensor<T> mask;     // (b,1,h,w) occupancy
        std::vector<StegoKey> keys;
        std::vector<SecretMessage> messages;
        std::vector<std::size_t> cover_indices;
    };

    struct ValItem {
        SecretMessage msg;
        StegoKey key;
    };

    AliceNet<T> make_alice() {
        SplitMix64 rng(derive_subseed(cfg_.seed_init, seedtag::kInitAlice, 0));
        return AliceNet<T>(cfg_.architecture, cfg_.net, rng);
    }
    BobNet<T> make_bob() {
        SplitMix64 rng(derive_subseed(cfg_.seed_init, seedtag::kInitBob, 0));
        return BobNet<T>(cfg_.architecture, cfg_.net, rng);
    }
    EveNet<T> make_eve() {
        SplitMix64 rng(derive_subseed(cfg_.seed_init, seedtag::kInitEve, 0));
        return EveNet<T>(cfg_.net, rng);
    }

    void check_cover(const GrayImage& img) const {
        if (img.width != cfg_.net.image_size || img.height != cfg_.net.image_size) {
            throw ConfigError("cover is " + std::to_string(img.width) + "x" +
                              std::to_string(img.height) + ", expected " +
                              std::to_string(cfg_.net.image_size) + "x" +
                              std::to_string(cfg_.net.image_size));
        }
    }

    void build_validation_set() {
        const int side = cfg_.net.image_size;
        const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
        const std::size_t n =
            std::min<std::size_t>(static_cast<std::size_t>(cfg_.val_batch), val_covers_.size());
        val_covers_t_ = Tensor<T>({static_cast<int>(n), 1, side, side});
        val_spread_t_ = Tensor<T>({static_cast<int>(n), 1, side, side});
        for (std::size_t item = 0; item < n; ++item) {
            const auto norm = normalize<T>(val_covers_[item]);
            std::copy(norm.begin(), norm.end(), val_covers_t_.data() + item * plane);
            ValItem v;
            v.key = detail::counter_key(cfg_.seed_keys, seedtag::kValKey, item);
            v.msg = detail::counter_message(cfg_.seed_messages, seedtag::kValMessage, item,
                                            m_len_);
            const auto sp = spread(v.msg, v.key, side, side);
            for (std::size_t i = 0; i < plane; ++i) {
                val_spread_t_[item * plane + i] = static_cast<T>(sp.plane[i]);
            }
            val_items_.push_back(std::move(v));
        }
    }

    Batch make_batch(const std::vector<std::size_t>& indices, std::uint64_t counter_base,
                     std::uint64_t key_tag, std::uint64_t msg_tag) {
        const int side = cfg_.net.image_size;
        const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
        const int b = static_cast<int>(indices.size());
        Batch batch;
        batch.covers = Tensor<T>({b, 1, side, side});
        batch.spread = Tensor<T>({b, 1, side, side});
        batch.mask = Tensor<T>({b, 1, side, side});
        batch.cover_indices = indices;
        for (std::size_t item = 0; item < indices.size(); ++item) {
            const auto norm = normalize<T>(train_covers_[indices[item]]);
            std::copy(norm.begin(), norm.end(), batch.covers.data() + item * plane);
            const std::uint64_t c = counter_base + item;
            StegoKey key = detail::counter_key(cfg_.seed_keys, key_tag, c);
            SecretMessage msg =
                detail::counter_message(cfg_.seed_messages, msg_tag, c, m_len_);
            const auto sp = spread(msg, key, side, side);
            for (std::size_t i = 0; i < plane; ++i) {
                batch.spread[item * plane + i] = static_cast<T>(sp.plane[i]);
                batch.mask[item * plane + i] = static_cast<T>(sp.occupancy[i]);
            }
            batch.keys.push_back(std::move(key));
            batch.messages.push_back(std::move(msg));
        }
        return batch;
    }

    Batch next_train_batch() {
        const std::size_t per_epoch =
            std::max<std::size_t>(1, train_covers_.size() / static_cast<std::size_t>(
                                                                cfg_.batch_size));
        const std::uint64_t epoch = data_cursor_ / per_epoch;
        const std::size_t slot = static_cast<std::size_t>(data_cursor_ % per_epoch);
        auto batches = make_batches(train_covers_.size(), cfg_.batch_size,
                                    derive_subseed(cfg_.seed_data, seedtag::kDataEpoch, epoch));
        if (batches.empty()) {
            throw ConfigError("cover set of " + std::to_string(train_covers_.size()) +
                              " images cannot fill a batch of " +
                              std::to_string(cfg_.batch_size));
        }
        const auto& indices = batches[slot % batches.size()];
        ++data_cursor_;
        Batch batch = make_batch(indices, sample_counter_, seedtag::kKey, seedtag::kMessage);
        sample_counter_ += indices.size();
        return batch;
    }

    nn::NodePtr<T> bob_loss_node(const BobOut<T>& bob_out, const nn::NodePtr<T>& x,
                                 const nn::NodePtr<T>& s, const Batch& batch) {
        const double denom =
            static_cast<double>(m_len_) * static_cast<double>(batch.keys.size());
        auto l_msg = nn::masked_sq_sum(s, bob_out.s_hat, batch.mask, denom, "bob/l_message");
        if (cfg_.architecture != 3) return l_msg;
        auto l_recons = nn::mse_between(bob_out.x_prime, x, "bob/l_recons");
        return nn::weighted_sum<T>({{0.5, l_recons}, {0.5, l_msg}}, 0.0, "bob/objective");
    }

    void check_finite(T loss, const char* what, const Batch* batch) {
        if (std::isfinite(static_cast<double>(loss))) return;
        if (!cfg_.out_dir.empty()) {
            std::filesystem::create_directories(cfg_.out_dir);
            const auto dir = std::filesystem::path(cfg_.out_dir);
            save_checkpoint(to_checkpoint(), dir / "abort.ckpt");
            if (batch != nullptr) {
                Checkpoint bad;
                bad.texts["format"] = "triadstego-abort-batch";
                bad.tensors["covers"] = batch->covers.template cast<double>();
                bad.tensors["spread"] = batch->spread.template cast<double>();
                bad.tensors["mask"] = batch->mask.template cast<double>();
                save_checkpoint(bad, dir / "abort_batch.ckpt");
            }
        }
        throw NumericError(std::string("non-finite ") + what + " at loop " +
                           std::to_string(loop_) +
                           (cfg_.out_dir.empty() ? "" : "; state dumped to " + cfg_.out_dir));
    }

    std::uint64_t end_loop() const {
        if (discretize_) {
            return discretize_loop_ + static_cast<std::uint64_t>(cfg_.fine_tune_iters);
        }
        return static_cast<std::uint64_t>(cfg_.max_iter);
    }

    void maybe_activate_discretization() {
        if (discretize_) return;
        if (cfg_.discretization_start >= 0) {
            if (loop_ >= static_cast<std::uint64_t>(cfg_.discretization_start)) {
                enable_discretization();
            }
            return;
        }
        // Automatic: both moving-average windows full and every loss's
        // window-over-window relative change under tolerance.
        const std::size_t w = static_cast<std::size_t>(cfg_.convergence_window);
        if (hist_bob_.size() < 2 * w) return;
        const auto flat = [&](const std::vector<double>& h) {
            double recent = 0.0, previous = 0.0;
            for (std::size_t i = h.size() - w; i < h.size(); ++i) recent += h[i];
            for (std::size_t i = h.size() - 2 * w; i < h.size() - w; ++i) previous += h[i];
            recent /= static_cast<double>(w);
            previous /= static_cast<double>(w);
            return std::abs(recent - previous) / std::max(std::abs(previous), 1e-9) <
                   cfg_.convergence_tol;
        };
        if (flat(hist_alice_) && flat(hist_bob_) && flat(hist_eve_)) enable_discretization();
    }

    void append_record() {
        const ValMetrics vm = validation_metrics();
        TrainRecord r;
        r.loop = loop_;
        r.l_alice = last_l_alice_;
        r.l_bob = last_l_bob_;
        r.l_eve = cfg_.it2 > 0 ? last_l_eve_ : last_l_adv_;
        r.ber = vm.ber;
        r.change_rate = vm.change_rate;
        r.phase = discretize_ ? "fine_tune" : "main";
        log_.records.push_back(r);
        hist_alice_.push_back(r.l_alice);
        hist_bob_.push_back(r.l_bob);
        hist_eve_.push_back(r.l_eve);
    }

    static void put_history(Checkpoint& cp, const std::string& key,
                            const std::vector<double>& h) {
        cp.ints[key + "/len"] = h.size();
        if (h.empty()) return;  // tensors cannot have zero-sized dimensions
        Tensor<double> t({static_cast<int>(h.size())});
        std::copy(h.begin(), h.end(), t.data());
        cp.tensors[key] = std::move(t);
    }

    static void get_history(const Checkpoint& cp, const std::string& key,
                            std::vector<double>& h) {
        const auto len = cp.ints.find(key + "/len");
        if (len == cp.ints.end()) throw IoError("checkpoint is missing \"" + key + "\"");
        h.clear();
        if (len->second == 0) return;
        const auto it = cp.tensors.find(key);
        if (it == cp.tensors.end()) throw IoError("checkpoint is missing \"" + key + "\"");
        h.assign(it->second.data(), it->second.data() + it->second.size());
    }

    TrainConfig cfg_;
    AliceNet<T> alice_;
    BobNet<T> bob_;
    EveNet<T> eve_;
    std::vector<GrayImage> train_covers_;
    std::vector<GrayImage> val_covers_;
    std::size_t m_len_ = 0;

    std::uint64_t loop_ = 0;
    std::uint64_t team1_steps_ = 0;
    std::uint64_t eve_steps_ = 0;
    std::uint64_t sample_counter_ = 0;
    std::uint64_t eve_sample_counter_ = 0;
    std::uint64_t data_cursor_ = 0;
    bool discretize_ = false;
    std::uint64_t discretize_loop_ = 0;

    double last_l_alice_ = 0.0;
    double last_l_bob_ = 0.0;
    double last_l_eve_ = 0.0;
    double last_l_adv_ = 0.0;

    std::vector<double> hist_alice_, hist_bob_, hist_eve_;

    Tensor<T> val_covers_t_, val_spread_t_;
    std::vector<ValItem> val_items_;

    TrainLog log_;
};

// --- steganalyzer pre-training ------------------------------------------------------

// Trains a fresh steganalyzer to separate covers from +/-1 baseline stegos,
// the stand-in for starting from a published steganalyzer. Stops when the
// held-out accuracy has not improved for `pretrain_patience` evaluations
// (and is past the minimum), aborts after three patience windows without
// improvement.
// Rebuild an embed/extract-capable session from a checkpoint file alone; the
// stored network shape, loss weights, and payload take the place of a config.
template <typename T = float>
TrainSession<T> session_from_checkpoint(const Checkpoint& cp) {
    const auto fmt = cp.texts.find("format");
    if (fmt == cp.texts.end() || fmt->second != "triadstego-session") {
        throw IoError("checkpoint is not a training session");
    }
    TrainConfig tc;
    tc.architecture = static_cast<int>(cp.ints.at("arch"));
    tc.net = detail::get_net_config(cp, static_cast<int>(cp.ints.at("image_size")));
    tc.payload_bpp = cp.reals.at("payload_bpp");
    tc.weights.lambda_a = cp.reals.at("weights/lambda_a");
    tc.weights.lambda_b = cp.reals.at("weights/lambda_b");
    tc.weights.lambda_e = cp.reals.at("weights/lambda_e");
    tc.weights.beta = cp.reals.at("weights/beta");
    TrainSession<T> session(std::move(tc), InferenceOnly{});
    session.restore(cp);
    return session;
}

template <typename T = float>
Checkpoint pretrain_eve(const TrainConfig& cfg, const std::vector<GrayImage>& covers,
                        TrainLog* log = nullptr) {
    cfg.validate();
    if (covers.size() < 4) throw ConfigError("steganalyzer pre-training needs at least 4 covers");
    for (const auto& img : covers) {
        if (img.width != cfg.net.image_size || img.height != cfg.net.image_size) {
            throw ConfigError("pre-training cover size mismatch");
        }
    }

    std::vector<std::string> ids(covers.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::to_string(i);
    const auto split = split_dataset(ids, 0.2, 0.0, cfg.seed_data);
    const auto to_index = [](const std::vector<std::string>& v) {
        std::vector<std::size_t> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::stoull(v[i]);
        return out;
    };
    const auto train_idx = to_index(split.train);
    const auto val_idx = to_index(split.val);
    if (train_idx.empty() || val_idx.empty()) {
        throw ConfigError("cover set too small to split for pre-training");
    }

    // Fixed cover/stego pairing, one baseline stego per cover.
    std::vector<GrayImage> stegos;
    stegos.reserve(covers.size());
    for (std::size_t i = 0; i < covers.size(); ++i) {
        const StegoKey key = detail::counter_key(cfg.seed_keys, seedtag::kPretrainKey, i);
        stegos.push_back(baseline_pm1_embed(covers[i], cfg.pretrain_change_rate, key));
    }

    SplitMix64 init(derive_subseed(cfg.seed_init, seedtag::kInitEve, 0));
    EveNet<T> eve(cfg.net, init);
    const int side = cfg.net.image_size;
    const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);

    const auto fill_pairs = [&](const std::vector<std::size_t>& idx, Tensor<T>& z,
                                std::vector<T>& labels) {
        const int b = static_cast<int>(idx.size());
        z = Tensor<T>({2 * b, 1, side, side});
        labels.assign(static_cast<std::size_t>(2 * b), T(0));
        for (int i = 0; i < b; ++i) {
            const auto cn = normalize<T>(covers[idx[static_cast<std::size_t>(i)]]);
            const auto sn = normalize<T>(stegos[idx[static_cast<std::size_t>(i)]]);
            std::copy(cn.begin(), cn.end(), z.data() + static_cast<std::size_t>(i) * plane);
            std::copy(sn.begin(), sn.end(),
                      z.data() + static_cast<std::size_t>(b + i) * plane);
            labels[static_cast<std::size_t>(b + i)] = T(1);
        }
    };

    Tensor<T> val_z;
    std::vector<T> val_labels;
    fill_pairs(val_idx, val_z, val_labels);

    const auto val_accuracy = [&] {
        auto bound = eve.bind(false);
        auto z = nn::make_constant<T>(val_z, "pretrain/val");
        auto scores = eve.forward(bound, z, false);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < val_labels.size(); ++i) {
            const bool said_stego = static_cast<double>(scores->value[i]) >= 0.5;
            if (said_stego == (val_labels[i] > T(0.5))) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(val_labels.size());
    };

    double best_acc = 0.0;
    int evals_since_best = 0;
    std::uint64_t cursor = 0;
    const std::size_t per_epoch =
        std::max<std::size_t>(1, train_idx.size() / static_cast<std::size_t>(cfg.batch_size));

    for (int iter = 0; iter < cfg.pretrain_iters; ++iter) {
        const std::uint64_t epoch = cursor / per_epoch;
        const std::size_t slot = static_cast<std::size_t>(cursor % per_epoch);
        auto batches = make_batches(train_idx.size(), cfg.batch_size,
                                    derive_subseed(cfg.seed_data, seedtag::kPretrainData, epoch));
        if (batches.empty()) throw ConfigError("pre-training split smaller than one batch");
        std::vector<std::size_t> idx;
        for (const auto bi : batches[slot % batches.size()]) idx.push_back(train_idx[bi]);
        ++cursor;

        Tensor<T> z;
        std::vector<T> labels;
        fill_pairs(idx, z, labels);
        auto bound = eve.bind(true);
        auto zn = nn::make_constant<T>(std::move(z), "pretrain/batch");
        auto scores = eve.forward(bound, zn, true);
        auto loss = nn::bce_loss(scores, labels, kScoreClamp, "pretrain/objective");
        if (!std::isfinite(static_cast<double>(loss->value[0]))) {
            throw NumericError("non-finite steganalyzer pre-training loss at iteration " +
                               std::to_string(iter));
        }
        nn::backward(loss);
        nn::AdamHyper h;
        h.lr = cfg.lr_eve;
        eve.params().apply(bound, h);

        if ((iter + 1) % cfg.pretrain_eval_every == 0) {
            const double acc = val_accuracy();
            if (log != nullptr) {
                TrainRecord r;
                r.loop = static_cast<std::uint64_t>(iter + 1);
                r.l_eve = static_cast<double>(loss->value[0]);
                r.ber = 1.0 - acc;  // held-out classification error
                r.phase = "pretrain";
                log->records.push_back(r);
            }
            if (acc > best_acc + 1e-6) {
                best_acc = acc;
                evals_since_best = 0;
            } else {
                ++evals_since_best;
            }
            if (evals_since_best >= cfg.pretrain_patience &&
                best_acc >= cfg.pretrain_min_accuracy) {
                break;  // plateaued at a usable accuracy
            }
            if (evals_since_best >= 3 * cfg.pretrain_patience) {
                throw TrainingError(
                    "steganalyzer pre-training stopped improving (best held-out accuracy " +
                    std::to_string(best_acc) + " after " + std::to_string(iter + 1) +
                    " iterations)");
            }
        }
    }

    Checkpoint cp;
    cp.texts["format"] = "triadstego-eve";
    cp.ints["image_size"] = static_cast<std::uint64_t>(cfg.net.image_size);
    cp.reals["holdout_accuracy"] = best_acc;
    checkpoint_store_params(cp, eve.params());
    return cp;
}

// --- config-file binding --------------------------------------------------------------

inline TrainConfig train_config_from_file(ConfigFile& cfg) {
    TrainConfig tc;
    tc.architecture = static_cast<int>(cfg.take_int("train", "architecture", tc.architecture));
    tc.weights.lambda_a = cfg.take_real("train", "lambda_a", tc.weights.lambda_a);
    tc.weights.lambda_b = cfg.take_real("train", "lambda_b", tc.weights.lambda_b);
    tc.weights.lambda_e = cfg.take_real("train", "lambda_e", tc.weights.lambda_e);
    tc.weights.beta = cfg.take_real("train", "beta", tc.weights.beta);
    tc.payload_bpp = cfg.take_real("train", "payload", tc.payload_bpp);
    tc.it1 = static_cast<int>(cfg.take_int("train", "it1", tc.it1));
    tc.it2 = static_cast<int>(cfg.take_int("train", "it2", tc.it2));
    tc.max_iter = static_cast<int>(cfg.take_int("train", "max_iter", tc.max_iter));
    tc.batch_size = static_cast<int>(cfg.take_int("train", "batch_size", tc.batch_size));
    tc.seed_data = cfg.take_u64("train", "seed_data", tc.seed_data);
    tc.seed_keys = cfg.take_u64("train", "seed_keys", tc.seed_keys);
    tc.seed_messages = cfg.take_u64("train", "seed_messages", tc.seed_messages);
    tc.seed_init = cfg.take_u64("train", "seed_init", tc.seed_init);
    const std::string disc = cfg.take_or("train", "discretization_start", "auto");
    if (disc == "auto") {
        tc.discretization_start = -1;
    } else {
        try {
            std::size_t pos = 0;
            tc.discretization_start = std::stoi(disc, &pos);
            if (pos != disc.size() || tc.discretization_start < 0) throw std::invalid_argument(disc);
        } catch (const std::exception&) {
            throw ConfigError("discretization_start must be \"auto\" or a non-negative integer");
        }
    }
    tc.fine_tune_iters =
        static_cast<int>(cfg.take_int("train", "fine_tune_iters", tc.fine_tune_iters));
    tc.lr_alice = cfg.take_real("train", "lr_alice", tc.lr_alice);
    tc.lr_bob = cfg.take_real("train", "lr_bob", tc.lr_bob);
    tc.lr_eve = cfg.take_real("train", "lr_eve", tc.lr_eve);
    tc.convergence_tol = cfg.take_real("train", "convergence_tol", tc.convergence_tol);
    tc.convergence_window =
        static_cast<int>(cfg.take_int("train", "convergence_window", tc.convergence_window));
    tc.val_batch = static_cast<int>(cfg.take_int("train", "val_batch", tc.val_batch));
    tc.log_every = static_cast<int>(cfg.take_int("train", "log_every", tc.log_every));

    tc.pretrain_iters = static_cast<int>(cfg.take_int("pretrain", "iters", tc.pretrain_iters));
    tc.pretrain_patience =
        static_cast<int>(cfg.take_int("pretrain", "patience", tc.pretrain_patience));
    tc.pretrain_eval_every =
        static_cast<int>(cfg.take_int("pretrain", "eval_every", tc.pretrain_eval_every));
    tc.pretrain_change_rate =
        cfg.take_real("pretrain", "change_rate", tc.pretrain_change_rate);
    tc.pretrain_min_accuracy =
        cfg.take_real("pretrain", "min_accuracy", tc.pretrain_min_accuracy);

    NetConfig& net = tc.net;
    net.image_size = static_cast<int>(cfg.take_int("net", "image_size", net.image_size));
    net.stack0_layers = static_cast<int>(cfg.take_int("net", "stack0_layers", net.stack0_layers));
    net.stack0_channels =
        static_cast<int>(cfg.take_int("net", "stack0_channels", net.stack0_channels));
    net.stack3_layers = static_cast<int>(cfg.take_int("net", "stack3_layers", net.stack3_layers));
    net.stack3_channels =
        static_cast<int>(cfg.take_int("net", "stack3_channels", net.stack3_channels));
    net.stack1_layers = static_cast<int>(cfg.take_int("net", "stack1_layers", net.stack1_layers));
    net.stack1_channels =
        static_cast<int>(cfg.take_int("net", "stack1_channels", net.stack1_channels));
    net.stack2_layers = static_cast<int>(cfg.take_int("net", "stack2_layers", net.stack2_layers));
    net.stack2_channels =
        static_cast<int>(cfg.take_int("net", "stack2_channels", net.stack2_channels));
    net.unet_depth = static_cast<int>(cfg.take_int("net", "unet_depth", net.unet_depth));
    net.unet_base = static_cast<int>(cfg.take_int("net", "unet_base", net.unet_base));
    for (int i = 0; i < 5; ++i) {
        net.eve_channels[static_cast<std::size_t>(i)] = static_cast<int>(
            cfg.take_int("net", "eve_channels" + std::to_string(i + 1),
                         net.eve_channels[static_cast<std::size_t>(i)]));
    }
    net.eve_fc1 = static_cast<int>(cfg.take_int("net", "eve_fc1", net.eve_fc1));
    net.eve_fc2 = static_cast<int>(cfg.take_int("net", "eve_fc2", net.eve_fc2));
    net.srm_trainable_alice =
        cfg.take_bool("net", "srm_trainable_alice", net.srm_trainable_alice);
    net.srm_trainable_bob = cfg.take_bool("net", "srm_trainable_bob", net.srm_trainable_bob);
    net.srm_trainable_eve = cfg.take_bool("net", "srm_trainable_eve", net.srm_trainable_eve);
    net.leaky_alpha = cfg.take_real("net", "leaky_alpha", net.leaky_alpha);
    net.bn_momentum = cfg.take_real("net", "bn_momentum", net.bn_momentum);
    net.bn_eps = cfg.take_real("net", "bn_eps", net.bn_eps);

    tc.validate();
    return tc;
}

}  // namespace triadstego
