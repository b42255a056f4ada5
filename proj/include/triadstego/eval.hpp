#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/hamming.hpp"
#include "triadstego/image.hpp"
#include "triadstego/threads.hpp"
#include "triadstego/trainer.hpp"

namespace triadstego {

namespace seedtag {
inline constexpr std::uint64_t kEvalKey = 0x61;
inline constexpr std::uint64_t kEvalMessage = 0x62;
inline constexpr std::uint64_t kExpData = 0x63;
inline constexpr std::uint64_t kExpInit = 0x64;
}  // namespace seedtag

struct SteganalysisReport {
    double false_alarm_rate = 0.0;      // covers called stego
    double missed_detection_rate = 0.0; // stegos called cover
    double pe = 0.0;                    // (FA + MD) / 2
    std::string dataset_id;
    std::string steganalyzer_id;
    double threshold = 0.5;
};

// Pe from per-image scores. Scores at or above the threshold are called
// stego, so a degenerate all-0.5 scorer yields FA=1, MD=0, Pe=0.5.
inline SteganalysisReport compute_pe(const std::vector<int>& labels,
                                     const std::vector<double>& scores,
                                     double threshold = 0.5) {
    if (labels.size() != scores.size()) {
        throw ConfigError("label count " + std::to_string(labels.size()) +
                          " does not match score count " + std::to_string(scores.size()));
    }
    std::size_t covers = 0, stegos = 0, fa = 0, md = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 0) {
            ++covers;
            if (scores[i] >= threshold) ++fa;
        } else if (labels[i] == 1) {
            ++stegos;
            if (scores[i] < threshold) ++md;
        } else {
            throw ConfigError("labels must be 0 (cover) or 1 (stego)");
        }
    }
    if (covers == 0 || stegos == 0) {
        throw ConfigError("Pe needs both classes present, got " + std::to_string(covers) +
                          " covers and " + std::to_string(stegos) + " stegos");
    }
    SteganalysisReport r;
    r.threshold = threshold;
    r.false_alarm_rate = static_cast<double>(fa) / static_cast<double>(covers);
    r.missed_detection_rate = static_cast<double>(md) / static_cast<double>(stegos);
    r.pe = 0.5 * (r.false_alarm_rate + r.missed_detection_rate);
    return r;
}

// --- extraction fidelity -----------------------------------------------------------

struct ExtractionReport {
    bool applicable = false;         // false when the payload rounds to zero bits
    double ber_pre_ecc = 0.0;        // raw BER on the embedded (coded) bits
    double ber_post_ecc = 0.0;       // BER on the data bits after decoding
    bool ecc_used = false;
    bool extraction_failed = false;  // pre-ECC BER above the code's correction capability
    double real_payload_bpp = 0.0;
    std::size_t images = 0;
    std::size_t embedded_bits = 0;   // per image
    std::size_t data_bits = 0;       // per image
};

// Embed a fresh (message, key) pair per cover, extract, and average the bit
// error rates. With an ECC the data bits are encoded before embedding and
// decoded after extraction; the embedded bit count is the largest whole
// number of code blocks that fits the payload.
template <typename T>
ExtractionReport evaluate_extraction(TrainSession<T>& session,
                                     const std::vector<GrayImage>& covers, double payload_bpp,
                                     std::optional<HammingVariant> ecc, std::uint64_t seed,
                                     std::optional<bool> discretize = std::nullopt) {
    if (payload_bpp < 0.0 || payload_bpp > 1.0) {
        throw CapacityError("payload must lie in [0,1] bits per pixel, got " +
                            std::to_string(payload_bpp));
    }
    if (covers.empty()) throw ConfigError("extraction evaluation needs at least one cover");
    const int side = session.config().net.image_size;
    const auto cells = static_cast<double>(side) * static_cast<double>(side);
    const auto m_total = static_cast<std::size_t>(std::llround(payload_bpp * cells));

    ExtractionReport report;
    report.images = covers.size();
    if (m_total == 0) return report;  // payload 0: BER undefined, not applicable
    report.applicable = true;

    std::size_t data_bits = m_total, coded_bits = m_total;
    std::optional<HammingCode> code;
    if (ecc.has_value()) {
        code.emplace(*ecc);
        const std::size_t blocks = m_total / static_cast<std::size_t>(code->n());
        if (blocks == 0) {
            throw CapacityError("payload " + std::to_string(payload_bpp) +
                                " is below one " + code->name() + " block");
        }
        data_bits = blocks * static_cast<std::size_t>(code->k());
        coded_bits = blocks * static_cast<std::size_t>(code->n());
        report.ecc_used = true;
        report.real_payload_bpp = real_payload(payload_bpp, *code);
    } else {
        report.real_payload_bpp = payload_bpp;
    }
    report.embedded_bits = coded_bits;
    report.data_bits = data_bits;

    std::vector<double> pre(covers.size()), post(covers.size());
    parallel_for(covers.size(), eval_threads(), [&](std::size_t i) {
        const StegoKey key = detail::counter_key(seed, seedtag::kEvalKey, i);
        const SecretMessage data =
            detail::counter_message(seed, seedtag::kEvalMessage, i, data_bits);
        SecretMessage to_embed;
        to_embed.bits = code ? code->encode(data.bits) : data.bits;
        const GrayImage stego = session.embed(covers[i], to_embed, key, discretize);
        const auto got = session.extract(stego, key, to_embed.bits.size());
        pre[i] = ber(to_embed.bits, got);
        post[i] = code ? ber(data.bits, code->decode(got)) : pre[i];
    });
    for (std::size_t i = 0; i < covers.size(); ++i) {
        report.ber_pre_ecc += pre[i];
        report.ber_post_ecc += post[i];
    }
    report.ber_pre_ecc /= static_cast<double>(covers.size());
    report.ber_post_ecc /= static_cast<double>(covers.size());
    const double capability = code ? code->correction_capability() : HammingCode::h7_4().correction_capability();
    report.extraction_failed = report.ber_pre_ecc > capability;
    return report;
}

// --- steganalysis with a fresh analyzer ----------------------------------------------

struct StegExpConfig {
    int train_iters = 600;
    int batch_pairs = 4;     // covers per batch; the batch holds 2x this with stegos
    double lr = 1e-4;
    double test_frac = 0.25;
    std::uint64_t seed = 99;
    std::string dataset_id = "covers";
    std::string steganalyzer_id = "fresh-eve";
};

namespace detail {

inline void ensure_disjoint(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                            const char* what) {
    std::vector<std::size_t> sa(a), sb(b);
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<std::size_t> both;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
    if (!both.empty()) {
        throw ConfigError(std::string(what) + " overlap on " + std::to_string(both.size()) +
                          " item(s), e.g. index " + std::to_string(both.front()));
    }
}

// Inference scores for a set of images, chunked to bound peak memory.
template <typename T>
void score_images(EveNet<T>& eve, const std::vector<const GrayImage*>& images, int side,
                  std::vector<double>& out) {
    out.resize(images.size());
    const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
    const std::size_t chunk = 32;
    auto bound = eve.bind(false);
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t n = std::min(chunk, images.size() - start);
        Tensor<T> z({static_cast<int>(n), 1, side, side});
        for (std::size_t i = 0; i < n; ++i) {
            const auto norm = normalize<T>(*images[start + i]);
            std::copy(norm.begin(), norm.end(), z.data() + i * plane);
        }
        auto zn = nn::make_constant<T>(std::move(z), "score/batch");
        auto scores = eve.forward(bound, zn, false);
        for (std::size_t i = 0; i < n; ++i) {
            out[start + i] = static_cast<double>(scores->value[i]);
        }
    }
}

}  // namespace detail

// Laboratory steganalysis: a fresh analyzer is trained on cover/stego pairs
// from the train indices and judged on the test indices. Emit is called once
// per cover (possibly concurrently) and must return the stego for it; the
// null experiment passes an emitter that returns the cover unchanged.
template <typename T = float, typename Emit>
SteganalysisReport steganalysis_experiment(Emit&& emit, const std::vector<GrayImage>& covers,
                                           const NetConfig& net_cfg, const StegExpConfig& opt,
                                           const std::vector<std::size_t>& train_idx,
                                           const std::vector<std::size_t>& test_idx) {
    if (train_idx.empty() || test_idx.empty()) {
        throw ConfigError("steganalysis experiment needs non-empty train and test splits");
    }
    detail::ensure_disjoint(train_idx, test_idx, "steganalysis train/test splits");
    for (const auto i : train_idx) {
        if (i >= covers.size()) throw ConfigError("train index out of range");
    }
    for (const auto i : test_idx) {
        if (i >= covers.size()) throw ConfigError("test index out of range");
    }

    std::vector<GrayImage> stegos(covers.size());
    std::vector<std::size_t> used(train_idx);
    used.insert(used.end(), test_idx.begin(), test_idx.end());
    parallel_for(used.size(), eval_threads(), [&](std::size_t u) {
        const std::size_t i = used[u];
        stegos[i] = emit(i, covers[i]);
    });

    SplitMix64 init(derive_subseed(opt.seed, seedtag::kExpInit, 0));
    EveNet<T> eve(net_cfg, init);
    const int side = net_cfg.image_size;
    const std::size_t plane = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);

    const std::size_t per_epoch =
        std::max<std::size_t>(1, train_idx.size() / static_cast<std::size_t>(opt.batch_pairs));
    std::uint64_t cursor = 0;
    for (int iter = 0; iter < opt.train_iters; ++iter) {
        const std::uint64_t epoch = cursor / per_epoch;
        const std::size_t slot = static_cast<std::size_t>(cursor % per_epoch);
        auto batches = make_batches(train_idx.size(), opt.batch_pairs,
                                    derive_subseed(opt.seed, seedtag::kExpData, epoch));
        if (batches.empty()) throw ConfigError("steganalysis train split smaller than one batch");
        const auto& slots = batches[slot % batches.size()];
        ++cursor;

        const int b = static_cast<int>(slots.size());
        Tensor<T> z({2 * b, 1, side, side});
        std::vector<T> labels(static_cast<std::size_t>(2 * b), T(0));
        for (int i = 0; i < b; ++i) {
            const std::size_t ci = train_idx[slots[static_cast<std::size_t>(i)]];
            const auto cn = normalize<T>(covers[ci]);
            const auto sn = normalize<T>(stegos[ci]);
            std::copy(cn.begin(), cn.end(), z.data() + static_cast<std::size_t>(i) * plane);
            std::copy(sn.begin(), sn.end(),
                      z.data() + static_cast<std::size_t>(b + i) * plane);
            labels[static_cast<std::size_t>(b + i)] = T(1);
        }
        auto bound = eve.bind(true);
        auto zn = nn::make_constant<T>(std::move(z), "exp/batch");
        auto scores = eve.forward(bound, zn, true);
        auto loss = nn::bce_loss(scores, labels, kScoreClamp, "exp/objective");
        if (!std::isfinite(static_cast<double>(loss->value[0]))) {
            throw NumericError("non-finite steganalysis training loss at iteration " +
                               std::to_string(iter));
        }
        nn::backward(loss);
        nn::AdamHyper h;
        h.lr = opt.lr;
        eve.params().apply(bound, h);
    }

    std::vector<const GrayImage*> test_images;
    std::vector<int> labels;
    for (const auto i : test_idx) {
        test_images.push_back(&covers[i]);
        labels.push_back(0);
    }
    for (const auto i : test_idx) {
        test_images.push_back(&stegos[i]);
        labels.push_back(1);
    }
    std::vector<double> scores;
    detail::score_images(eve, test_images, side, scores);
    SteganalysisReport report = compute_pe(labels, scores);
    report.dataset_id = opt.dataset_id;
    report.steganalyzer_id = opt.steganalyzer_id;
    return report;
}

// Convenience split: seeded shuffle of all covers into train/test.
template <typename T = float, typename Emit>
SteganalysisReport steganalysis_experiment(Emit&& emit, const std::vector<GrayImage>& covers,
                                           const NetConfig& net_cfg, const StegExpConfig& opt) {
    std::vector<std::string> ids(covers.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = std::to_string(i);
    const auto split = split_dataset(ids, 0.0, opt.test_frac, opt.seed);
    const auto to_index = [](const std::vector<std::string>& v) {
        std::vector<std::size_t> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::stoull(v[i]);
        return out;
    };
    return steganalysis_experiment<T>(std::forward<Emit>(emit), covers, net_cfg, opt,
                                      to_index(split.train), to_index(split.test));
}

// --- artifacts ----------------------------------------------------------------------

// Fig.-8-style modification map: black where the stego equals the cover,
// white where any change happened. Returns the white fraction.
inline double export_mod_map(const GrayImage& cover, const GrayImage& stego,
                             const std::filesystem::path& path) {
    if (cover.width != stego.width || cover.height != stego.height) {
        throw ConfigError("cover and stego dimensions differ");
    }
    GrayImage map(cover.width, cover.height);
    std::size_t white = 0;
    for (std::size_t i = 0; i < cover.size(); ++i) {
        if (cover.pixels[i] != stego.pixels[i]) {
            map.pixels[i] = 255;
            ++white;
        }
    }
    write_pgm(map, path);
    return static_cast<double>(white) / static_cast<double>(cover.size());
}

struct KeySensitivityReport {
    double diff_fraction = 0.0;  // pixels differing between the two stegos
    double change_rate1 = 0.0;   // pixels changed by stego 1 vs the cover
    double change_rate2 = 0.0;
    bool keys_identical = false;
    GrayImage stego1, stego2, diff_map;
};

// Same cover and message embedded under two keys; a keyed embedder must
// place its changes at unrelated positions.
template <typename T>
KeySensitivityReport key_sensitivity(TrainSession<T>& session, const GrayImage& cover,
                                     const SecretMessage& msg, const StegoKey& key1,
                                     const StegoKey& key2) {
    KeySensitivityReport r;
    r.keys_identical = key1.bits == key2.bits;
    if (r.keys_identical) {
        std::cerr << "warning: key sensitivity run with identical keys\n";
    }
    r.stego1 = session.embed(cover, msg, key1, true);
    r.stego2 = session.embed(cover, msg, key2, true);
    r.diff_map = GrayImage(cover.width, cover.height);
    std::size_t diff = 0, c1 = 0, c2 = 0;
    for (std::size_t i = 0; i < cover.size(); ++i) {
        if (r.stego1.pixels[i] != r.stego2.pixels[i]) {
            r.diff_map.pixels[i] = 255;
            ++diff;
        }
        if (r.stego1.pixels[i] != cover.pixels[i]) ++c1;
        if (r.stego2.pixels[i] != cover.pixels[i]) ++c2;
    }
    r.diff_fraction = static_cast<double>(diff) / static_cast<double>(cover.size());
    r.change_rate1 = static_cast<double>(c1) / static_cast<double>(cover.size());
    r.change_rate2 = static_cast<double>(c2) / static_cast<double>(cover.size());
    return r;
}

// --- payload sweep ---------------------------------------------------------------------

struct SweepRow {
    double payload_bpp = 0.0;
    double real_payload_bpp = 0.0;
    double ber = 0.0;   // raw (pre-ECC) extraction BER
    double pe = 0.0;
    bool extraction_failed = false;
};

// Evaluate a trained checkpoint at payloads other than its training payload.
// The failure flag marks rows whose raw BER exceeds what the chosen code can
// correct.
template <typename T>
std::vector<SweepRow> payload_sweep(TrainSession<T>& session,
                                    const std::vector<GrayImage>& covers,
                                    const std::vector<double>& payloads, HammingVariant ecc,
                                    const StegExpConfig& exp_cfg, std::uint64_t seed) {
    const HammingCode code(ecc);
    std::vector<SweepRow> rows;
    for (std::size_t p = 0; p < payloads.size(); ++p) {
        const double payload = payloads[p];
        SweepRow row;
        row.payload_bpp = payload;
        const auto ext = evaluate_extraction(session, covers, payload, ecc,
                                             derive_subseed(seed, 0x71, p));
        row.real_payload_bpp = ext.real_payload_bpp;
        row.ber = ext.ber_pre_ecc;
        row.extraction_failed = ext.ber_pre_ecc > code.correction_capability();

        const std::size_t bits = ext.embedded_bits;
        StegExpConfig opt = exp_cfg;
        opt.seed = derive_subseed(seed, 0x72, p);
        row.pe = steganalysis_experiment<T>(
                     [&](std::size_t i, const GrayImage& cover) {
                         const StegoKey key =
                             detail::counter_key(opt.seed, seedtag::kEvalKey, i);
                         const SecretMessage msg = detail::counter_message(
                             opt.seed, seedtag::kEvalMessage, i, bits);
                         return session.embed(cover, msg, key, true);
                     },
                     covers, session.config().net, opt)
                     .pe;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace triadstego
