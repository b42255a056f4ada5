// triadstego: batch front end for the three-player steganography toolkit.
//
// Subcommands: gen-data, pretrain-eve, train, embed, extract, steganalyze,
// eval, sweep-beta, sweep-payload, key-test, export-maps, dump-srm.
// Exit codes: 0 success, 1 usage/config error, 2 runtime error.
// Every run writes a manifest next to its outputs. TRIAD_STEGO_THREADS caps
// evaluation parallelism; --seed pins all randomness of a command.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "triadstego/baseline.hpp"
#include "triadstego/checkpoint.hpp"
#include "triadstego/config.hpp"
#include "triadstego/dataset.hpp"
#include "triadstego/eval.hpp"
#include "triadstego/hamming.hpp"
#include "triadstego/image.hpp"
#include "triadstego/srm.hpp"
#include "triadstego/textures.hpp"
#include "triadstego/trainer.hpp"

namespace ts = triadstego;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> g_argv;

std::string utc_now() {
    const std::time_t t =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& path, const std::string& command, json fields) {
    fields["command"] = command;
    fields["timestamp"] = utc_now();
    fields["argv"] = g_argv;
    std::ofstream out(path);
    if (!out) throw ts::IoError("cannot write manifest: " + path.string());
    out << fields.dump(2) << "\n";
    if (!out) throw ts::IoError("failed writing manifest: " + path.string());
}

// Missing config files are usage errors (exit 1), not runtime errors.
ts::ConfigFile load_config(const std::string& path) {
    if (path.empty()) return ts::ConfigFile{};
    if (!fs::exists(path)) throw ts::ConfigError("config file not found: " + path);
    return ts::ConfigFile::parse_file(path);
}

ts::StegExpConfig exp_config_from(ts::ConfigFile& cf) {
    ts::StegExpConfig o;
    o.train_iters = static_cast<int>(cf.take_int("exp", "train_iters", o.train_iters));
    o.batch_pairs = static_cast<int>(cf.take_int("exp", "batch_pairs", o.batch_pairs));
    o.lr = cf.take_real("exp", "lr", o.lr);
    o.test_frac = cf.take_real("exp", "test_frac", o.test_frac);
    return o;
}

struct FullConfig {
    ts::TrainConfig train;
    ts::StegExpConfig exp;
};

// Bind every recognized section, then fail fast on anything left over.
FullConfig bind_config(const std::string& path) {
    ts::ConfigFile cf = load_config(path);
    FullConfig f;
    f.train = ts::train_config_from_file(cf);
    f.exp = exp_config_from(cf);
    cf.ensure_consumed();
    return f;
}

// One user-facing seed fans out to the four independent training streams.
void apply_seed(ts::TrainConfig& tc, std::uint64_t seed) {
    tc.seed_data = ts::derive_subseed(seed, 0x01, 0);
    tc.seed_keys = ts::derive_subseed(seed, 0x02, 0);
    tc.seed_messages = ts::derive_subseed(seed, 0x03, 0);
    tc.seed_init = ts::derive_subseed(seed, 0x04, 0);
}

json seeds_json(const ts::TrainConfig& tc) {
    return json{{"data", tc.seed_data},
                {"keys", tc.seed_keys},
                {"messages", tc.seed_messages},
                {"init", tc.seed_init}};
}

std::optional<ts::HammingVariant> parse_ecc(const std::string& s) {
    if (s == "none") return std::nullopt;
    if (s == "h7") return ts::HammingVariant::H7_4;
    if (s == "h15") return ts::HammingVariant::H15_11;
    throw ts::ConfigError("--ecc must be none, h7, or h15");
}

// Whole-block payload accounting for file-based embed/extract.
struct PayloadPlan {
    std::optional<ts::HammingCode> code;
    std::size_t coded = 0;  // bits written into the image
    std::size_t data = 0;   // payload bits before coding
};

PayloadPlan plan_payload(std::size_t m_total, std::optional<ts::HammingVariant> ecc) {
    PayloadPlan p;
    if (ecc.has_value()) {
        p.code.emplace(*ecc);
        const auto blocks = m_total / static_cast<std::size_t>(p.code->n());
        if (blocks == 0) {
            throw ts::CapacityError("payload of " + std::to_string(m_total) +
                                    " bits is below one " + p.code->name() + " block");
        }
        p.coded = blocks * static_cast<std::size_t>(p.code->n());
        p.data = blocks * static_cast<std::size_t>(p.code->k());
    } else {
        p.coded = p.data = m_total;
    }
    if (p.data == 0) throw ts::CapacityError("message capacity is zero bits");
    return p;
}

ts::TrainSession<float> load_session(const std::string& checkpoint) {
    return ts::session_from_checkpoint<float>(ts::load_checkpoint(checkpoint));
}

// Cover identifiers for a command: a named section of the split manifest, or
// every .pgm in the directory when no manifest is given.
std::vector<std::string> select_ids(const std::string& dir, const std::string& splits,
                                    const std::string& section) {
    if (splits.empty()) return ts::list_dataset_dir(dir);
    const ts::DatasetSplit split = ts::load_split(splits);
    const std::vector<std::string>* ids = nullptr;
    if (section == "train") ids = &split.train;
    else if (section == "val") ids = &split.val;
    else ids = &split.test;
    if (ids->empty()) {
        throw ts::ConfigError("split manifest " + splits + " has an empty [" + section +
                              "] section");
    }
    return *ids;
}

void ensure_out_dir(const std::string& dir) {
    if (dir.empty()) throw ts::ConfigError("--out-dir must not be empty");
    fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ts::IoError("cannot open " + path.string() + " for writing");
    return out;
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

struct GenDataOpts {
    std::string out_dir;
    int count = 500;
    int size = 32;
    double val_frac = 0.1;
    double test_frac = 0.2;
    std::uint64_t seed = 1;
};

void cmd_gen_data(const GenDataOpts& o) {
    ensure_out_dir(o.out_dir);
    const auto images = ts::synth_textures(o.count, o.size, o.size, o.seed);
    std::vector<std::string> ids;
    ids.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::ostringstream name;
        name << "cover_" << std::setw(5) << std::setfill('0') << i << ".pgm";
        ts::write_pgm(images[i], fs::path(o.out_dir) / name.str());
        ids.push_back(name.str());
    }
    const auto split = ts::split_dataset(ids, o.val_frac, o.test_frac, o.seed);
    ts::save_split(split, fs::path(o.out_dir) / "splits.txt");
    write_manifest(fs::path(o.out_dir) / "manifest.json", "gen-data",
                   json{{"seed", o.seed},
                        {"count", o.count},
                        {"size", o.size},
                        {"val_frac", o.val_frac},
                        {"test_frac", o.test_frac},
                        {"outputs", o.out_dir}});
    std::cout << "wrote " << images.size() << " " << o.size << "x" << o.size
              << " covers and splits.txt to " << o.out_dir << " (train " << split.train.size()
              << ", val " << split.val.size() << ", test " << split.test.size() << ")\n";
}

struct TrainLikeOpts {
    std::string config;
    std::string cover_dir;
    std::string splits;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

void cmd_pretrain_eve(const TrainLikeOpts& o) {
    ensure_out_dir(o.out_dir);
    FullConfig fc = bind_config(o.config);
    if (o.has_seed) apply_seed(fc.train, o.seed);
    const auto ids = select_ids(o.cover_dir, o.splits, "train");
    const auto covers = ts::load_images(o.cover_dir, ids);
    ts::TrainLog log;
    const ts::Checkpoint cp = ts::pretrain_eve<float>(fc.train, covers, &log);
    ts::save_checkpoint(cp, fs::path(o.out_dir) / "eve.ckpt");
    log.write_csv(fs::path(o.out_dir) / "pretrain_log.csv");
    write_manifest(fs::path(o.out_dir) / "manifest.json", "pretrain-eve",
                   json{{"config", o.config},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"seeds", seeds_json(fc.train)},
                        {"covers", covers.size()},
                        {"outputs", o.out_dir}});
    std::cout << "pre-trained steganalyzer: held-out accuracy "
              << cp.reals.at("holdout_accuracy") << "; wrote eve.ckpt to " << o.out_dir << "\n";
}

struct TrainOpts : TrainLikeOpts {
    std::string resume;
    std::string eve_checkpoint;
    int arch = 0;
    double beta = -1.0;
    double payload = -1.0;
    int max_iter = -1;
};

void cmd_train(const TrainOpts& o) {
    ensure_out_dir(o.out_dir);
    FullConfig fc = bind_config(o.config);
    ts::TrainConfig tc = fc.train;
    if (o.has_seed) apply_seed(tc, o.seed);
    if (o.arch != 0) tc.architecture = o.arch;
    if (o.beta >= 0.0) tc.weights.beta = o.beta;
    if (o.payload >= 0.0) tc.payload_bpp = o.payload;
    if (o.max_iter >= 0) tc.max_iter = o.max_iter;
    tc.out_dir = o.out_dir;
    tc.validate();

    std::vector<std::string> train_ids, val_ids;
    if (o.splits.empty()) {
        const auto ids = ts::list_dataset_dir(o.cover_dir);
        const auto split = ts::split_dataset(ids, 0.1, 0.0, tc.seed_data);
        train_ids = split.train;
        val_ids = split.val;
    } else {
        train_ids = select_ids(o.cover_dir, o.splits, "train");
        val_ids = select_ids(o.cover_dir, o.splits, "val");
    }
    if (val_ids.empty()) throw ts::ConfigError("training needs a non-empty validation split");

    ts::TrainSession<float> session(tc, ts::load_images(o.cover_dir, train_ids),
                                    ts::load_images(o.cover_dir, val_ids));
    if (!o.eve_checkpoint.empty()) {
        session.load_eve_checkpoint(ts::load_checkpoint(o.eve_checkpoint));
    }
    if (!o.resume.empty()) {
        session.restore(ts::load_checkpoint(o.resume));
        std::cout << "resumed at loop " << session.loop() << "\n";
    }
    session.train();
    ts::save_checkpoint(session.to_checkpoint(), fs::path(o.out_dir) / "model.ckpt");
    session.log().write_csv(fs::path(o.out_dir) / "train_log.csv");
    write_manifest(fs::path(o.out_dir) / "manifest.json", "train",
                   json{{"config", o.config},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"seeds", seeds_json(tc)},
                        {"architecture", tc.architecture},
                        {"payload_bpp", tc.payload_bpp},
                        {"beta", tc.weights.beta},
                        {"resume", o.resume},
                        {"eve_checkpoint", o.eve_checkpoint},
                        {"outputs", o.out_dir}});
    std::cout << "trained " << session.loop() << " loops";
    if (!session.log().records.empty()) {
        const auto& r = session.log().records.back();
        std::cout << "; final ber " << r.ber << ", change rate " << r.change_rate << " ("
                  << r.phase << ")";
    }
    std::cout << "; wrote model.ckpt to " << o.out_dir << "\n";
}

struct EmbedOpts {
    std::string checkpoint, cover, message, key, out;
    std::string ecc = "none";
};

void cmd_embed(const EmbedOpts& o) {
    auto session = load_session(o.checkpoint);
    const auto plan = plan_payload(session.message_length(), parse_ecc(o.ecc));
    const ts::GrayImage cover = ts::read_pgm(o.cover);
    const ts::StegoKey key = ts::load_key(o.key);

    const ts::SecretMessage data = ts::load_message(o.message);
    if (data.length() != plan.data) {
        throw ts::ConfigError("message file must hold exactly " + std::to_string(plan.data) +
                              " data bits for this checkpoint and code, got " +
                              std::to_string(data.length()));
    }
    ts::SecretMessage msg;
    msg.bits = plan.code ? plan.code->encode(data.bits) : data.bits;

    const ts::GrayImage stego = session.embed(cover, msg, key);
    ts::write_pgm(stego, o.out);
    write_manifest(fs::path(o.out).string() + ".manifest.json", "embed",
                   json{{"checkpoint", o.checkpoint},
                        {"cover", o.cover},
                        {"message", o.message},
                        {"key", o.key},
                        {"ecc", o.ecc},
                        {"coded_bits", plan.coded},
                        {"data_bits", plan.data},
                        {"outputs", o.out}});
    std::cout << "embedded " << plan.data << " data bits (" << msg.bits.size()
              << " coded) into " << o.out << "\n";
}

struct ExtractOpts {
    std::string checkpoint, stego, key, out;
    std::string ecc = "none";
};

void cmd_extract(const ExtractOpts& o) {
    auto session = load_session(o.checkpoint);
    const auto plan = plan_payload(session.message_length(), parse_ecc(o.ecc));
    const ts::GrayImage stego = ts::read_pgm(o.stego);
    const ts::StegoKey key = ts::load_key(o.key);

    const auto coded = session.extract(stego, key, plan.coded);
    ts::SecretMessage data;
    data.bits = plan.code ? plan.code->decode(coded) : coded;
    ts::save_message(data, o.out);
    write_manifest(fs::path(o.out).string() + ".manifest.json", "extract",
                   json{{"checkpoint", o.checkpoint},
                        {"stego", o.stego},
                        {"key", o.key},
                        {"ecc", o.ecc},
                        {"coded_bits", plan.coded},
                        {"data_bits", plan.data},
                        {"outputs", o.out}});
    std::cout << "extracted " << plan.data << " data bits to " << o.out << "\n";
}

struct StegOpts {
    std::string checkpoint, cover_dir, splits, out_dir, config;
    std::uint64_t seed = 99;
};

void cmd_steganalyze(const StegOpts& o) {
    ensure_out_dir(o.out_dir);
    auto session = load_session(o.checkpoint);
    ts::ConfigFile cf = load_config(o.config);
    ts::StegExpConfig opt = exp_config_from(cf);
    if (!o.config.empty()) {
        (void)ts::train_config_from_file(cf);  // shared files may carry these sections
        cf.ensure_consumed();
    }
    opt.seed = o.seed;
    opt.dataset_id = o.cover_dir;
    const auto ids = select_ids(o.cover_dir, o.splits, "test");
    const auto covers = ts::load_images(o.cover_dir, ids);
    const std::size_t m_total = session.message_length();
    const auto report = ts::steganalysis_experiment<float>(
        [&](std::size_t i, const ts::GrayImage& cover) {
            const ts::StegoKey key =
                ts::detail::counter_key(o.seed, ts::seedtag::kEvalKey, i);
            const ts::SecretMessage msg =
                ts::detail::counter_message(o.seed, ts::seedtag::kEvalMessage, i, m_total);
            return session.embed(cover, msg, key, true);
        },
        covers, session.config().net, opt);

    auto csv = open_out(fs::path(o.out_dir) / "steganalysis.csv");
    csv << "false_alarm_rate,missed_detection_rate,pe,threshold,images,dataset,steganalyzer\n";
    csv << report.false_alarm_rate << "," << report.missed_detection_rate << "," << report.pe
        << "," << report.threshold << "," << covers.size() << "," << report.dataset_id << ","
        << report.steganalyzer_id << "\n";
    write_manifest(fs::path(o.out_dir) / "manifest.json", "steganalyze",
                   json{{"checkpoint", o.checkpoint},
                        {"config", o.config},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"seed", o.seed},
                        {"outputs", o.out_dir}});
    std::cout << "steganalysis on " << covers.size() << " covers: Pe " << report.pe << " (FA "
              << report.false_alarm_rate << ", MD " << report.missed_detection_rate << ")\n";
}

struct EvalOpts {
    std::string checkpoint, cover_dir, splits, out_dir;
    std::string ecc = "none";
    double payload = -1.0;
    std::uint64_t seed = 1;
};

void cmd_eval(const EvalOpts& o) {
    ensure_out_dir(o.out_dir);
    auto session = load_session(o.checkpoint);
    const double payload = o.payload >= 0.0 ? o.payload : session.config().payload_bpp;
    const auto ids = select_ids(o.cover_dir, o.splits, "test");
    const auto covers = ts::load_images(o.cover_dir, ids);
    const auto r = ts::evaluate_extraction(session, covers, payload, parse_ecc(o.ecc), o.seed);

    auto csv = open_out(fs::path(o.out_dir) / "eval.csv");
    csv << "payload_bpp,real_payload_bpp,ber_pre_ecc,ber_post_ecc,extraction_failed,"
           "embedded_bits,data_bits,images,applicable\n";
    csv << payload << "," << r.real_payload_bpp << "," << r.ber_pre_ecc << ","
        << r.ber_post_ecc << "," << (r.extraction_failed ? 1 : 0) << "," << r.embedded_bits
        << "," << r.data_bits << "," << r.images << "," << (r.applicable ? 1 : 0) << "\n";
    write_manifest(fs::path(o.out_dir) / "manifest.json", "eval",
                   json{{"checkpoint", o.checkpoint},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"payload_bpp", payload},
                        {"ecc", o.ecc},
                        {"seed", o.seed},
                        {"outputs", o.out_dir}});
    std::cout << "extraction at " << payload << " bpp over " << r.images << " images: BER "
              << r.ber_pre_ecc << " raw, " << r.ber_post_ecc << " after " << o.ecc
              << (r.extraction_failed ? " [FAILED: beyond code capability]" : "") << "\n";
}

struct SweepBetaOpts : TrainLikeOpts {
    std::vector<double> betas = {0.0, 0.1, 0.2, 0.4};
    int arch = 2;
};

void cmd_sweep_beta(const SweepBetaOpts& o) {
    ensure_out_dir(o.out_dir);
    FullConfig fc = bind_config(o.config);
    if (o.has_seed) apply_seed(fc.train, o.seed);
    fc.train.architecture = o.arch;

    std::vector<std::string> train_ids, val_ids;
    if (o.splits.empty()) {
        const auto ids = ts::list_dataset_dir(o.cover_dir);
        const auto split = ts::split_dataset(ids, 0.1, 0.0, fc.train.seed_data);
        train_ids = split.train;
        val_ids = split.val;
    } else {
        train_ids = select_ids(o.cover_dir, o.splits, "train");
        val_ids = select_ids(o.cover_dir, o.splits, "val");
    }
    const auto train_covers = ts::load_images(o.cover_dir, train_ids);
    const auto val_covers = ts::load_images(o.cover_dir, val_ids);

    auto csv = open_out(fs::path(o.out_dir) / "sweep_beta.csv");
    csv << "beta,ber,pe,change_rate,loops\n";
    for (std::size_t bi = 0; bi < o.betas.size(); ++bi) {
        ts::TrainConfig tc = fc.train;
        tc.weights.beta = o.betas[bi];
        tc.out_dir = o.out_dir;
        ts::TrainSession<float> session(tc, train_covers, val_covers);
        session.train();
        std::ostringstream tag;
        tag << "beta_" << o.betas[bi];
        ts::save_checkpoint(session.to_checkpoint(),
                            fs::path(o.out_dir) / ("model_" + tag.str() + ".ckpt"));
        session.log().write_csv(fs::path(o.out_dir) / ("train_log_" + tag.str() + ".csv"));

        const auto ext = ts::evaluate_extraction(session, val_covers, tc.payload_bpp,
                                                 std::nullopt, o.seed, true);
        ts::StegExpConfig opt = fc.exp;
        opt.seed = ts::derive_subseed(o.seed, 0x72, bi);
        opt.dataset_id = o.cover_dir;
        const std::size_t m_total = session.message_length();
        const auto rep = ts::steganalysis_experiment<float>(
            [&](std::size_t i, const ts::GrayImage& cover) {
                const ts::StegoKey key =
                    ts::detail::counter_key(opt.seed, ts::seedtag::kEvalKey, i);
                const ts::SecretMessage msg = ts::detail::counter_message(
                    opt.seed, ts::seedtag::kEvalMessage, i, m_total);
                return session.embed(cover, msg, key, true);
            },
            val_covers, tc.net, opt);
        const double change =
            session.log().records.empty() ? 0.0 : session.log().records.back().change_rate;
        csv << o.betas[bi] << "," << ext.ber_pre_ecc << "," << rep.pe << "," << change << ","
            << session.loop() << "\n";
        std::cout << "beta " << o.betas[bi] << ": ber " << ext.ber_pre_ecc << ", pe " << rep.pe
                  << ", change rate " << change << "\n";
    }
    write_manifest(fs::path(o.out_dir) / "manifest.json", "sweep-beta",
                   json{{"config", o.config},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"seeds", seeds_json(fc.train)},
                        {"betas", o.betas},
                        {"architecture", o.arch},
                        {"outputs", o.out_dir}});
}

struct SweepPayloadOpts {
    std::string checkpoint, cover_dir, splits, out_dir, config;
    std::vector<double> payloads = {0.14, 0.4, 1.0};
    std::string ecc = "h7";
    std::uint64_t seed = 1;
};

void cmd_sweep_payload(const SweepPayloadOpts& o) {
    ensure_out_dir(o.out_dir);
    auto session = load_session(o.checkpoint);
    ts::ConfigFile cf = load_config(o.config);
    ts::StegExpConfig opt = exp_config_from(cf);
    if (!o.config.empty()) {
        (void)ts::train_config_from_file(cf);
        cf.ensure_consumed();
    }
    const auto variant = parse_ecc(o.ecc);
    if (!variant.has_value()) {
        throw ts::ConfigError("sweep-payload needs a code for its failure rule; use h7 or h15");
    }
    const auto ids = select_ids(o.cover_dir, o.splits, "test");
    const auto covers = ts::load_images(o.cover_dir, ids);
    const auto rows = ts::payload_sweep(session, covers, o.payloads, *variant, opt, o.seed);

    auto csv = open_out(fs::path(o.out_dir) / "sweep_payload.csv");
    csv << "payload_bpp,real_payload_bpp,ber,pe,extraction_failed\n";
    for (const auto& row : rows) {
        csv << row.payload_bpp << "," << row.real_payload_bpp << "," << row.ber << "," << row.pe
            << "," << (row.extraction_failed ? 1 : 0) << "\n";
        std::cout << "payload " << row.payload_bpp << " (real " << row.real_payload_bpp
                  << "): ber " << row.ber << ", pe " << row.pe
                  << (row.extraction_failed ? " [FAILED]" : "") << "\n";
    }
    write_manifest(fs::path(o.out_dir) / "manifest.json", "sweep-payload",
                   json{{"checkpoint", o.checkpoint},
                        {"config", o.config},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"payloads", o.payloads},
                        {"ecc", o.ecc},
                        {"seed", o.seed},
                        {"outputs", o.out_dir}});
}

struct KeyTestOpts {
    std::string checkpoint, cover, out_dir;
    std::uint64_t seed = 1;
};

void cmd_key_test(const KeyTestOpts& o) {
    ensure_out_dir(o.out_dir);
    auto session = load_session(o.checkpoint);
    const ts::GrayImage cover = ts::read_pgm(o.cover);
    const std::size_t m_total = session.message_length();
    const auto key1 = ts::detail::counter_key(o.seed, ts::seedtag::kEvalKey, 0);
    const auto key2 = ts::detail::counter_key(o.seed, ts::seedtag::kEvalKey, 1);
    const auto msg = ts::detail::counter_message(o.seed, ts::seedtag::kEvalMessage, 0, m_total);

    const auto r = ts::key_sensitivity(session, cover, msg, key1, key2);
    const double right_ber = ts::ber(msg.bits, session.extract(r.stego1, key1, m_total));
    const double wrong_ber = ts::ber(msg.bits, session.extract(r.stego1, key2, m_total));

    ts::write_pgm(r.stego1, fs::path(o.out_dir) / "stego_key1.pgm");
    ts::write_pgm(r.stego2, fs::path(o.out_dir) / "stego_key2.pgm");
    ts::write_pgm(r.diff_map, fs::path(o.out_dir) / "diff_map.pgm");
    ts::save_key(key1, fs::path(o.out_dir) / "key1.bin");
    ts::save_key(key2, fs::path(o.out_dir) / "key2.bin");

    auto csv = open_out(fs::path(o.out_dir) / "key_test.csv");
    csv << "diff_fraction,change_rate1,change_rate2,right_key_ber,wrong_key_ber\n";
    csv << r.diff_fraction << "," << r.change_rate1 << "," << r.change_rate2 << "," << right_ber
        << "," << wrong_ber << "\n";
    write_manifest(fs::path(o.out_dir) / "manifest.json", "key-test",
                   json{{"checkpoint", o.checkpoint},
                        {"cover", o.cover},
                        {"seed", o.seed},
                        {"outputs", o.out_dir}});
    std::cout << "stego diff fraction " << r.diff_fraction << " (change rates "
              << r.change_rate1 << " / " << r.change_rate2 << "); right-key BER " << right_ber
              << ", wrong-key BER " << wrong_ber << "\n";
}

struct ExportMapsOpts {
    std::string checkpoint, cover_dir, splits, out_dir;
    int count = 8;
    std::uint64_t seed = 1;
};

void cmd_export_maps(const ExportMapsOpts& o) {
    ensure_out_dir(o.out_dir);
    auto session = load_session(o.checkpoint);
    auto ids = select_ids(o.cover_dir, o.splits, "test");
    if (static_cast<int>(ids.size()) > o.count) ids.resize(static_cast<std::size_t>(o.count));
    const auto covers = ts::load_images(o.cover_dir, ids);
    const std::size_t m_total = session.message_length();

    auto csv = open_out(fs::path(o.out_dir) / "maps.csv");
    csv << "cover,change_fraction\n";
    double mean = 0.0;
    for (std::size_t i = 0; i < covers.size(); ++i) {
        const auto key = ts::detail::counter_key(o.seed, ts::seedtag::kEvalKey, i);
        const auto msg =
            ts::detail::counter_message(o.seed, ts::seedtag::kEvalMessage, i, m_total);
        const ts::GrayImage stego = session.embed(covers[i], msg, key, true);
        ts::write_pgm(stego, fs::path(o.out_dir) / ("stego_" + ids[i]));
        const double frac =
            ts::export_mod_map(covers[i], stego, fs::path(o.out_dir) / ("map_" + ids[i]));
        csv << ids[i] << "," << frac << "\n";
        mean += frac;
    }
    mean /= covers.empty() ? 1.0 : static_cast<double>(covers.size());
    write_manifest(fs::path(o.out_dir) / "manifest.json", "export-maps",
                   json{{"checkpoint", o.checkpoint},
                        {"datasets", {o.cover_dir}},
                        {"splits", o.splits},
                        {"seed", o.seed},
                        {"count", covers.size()},
                        {"outputs", o.out_dir}});
    std::cout << "wrote " << covers.size() << " stego/map pairs to " << o.out_dir
              << "; mean change fraction " << mean << "\n";
}

struct DumpSrmOpts {
    std::string out_dir;
};

void cmd_dump_srm(const DumpSrmOpts& o) {
    ensure_out_dir(o.out_dir);
    const ts::SrmBank& bank = ts::srm_bank();
    auto out = open_out(fs::path(o.out_dir) / "srm_kernels.txt");
    for (int f = 0; f < ts::SrmBank::kCount; ++f) {
        out << bank.names[static_cast<std::size_t>(f)] << "\n";
        for (int r = 0; r < ts::SrmBank::kSize; ++r) {
            for (int c = 0; c < ts::SrmBank::kSize; ++c) {
                out << std::setw(12) << bank.kernels.at(f, 0, r, c)
                    << (c + 1 == ts::SrmBank::kSize ? "\n" : " ");
            }
        }
        out << "\n";
    }
    write_manifest(fs::path(o.out_dir) / "manifest.json", "dump-srm",
                   json{{"kernels", ts::SrmBank::kCount}, {"outputs", o.out_dir}});
    std::cout << "wrote " << ts::SrmBank::kCount << " kernels to " << o.out_dir
              << "/srm_kernels.txt\n";
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) g_argv.emplace_back(argv[i]);

    CLI::App app{"three-player adversarial steganography toolkit"};
    app.require_subcommand(1);
    const auto ecc_check = CLI::IsMember({"none", "h7", "h15"});

    GenDataOpts gen;
    auto* sc_gen = app.add_subcommand("gen-data", "synthesize a texture cover dataset");
    sc_gen->add_option("--out-dir", gen.out_dir, "output directory")->required();
    sc_gen->add_option("--count", gen.count, "number of covers");
    sc_gen->add_option("--size", gen.size, "square image side");
    sc_gen->add_option("--val-frac", gen.val_frac, "validation fraction");
    sc_gen->add_option("--test-frac", gen.test_frac, "test fraction");
    sc_gen->add_option("--seed", gen.seed, "build seed");
    sc_gen->callback([&] { cmd_gen_data(gen); });

    TrainLikeOpts pre;
    auto* sc_pre = app.add_subcommand("pretrain-eve", "pre-train the steganalyzer on a +/-1 baseline");
    sc_pre->add_option("--config", pre.config, "config file");
    sc_pre->add_option("--cover-dir", pre.cover_dir, "cover directory")->required();
    sc_pre->add_option("--splits", pre.splits, "split manifest (uses [train])");
    sc_pre->add_option("--out-dir", pre.out_dir, "output directory")->required();
    auto* pre_seed = sc_pre->add_option("--seed", pre.seed, "overrides all config seeds");
    sc_pre->callback([&, pre_seed] {
        pre.has_seed = pre_seed->count() > 0;
        cmd_pretrain_eve(pre);
    });

    TrainOpts tr;
    auto* sc_tr = app.add_subcommand("train", "run the alternating three-player training");
    sc_tr->add_option("--config", tr.config, "config file");
    sc_tr->add_option("--cover-dir", tr.cover_dir, "cover directory")->required();
    sc_tr->add_option("--splits", tr.splits, "split manifest (uses [train]/[val])");
    sc_tr->add_option("--out-dir", tr.out_dir, "output directory")->required();
    sc_tr->add_option("--resume", tr.resume, "session checkpoint to continue");
    sc_tr->add_option("--eve-checkpoint", tr.eve_checkpoint, "warm-start steganalyzer");
    sc_tr->add_option("--arch", tr.arch, "architecture")->check(CLI::IsMember({1, 2, 3}));
    sc_tr->add_option("--beta", tr.beta, "target change rate");
    sc_tr->add_option("--payload", tr.payload, "payload in bits per pixel");
    sc_tr->add_option("--max-iter", tr.max_iter, "outer loop budget");
    auto* tr_seed = sc_tr->add_option("--seed", tr.seed, "overrides all config seeds");
    sc_tr->callback([&, tr_seed] {
        tr.has_seed = tr_seed->count() > 0;
        cmd_train(tr);
    });

    EmbedOpts em;
    auto* sc_em = app.add_subcommand("embed", "hide a message file in a cover image");
    sc_em->add_option("--checkpoint", em.checkpoint, "trained session checkpoint")->required();
    sc_em->add_option("--cover", em.cover, "cover PGM")->required();
    sc_em->add_option("--message", em.message, "message file (exact capacity)")->required();
    sc_em->add_option("--key", em.key, "key file")->required();
    sc_em->add_option("--out", em.out, "stego PGM to write")->required();
    sc_em->add_option("--ecc", em.ecc, "error correcting code")->check(ecc_check);
    sc_em->callback([&] { cmd_embed(em); });

    ExtractOpts ex;
    auto* sc_ex = app.add_subcommand("extract", "recover a message file from a stego image");
    sc_ex->add_option("--checkpoint", ex.checkpoint, "trained session checkpoint")->required();
    sc_ex->add_option("--stego", ex.stego, "stego PGM")->required();
    sc_ex->add_option("--key", ex.key, "key file")->required();
    sc_ex->add_option("--out", ex.out, "message file to write")->required();
    sc_ex->add_option("--ecc", ex.ecc, "error correcting code")->check(ecc_check);
    sc_ex->callback([&] { cmd_extract(ex); });

    StegOpts st;
    auto* sc_st = app.add_subcommand("steganalyze", "train a fresh steganalyzer against a checkpoint");
    sc_st->add_option("--checkpoint", st.checkpoint, "trained session checkpoint")->required();
    sc_st->add_option("--cover-dir", st.cover_dir, "cover directory")->required();
    sc_st->add_option("--splits", st.splits, "split manifest (uses [test])");
    sc_st->add_option("--out-dir", st.out_dir, "output directory")->required();
    sc_st->add_option("--config", st.config, "config file ([exp] section)");
    sc_st->add_option("--seed", st.seed, "experiment seed");
    sc_st->callback([&] { cmd_steganalyze(st); });

    EvalOpts ev;
    auto* sc_ev = app.add_subcommand("eval", "measure extraction BER on a cover set");
    sc_ev->add_option("--checkpoint", ev.checkpoint, "trained session checkpoint")->required();
    sc_ev->add_option("--cover-dir", ev.cover_dir, "cover directory")->required();
    sc_ev->add_option("--splits", ev.splits, "split manifest (uses [test])");
    sc_ev->add_option("--out-dir", ev.out_dir, "output directory")->required();
    sc_ev->add_option("--payload", ev.payload, "payload override in bpp");
    sc_ev->add_option("--ecc", ev.ecc, "error correcting code")->check(ecc_check);
    sc_ev->add_option("--seed", ev.seed, "evaluation seed");
    sc_ev->callback([&] { cmd_eval(ev); });

    SweepBetaOpts sb;
    auto* sc_sb = app.add_subcommand("sweep-beta", "train and evaluate across change rates");
    sc_sb->add_option("--config", sb.config, "config file");
    sc_sb->add_option("--cover-dir", sb.cover_dir, "cover directory")->required();
    sc_sb->add_option("--splits", sb.splits, "split manifest (uses [train]/[val])");
    sc_sb->add_option("--out-dir", sb.out_dir, "output directory")->required();
    sc_sb->add_option("--betas", sb.betas, "change rates to sweep")->delimiter(',');
    sc_sb->add_option("--arch", sb.arch, "architecture")->check(CLI::IsMember({2, 3}));
    auto* sb_seed = sc_sb->add_option("--seed", sb.seed, "overrides all config seeds");
    sc_sb->callback([&, sb_seed] {
        sb.has_seed = sb_seed->count() > 0;
        cmd_sweep_beta(sb);
    });

    SweepPayloadOpts sp;
    auto* sc_sp = app.add_subcommand("sweep-payload", "evaluate a checkpoint across payloads");
    sc_sp->add_option("--checkpoint", sp.checkpoint, "trained session checkpoint")->required();
    sc_sp->add_option("--cover-dir", sp.cover_dir, "cover directory")->required();
    sc_sp->add_option("--splits", sp.splits, "split manifest (uses [test])");
    sc_sp->add_option("--out-dir", sp.out_dir, "output directory")->required();
    sc_sp->add_option("--payloads", sp.payloads, "payloads in bpp")->delimiter(',');
    sc_sp->add_option("--ecc", sp.ecc, "failure-rule code")->check(CLI::IsMember({"h7", "h15"}));
    sc_sp->add_option("--config", sp.config, "config file ([exp] section)");
    sc_sp->add_option("--seed", sp.seed, "sweep seed");
    sc_sp->callback([&] { cmd_sweep_payload(sp); });

    KeyTestOpts kt;
    auto* sc_kt = app.add_subcommand("key-test", "embed one message under two keys and compare");
    sc_kt->add_option("--checkpoint", kt.checkpoint, "trained session checkpoint")->required();
    sc_kt->add_option("--cover", kt.cover, "cover PGM")->required();
    sc_kt->add_option("--out-dir", kt.out_dir, "output directory")->required();
    sc_kt->add_option("--seed", kt.seed, "key/message seed");
    sc_kt->callback([&] { cmd_key_test(kt); });

    ExportMapsOpts xm;
    auto* sc_xm = app.add_subcommand("export-maps", "write stegos and modification maps");
    sc_xm->add_option("--checkpoint", xm.checkpoint, "trained session checkpoint")->required();
    sc_xm->add_option("--cover-dir", xm.cover_dir, "cover directory")->required();
    sc_xm->add_option("--splits", xm.splits, "split manifest (uses [test])");
    sc_xm->add_option("--out-dir", xm.out_dir, "output directory")->required();
    sc_xm->add_option("--count", xm.count, "number of covers to export");
    sc_xm->add_option("--seed", xm.seed, "key/message seed");
    sc_xm->callback([&] { cmd_export_maps(xm); });

    DumpSrmOpts ds;
    auto* sc_ds = app.add_subcommand("dump-srm", "write the residual kernel bank as text");
    sc_ds->add_option("--out-dir", ds.out_dir, "output directory")->required();
    sc_ds->callback([&] { cmd_dump_srm(ds); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the usage error
        return 1;
    } catch (const ts::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
