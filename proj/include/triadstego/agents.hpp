#pragma once

#include <array>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/image.hpp"
#include "triadstego/layers.hpp"
#include "triadstego/srm.hpp"

namespace triadstego {

// Widths and depths of every sub-network. The stack shapes below are the
// full-size defaults; desk-scale runs shrink them through the config file.
struct NetConfig {
    int image_size = 32;

    int stack0_layers = 5;   // embedder (direct synthesis) hidden layers
    int stack0_channels = 32;
    int stack3_layers = 5;   // embedder (modification map) hidden layers
    int stack3_channels = 32;
    int stack1_layers = 4;   // extractor first stack
    int stack1_channels = 32;
    int stack2_layers = 3;   // extractor second stack
    int stack2_channels = 16;

    int unet_depth = 3;      // resolution levels (depth-1 poolings)
    int unet_base = 16;

    std::array<int, 5> eve_channels = {16, 16, 32, 32, 64};
    int eve_fc1 = 64;
    int eve_fc2 = 32;

    bool srm_trainable_alice = true;
    bool srm_trainable_bob = true;
    bool srm_trainable_eve = false;

    double leaky_alpha = 0.1;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    nn::BlockRuntime runtime(bool train_mode, bool update_running) const {
        nn::BlockRuntime rt;
        rt.train_mode = train_mode;
        rt.update_running = update_running;
        rt.bn_momentum = bn_momentum;
        rt.bn_eps = bn_eps;
        rt.leaky_alpha = leaky_alpha;
        return rt;
    }
};

// A set of layers with parallel optimizer slots; the unit of binding,
// updating, and checkpointing for one sub-network.
template <typename T>
struct ParamSet {
    std::vector<nn::LayerParams<T>> layers;
    std::vector<nn::LayerAdam<T>> adam;

    void add(nn::LayerParams<T> p) {
        layers.push_back(std::move(p));
        adam.emplace_back();
    }

    std::vector<nn::BoundLayer<T>> bind(bool learn) {
        std::vector<nn::BoundLayer<T>> bound;
        bound.reserve(layers.size());
        for (auto& l : layers) bound.push_back(nn::bind_layer(l, learn));
        return bound;
    }

    void apply(std::vector<nn::BoundLayer<T>>& bound, const nn::AdamHyper& h) {
        for (std::size_t i = 0; i < bound.size(); ++i) nn::apply_adam(bound[i], adam[i], h);
    }
};

namespace detail {

template <typename T>
void check_image_batch(const nn::NodePtr<T>& x, int image_size, const char* who) {
    if (x->value.ndim() != 4 || x->value.dim(1) != 1 ||
        x->value.dim(2) != image_size || x->value.dim(3) != image_size) {
        throw ConfigError(std::string(who) + " expects a (n,1," +
                          std::to_string(image_size) + "," + std::to_string(image_size) +
                          ") batch, got " + x->value.shape_str());
    }
}

}  // namespace detail

// --- embedder -----------------------------------------------------------------

template <typename T>
struct AliceOut {
    nn::NodePtr<T> y;        // stego batch, normalized domain
    nn::NodePtr<T> y_tilde;  // pre-discretization output (arch 1) or same as y
    nn::NodePtr<T> n_map;    // modification map (arch 2/3 only)
};

// Architecture 1 synthesizes the stego directly from SRM residuals of the
// cover concatenated with the spread message. Architectures 2/3 emit a
// tanh-bounded modification map instead; the stego is x plus the (possibly
// ternarized) map scaled to pixel units.
template <typename T>
class AliceNet {
public:
    AliceNet(int arch, const NetConfig& cfg, SplitMix64& rng) : arch_(arch), cfg_(cfg) {
        if (arch < 1 || arch > 3) throw ConfigError("architecture must be 1, 2, or 3");
        params_.add(make_srm_layer<T>("alice/srm", cfg.srm_trainable_alice));
        const bool v1 = arch == 1;
        const int hidden_layers = v1 ? cfg.stack0_layers : cfg.stack3_layers;
        const int channels = v1 ? cfg.stack0_channels : cfg.stack3_channels;
        nn::ConvStackSpec spec;
        for (int i = 0; i < hidden_layers; ++i) {
            spec.push_back({channels, 3, nn::Act::leaky_relu, true});
        }
        spec.push_back({1, 3, v1 ? nn::Act::none : nn::Act::tanh, false});
        const std::string prefix = v1 ? "alice/stack0" : "alice/stack3";
        for (auto& layer : nn::make_stack<T>(prefix, SrmBank::kCount + 1, spec, rng)) {
            params_.add(std::move(layer));
        }
        spec_ = std::move(spec);
    }

    int arch() const { return arch_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    std::vector<nn::BoundLayer<T>> bind(bool learn) { return params_.bind(learn); }

    // x: cover batch (n,1,h,w) normalized; s: spread message planes, same shape.
    AliceOut<T> forward(std::vector<nn::BoundLayer<T>>& bound, const nn::NodePtr<T>& x,
                        const nn::NodePtr<T>& s, bool train_mode, bool discretize) {
        detail::check_image_batch(x, cfg_.image_size, "embedder");
        if (!x->value.same_shape(s->value)) {
            throw ConfigError("cover and spread message shapes differ: " +
                              x->value.shape_str() + " vs " + s->value.shape_str());
        }
        const auto rt = cfg_.runtime(train_mode, train_mode);
        nn::NodePtr<T> h = nn::conv2d(x, bound[0].kernels, bound[0].bias, 1, 2, "alice/srm");
        h = nn::concat_channels(h, s, "alice/concat_rs");
        for (std::size_t i = 0; i < spec_.size(); ++i) {
            h = nn::conv_block(h, bound[i + 1], spec_[i].act, rt);
        }
        AliceOut<T> out;
        if (arch_ == 1) {
            out.y_tilde = h;
            out.y = discretize ? nn::ste_round_pixels(h, "alice/discretize") : h;
        } else {
            out.n_map = discretize ? nn::ste_ternary(h, "alice/ternary") : h;
            out.y_tilde = nn::clamp01(
                nn::add_scaled(x, static_cast<T>(1.0 / 255.0), out.n_map, "alice/apply_map"),
                "alice/clamp");
            out.y = out.y_tilde;
        }
        return out;
    }

private:
    int arch_;
    NetConfig cfg_;
    nn::ConvStackSpec spec_;
    ParamSet<T> params_;
};

// --- extractor ------------------------------------------------------------------

template <typename T>
struct BobOut {
    nn::NodePtr<T> s_hat;    // soft spread-message estimate (n,1,h,w)
    nn::NodePtr<T> x_prime;  // reconstructed cover (arch 3)
    nn::NodePtr<T> n_prime;  // y - x_prime (arch 3, structural)
};

template <typename T>
class BobNet {
public:
    BobNet(int arch, const NetConfig& cfg, SplitMix64& rng) : arch_(arch), cfg_(cfg) {
        if (arch < 1 || arch > 3) throw ConfigError("architecture must be 1, 2, or 3");
        if (arch_ == 3) {
            build_unet(rng);
            params_.add(make_srm_layer<T>("bob/srm", cfg.srm_trainable_bob));
            nn::ConvStackSpec spec;
            for (int i = 0; i < cfg_.stack1_layers; ++i) {
                spec.push_back({cfg_.stack1_channels, 3, nn::Act::leaky_relu, true});
            }
            spec.push_back({1, 3, nn::Act::sigmoid, false});
            for (auto& l : nn::make_stack<T>("bob/stack1", SrmBank::kCount + 1, spec, rng)) {
                params_.add(std::move(l));
            }
            head_spec_ = std::move(spec);
        } else {
            params_.add(make_srm_layer<T>("bob/srm", cfg.srm_trainable_bob));
            nn::ConvStackSpec spec;
            for (int i = 0; i < cfg_.stack1_layers; ++i) {
                spec.push_back({cfg_.stack1_channels, 3, nn::Act::leaky_relu, true});
            }
            for (int i = 0; i < cfg_.stack2_layers; ++i) {
                spec.push_back({cfg_.stack2_channels, 3, nn::Act::leaky_relu, true});
            }
            spec.push_back({1, 3, nn::Act::sigmoid, false});
            for (auto& l : nn::make_stack<T>("bob/stack12", SrmBank::kCount, spec, rng)) {
                params_.add(std::move(l));
            }
            head_spec_ = std::move(spec);
        }
    }

    int arch() const { return arch_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    std::vector<nn::BoundLayer<T>> bind(bool learn) { return params_.bind(learn); }

    BobOut<T> forward(std::vector<nn::BoundLayer<T>>& bound, const nn::NodePtr<T>& y,
                      bool train_mode) {
        detail::check_image_batch(y, cfg_.image_size, "extractor");
        const auto rt = cfg_.runtime(train_mode, train_mode);
        BobOut<T> out;
        if (arch_ != 3) {
            nn::NodePtr<T> h = nn::conv2d(y, bound[0].kernels, bound[0].bias, 1, 2, "bob/srm");
            for (std::size_t i = 0; i < head_spec_.size(); ++i) {
                h = nn::conv_block(h, bound[i + 1], head_spec_[i].act, rt);
            }
            out.s_hat = h;
            return out;
        }
        // Source separation: U-Net residual denoiser, then extraction from
        // the reconstructed-cover residuals and the recovered noise.
        const int div = 1 << cfg_.unet_depth;
        if (cfg_.image_size % div != 0) {
            throw ConfigError("image size " + std::to_string(cfg_.image_size) +
                              " not divisible by 2^depth = " + std::to_string(div));
        }
        std::size_t li = 0;
        std::vector<nn::NodePtr<T>> skips;
        nn::NodePtr<T> h = y;
        for (int level = 0; level < cfg_.unet_depth - 1; ++level) {
            h = nn::conv_block(h, bound[li], nn::Act::leaky_relu, rt);
            ++li;
            skips.push_back(h);
            h = nn::avg_pool(h, 2, "bob/unet/pool" + std::to_string(level));
        }
        h = nn::conv_block(h, bound[li], nn::Act::leaky_relu, rt);  // bottleneck
        ++li;
        for (int level = cfg_.unet_depth - 2; level >= 0; --level) {
            h = nn::upsample_nearest2(h, "bob/unet/up" + std::to_string(level));
            h = nn::concat_channels(h, skips[level], "bob/unet/skip" + std::to_string(level));
            h = nn::conv_block(h, bound[li], nn::Act::leaky_relu, rt);
            ++li;
        }
        nn::NodePtr<T> corr = nn::conv_block(h, bound[li], nn::Act::none, rt);
        ++li;
        out.x_prime = nn::add(y, corr, "bob/unet/x_prime");
        out.n_prime = nn::add_scaled(y, T(-1), out.x_prime, "bob/unet/n_prime");

        nn::NodePtr<T> r = nn::conv2d(out.x_prime, bound[li].kernels, bound[li].bias, 1, 2,
                                      "bob/srm");
        ++li;
        nn::NodePtr<T> feat = nn::concat_channels(
            r, nn::scale(out.n_prime, T(255), "bob/noise_rescale"), "bob/concat_rn");
        for (std::size_t i = 0; i < head_spec_.size(); ++i, ++li) {
            feat = nn::conv_block(feat, bound[li], head_spec_[i].act, rt);
        }
        out.s_hat = feat;
        return out;
    }

private:
    void build_unet(SplitMix64& rng) {
        int ic = 1;
        for (int level = 0; level < cfg_.unet_depth - 1; ++level) {
            const int oc = cfg_.unet_base << level;
            params_.add(nn::make_conv_layer<T>("bob/unet/enc" + std::to_string(level), oc, ic,
                                               3, true, rng));
            ic = oc;
        }
        const int boc = cfg_.unet_base << (cfg_.unet_depth - 1);
        params_.add(nn::make_conv_layer<T>("bob/unet/bottleneck", boc, ic, 3, true, rng));
        ic = boc;
        for (int level = cfg_.unet_depth - 2; level >= 0; --level) {
            const int skip_c = cfg_.unet_base << level;
            params_.add(nn::make_conv_layer<T>("bob/unet/dec" + std::to_string(level), skip_c,
                                               ic + skip_c, 3, true, rng));
            ic = skip_c;
        }
        params_.add(nn::make_conv_layer<T>("bob/unet/out", 1, ic, 3, false, rng));
    }

    int arch_;
    NetConfig cfg_;
    nn::ConvStackSpec head_spec_;
    ParamSet<T> params_;
};

// --- steganalyzer ----------------------------------------------------------------

// Preprocessing SRM bank (fixed by default), five conv blocks with average
// pooling, then a three-layer fully connected head ending in one sigmoid
// score per image: 0 = cover, 1 = stego.
template <typename T>
class EveNet {
public:
    explicit EveNet(const NetConfig& cfg, SplitMix64& rng) : cfg_(cfg) {
        if (cfg.image_size % 8 != 0) {
            throw ConfigError("steganalyzer needs image size divisible by 8, got " +
                              std::to_string(cfg.image_size));
        }
        params_.add(make_srm_layer<T>("eve/srm", cfg.srm_trainable_eve));
        int ic = SrmBank::kCount;
        for (int i = 0; i < 5; ++i) {
            params_.add(nn::make_conv_layer<T>("eve/block" + std::to_string(i + 1),
                                               cfg.eve_channels[i], ic, 3, true, rng));
            ic = cfg.eve_channels[i];
        }
        params_.add(nn::make_fc_layer<T>("eve/fc1", cfg.eve_fc1, ic, rng));
        params_.add(nn::make_fc_layer<T>("eve/fc2", cfg.eve_fc2, cfg.eve_fc1, rng));
        params_.add(nn::make_fc_layer<T>("eve/fc3", 1, cfg.eve_fc2, rng));
    }

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    std::vector<nn::BoundLayer<T>> bind(bool learn) { return params_.bind(learn); }

    // Returns per-image scores, shape (n, 1).
    nn::NodePtr<T> forward(std::vector<nn::BoundLayer<T>>& bound, const nn::NodePtr<T>& z,
                           bool train_mode) {
        detail::check_image_batch(z, cfg_.image_size, "steganalyzer");
        const auto rt = cfg_.runtime(train_mode, train_mode);
        nn::NodePtr<T> h = nn::conv2d(z, bound[0].kernels, bound[0].bias, 1, 2, "eve/srm");
        for (int i = 0; i < 5; ++i) {
            h = nn::conv_block(h, bound[i + 1], nn::Act::leaky_relu, rt);
            if (i >= 1 && i <= 3) h = nn::avg_pool(h, 2, "eve/pool" + std::to_string(i));
        }
        h = nn::global_avg_pool(h, "eve/gap");
        h = nn::fully_connected(h, bound[6].kernels, bound[6].bias, "eve/fc1");
        h = nn::leaky_relu(h, static_cast<T>(cfg_.leaky_alpha), "eve/fc1/act");
        h = nn::fully_connected(h, bound[7].kernels, bound[7].bias, "eve/fc2");
        h = nn::leaky_relu(h, static_cast<T>(cfg_.leaky_alpha), "eve/fc2/act");
        h = nn::fully_connected(h, bound[8].kernels, bound[8].bias, "eve/fc3");
        return nn::sigmoid_op(h, "eve/score");
    }

private:
    NetConfig cfg_;
    ParamSet<T> params_;
};

// --- integer-domain coupler -------------------------------------------------------

// g(n, x): pixel-domain point-wise sum with saturation.
inline GrayImage apply_mod_map(const GrayImage& x, const std::vector<int>& n) {
    if (n.size() != x.size()) {
        throw ConfigError("modification map size does not match image");
    }
    GrayImage y = x;
    for (std::size_t i = 0; i < n.size(); ++i) {
        if (n[i] < -1 || n[i] > 1) {
            throw ConfigError("modification map must be ternary, got " + std::to_string(n[i]));
        }
        const int v = static_cast<int>(x.pixels[i]) + n[i];
        y.pixels[i] = static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
    }
    return y;
}

}  // namespace triadstego
