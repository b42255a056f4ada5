#pragma once

#include <string>
#include <vector>

#include "triadstego/adam.hpp"
#include "triadstego/graph.hpp"
#include "triadstego/ops.hpp"
#include "triadstego/rng.hpp"
#include "triadstego/tensor.hpp"

namespace triadstego::nn {

enum class Act { none, relu, leaky_relu, tanh, sigmoid };

inline const char* act_name(Act a) {
    switch (a) {
        case Act::none: return "none";
        case Act::relu: return "relu";
        case Act::leaky_relu: return "leaky_relu";
        case Act::tanh: return "tanh";
        case Act::sigmoid: return "sigmoid";
    }
    return "?";
}

inline Act act_from_name(const std::string& s) {
    if (s == "none") return Act::none;
    if (s == "relu") return Act::relu;
    if (s == "leaky_relu") return Act::leaky_relu;
    if (s == "tanh") return Act::tanh;
    if (s == "sigmoid") return Act::sigmoid;
    throw ConfigError("unknown activation \"" + s + "\"");
}

// Parameters of one conv (or degenerate fully-connected) layer plus its
// optional batch norm. When trainable is false the tensors are never touched
// by an optimizer step.
template <typename T>
struct LayerParams {
    std::string name;
    Tensor<T> kernels;  // (oc, ic, kh, kw); fully-connected layers use (out, in, 1, 1)
    Tensor<T> bias;     // (oc)
    bool has_bn = false;
    Tensor<T> bn_gamma, bn_beta, bn_running_mean, bn_running_var;
    bool trainable = true;
};

template <typename T>
struct LayerAdam {
    AdamState<T> kernels, bias, bn_gamma, bn_beta;
};

// Graph leaves for one layer within the step being built. Leaves copy the
// parameter values; after backward, apply_adam() folds the leaf gradients
// back into the owning LayerParams.
template <typename T>
struct BoundLayer {
    LayerParams<T>* params = nullptr;
    NodePtr<T> kernels, bias, gamma, beta;
};

template <typename T>
BoundLayer<T> bind_layer(LayerParams<T>& p, bool learn) {
    const bool req = learn && p.trainable;
    BoundLayer<T> bound;
    bound.params = &p;
    bound.kernels = make_leaf<T>(p.kernels, req, p.name + "/kernels");
    bound.bias = make_leaf<T>(p.bias, req, p.name + "/bias");
    if (p.has_bn) {
        bound.gamma = make_leaf<T>(p.bn_gamma, req, p.name + "/bn_gamma");
        bound.beta = make_leaf<T>(p.bn_beta, req, p.name + "/bn_beta");
    }
    return bound;
}

template <typename T>
void apply_adam(BoundLayer<T>& bound, LayerAdam<T>& adam, const AdamHyper& h) {
    LayerParams<T>& p = *bound.params;
    if (bound.kernels->grad_ready) adam_step(p.kernels, bound.kernels->grad, adam.kernels, h);
    if (bound.bias->grad_ready) adam_step(p.bias, bound.bias->grad, adam.bias, h);
    if (p.has_bn) {
        if (bound.gamma->grad_ready) adam_step(p.bn_gamma, bound.gamma->grad, adam.bn_gamma, h);
        if (bound.beta->grad_ready) adam_step(p.bn_beta, bound.beta->grad, adam.bn_beta, h);
    }
}

// He-style Gaussian fan-in initialization; BN starts as the identity map.
template <typename T>
LayerParams<T> make_conv_layer(std::string name, int out_ch, int in_ch, int ksize, bool bn,
                               SplitMix64& rng) {
    LayerParams<T> p;
    p.name = std::move(name);
    p.kernels = Tensor<T>({out_ch, in_ch, ksize, ksize});
    const T stddev = static_cast<T>(std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize)));
    p.kernels.fill_gaussian(rng, stddev);
    p.bias = Tensor<T>({out_ch});
    p.has_bn = bn;
    if (bn) {
        p.bn_gamma = Tensor<T>({out_ch}, T(1));
        p.bn_beta = Tensor<T>({out_ch});
        p.bn_running_mean = Tensor<T>({out_ch});
        p.bn_running_var = Tensor<T>({out_ch}, T(1));
    }
    return p;
}

template <typename T>
LayerParams<T> make_fc_layer(std::string name, int out_dim, int in_dim, SplitMix64& rng) {
    LayerParams<T> p;
    p.name = std::move(name);
    p.kernels = Tensor<T>({out_dim, in_dim, 1, 1});
    const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(in_dim)));
    p.kernels.fill_gaussian(rng, stddev);
    p.bias = Tensor<T>({out_dim});
    return p;
}

struct BlockRuntime {
    bool train_mode = false;      // batch norm statistics source
    bool update_running = false;  // fold batch stats into running stats
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
    double leaky_alpha = 0.1;
};

template <typename T>
NodePtr<T> apply_act(const NodePtr<T>& x, Act act, const BlockRuntime& rt,
                     const std::string& name) {
    switch (act) {
        case Act::none: return x;
        case Act::relu: return relu(x, name + "/relu");
        case Act::leaky_relu: return leaky_relu(x, static_cast<T>(rt.leaky_alpha), name + "/lrelu");
        case Act::tanh: return tanh_op(x, name + "/tanh");
        case Act::sigmoid: return sigmoid_op(x, name + "/sigmoid");
    }
    return x;
}

// conv (stride 1, same padding) -> optional BN -> activation
template <typename T>
NodePtr<T> conv_block(const NodePtr<T>& x, BoundLayer<T>& bound, Act act,
                      const BlockRuntime& rt) {
    LayerParams<T>& p = *bound.params;
    const int k = p.kernels.dim(2);
    NodePtr<T> h = conv2d(x, bound.kernels, bound.bias, 1, (k - 1) / 2, p.name + "/conv");
    if (p.has_bn) {
        if (rt.train_mode) {
            h = batch_norm_train(h, bound.gamma, bound.beta,
                                 rt.update_running ? &p.bn_running_mean : nullptr,
                                 rt.update_running ? &p.bn_running_var : nullptr,
                                 rt.bn_momentum, rt.bn_eps, p.name + "/bn");
        } else {
            h = batch_norm_inference(h, bound.gamma, bound.beta, p.bn_running_mean,
                                     p.bn_running_var, rt.bn_eps, p.name + "/bn");
        }
    }
    return apply_act(h, act, rt, p.name);
}

// One entry of a plain conv stack: channels, kernel size, activation, BN.
struct ConvLayerSpec {
    int out_channels = 0;
    int ksize = 3;
    Act act = Act::leaky_relu;
    bool bn = true;
};

using ConvStackSpec = std::vector<ConvLayerSpec>;

template <typename T>
std::vector<LayerParams<T>> make_stack(const std::string& prefix, int in_channels,
                                       const ConvStackSpec& spec, SplitMix64& rng) {
    std::vector<LayerParams<T>> layers;
    layers.reserve(spec.size());
    int ic = in_channels;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        layers.push_back(make_conv_layer<T>(prefix + "/layer" + std::to_string(i),
                                            spec[i].out_channels, ic, spec[i].ksize,
                                            spec[i].bn, rng));
        ic = spec[i].out_channels;
    }
    return layers;
}

}  // namespace triadstego::nn
