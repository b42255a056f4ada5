#pragma once

#include <cmath>
#include <cstdint>

#include "triadstego/errors.hpp"
#include "triadstego/tensor.hpp"

namespace triadstego::nn {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-tensor Adam accumulator. Moments are lazily sized on the first step so
// an AdamState can be default-constructed next to any parameter tensor.
template <typename T>
struct AdamState {
    std::int64_t step_count = 0;
    Tensor<T> first_moment;
    Tensor<T> second_moment;
};

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state,
               const AdamHyper& h) {
    if (!param.same_shape(grad)) {
        throw ConfigError("adam_step shape mismatch: params " + param.shape_str() +
                          " vs grads " + grad.shape_str());
    }
    if (state.first_moment.empty()) {
        state.first_moment = Tensor<T>(param.shape());
        state.second_moment = Tensor<T>(param.shape());
    } else if (!state.first_moment.same_shape(param)) {
        throw ConfigError("adam_step state shape mismatch");
    }
    state.step_count += 1;
    const double b1 = h.beta1, b2 = h.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double m = b1 * static_cast<double>(state.first_moment[i]) + (1.0 - b1) * g;
        const double v = b2 * static_cast<double>(state.second_moment[i]) + (1.0 - b2) * g * g;
        state.first_moment[i] = static_cast<T>(m);
        state.second_moment[i] = static_cast<T>(v);
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) -
                                  h.lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
}

}  // namespace triadstego::nn
