#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"

namespace triadstego {

inline constexpr double kScoreClamp = 1e-7;

// Weights of the embedder's three-term objective plus the change-rate
// target. The three lambdas must sum to one.
struct LossWeights {
    double lambda_a = 0.2;
    double lambda_b = 0.4;
    double lambda_e = 0.4;
    double beta = 0.0;

    void validate() const {
        const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!in01(lambda_a) || !in01(lambda_b) || !in01(lambda_e)) {
            throw ConfigError("loss weights must lie in [0,1]");
        }
        if (std::abs(lambda_a + lambda_b + lambda_e - 1.0) > 1e-9) {
            throw ConfigError("loss weights must sum to 1, got " +
                              std::to_string(lambda_a + lambda_b + lambda_e));
        }
        if (beta < 0.0) throw ConfigError("beta must be non-negative");
    }
};

// Binary cross-entropy on one steganalyzer score; the score is clamped to
// [1e-7, 1-1e-7] so the logs stay finite.
inline double eve_loss(double label, double score) {
    const double p = std::clamp(score, kScoreClamp, 1.0 - kScoreClamp);
    return -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
}

// Mean squared error between message bits and soft estimates.
template <typename T>
double bob_loss_message(const std::vector<T>& m, const std::vector<T>& m_hat) {
    if (m.size() != m_hat.size()) {
        throw ConfigError("message length mismatch: " + std::to_string(m.size()) + " vs " +
                          std::to_string(m_hat.size()));
    }
    if (m.empty()) throw ConfigError("extraction loss of an empty message");
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double d = static_cast<double>(m[i]) - static_cast<double>(m_hat[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(m.size());
}

// Spread-domain form: sum(((s - s_hat) .* omega)^2) / m_len. Under the
// spreading bijection this equals bob_loss_message on the despread vectors.
template <typename T>
double bob_loss_spread(const std::vector<T>& s, const std::vector<T>& s_hat,
                       const std::vector<std::uint8_t>& omega, std::size_t m_len) {
    if (s.size() != s_hat.size() || s.size() != omega.size()) {
        throw ConfigError("spread loss shape mismatch");
    }
    std::size_t ones = 0;
    for (const auto o : omega) ones += (o & 1u);
    if (ones != m_len) {
        throw ConfigError("occupancy mask has " + std::to_string(ones) +
                          " ones but message length is " + std::to_string(m_len));
    }
    if (m_len == 0) throw ConfigError("extraction loss of an empty message");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!(omega[i] & 1u)) continue;
        const double d = static_cast<double>(s[i]) - static_cast<double>(s_hat[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(m_len);
}

// Mean squared pixel distortion between normalized images.
template <typename T>
double pixel_dist_mse(const std::vector<T>& x, const std::vector<T>& y) {
    if (x.size() != y.size() || x.empty()) {
        throw ConfigError("pixel distance requires equal non-empty images");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

// Mean absolute value of the modification map; for a ternary map this is the
// change rate.
template <typename T>
double modmap_dist(const std::vector<T>& n) {
    if (n.empty()) throw ConfigError("modification map is empty");
    double acc = 0.0;
    for (const auto v : n) acc += std::abs(static_cast<double>(v));
    return acc / static_cast<double>(n.size());
}

inline double alice_loss_v1(double dist, double l_bob, double l_eve, const LossWeights& w) {
    w.validate();
    return w.lambda_a * dist + w.lambda_b * l_bob - w.lambda_e * l_eve;
}

inline double alice_loss_v23(double map_dist, double l_bob, double l_eve,
                             const LossWeights& w) {
    w.validate();
    return w.lambda_a * (map_dist - w.beta) + w.lambda_b * l_bob - w.lambda_e * l_eve;
}

inline double bob_loss_v3(double l_cover_recons, double l_message_extract) {
    if (l_cover_recons < 0.0 || l_message_extract < 0.0) {
        throw ConfigError("loss terms must be non-negative");
    }
    return 0.5 * (l_cover_recons + l_message_extract);
}

}  // namespace triadstego
