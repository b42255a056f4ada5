#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/image.hpp"
#include "triadstego/rng.hpp"

namespace triadstego {

namespace detail {

// Separable 5x1 binomial blur pass with clamp-to-edge borders.
inline void binomial_blur_5x5(std::vector<double>& v, int w, int h) {
    static const double kKernel[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    std::vector<double> tmp(v.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -2; t <= 2; ++t) {
                const int xx = std::clamp(x + t, 0, w - 1);
                acc += kKernel[t + 2] * v[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -2; t <= 2; ++t) {
                const int yy = std::clamp(y + t, 0, h - 1);
                acc += kKernel[t + 2] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            v[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
}

}  // namespace detail

// Smoothed-noise textures: per image, white noise is blurred by a 5x5
// binomial kernel a random number of times (1..4 passes) and then rescaled
// so each image spans the full [0,255] range. Deterministic per seed.
inline std::vector<GrayImage> synth_textures(int count, int w, int h, std::uint64_t seed) {
    if (count < 0) throw ConfigError("texture count must be non-negative");
    if (count > 0 && (w < 16 || h < 16)) {
        throw ConfigError("texture dimensions must be at least 16x16");
    }
    std::vector<GrayImage> images;
    images.reserve(static_cast<std::size_t>(count));
    SplitMix64 rng(seed);
    std::vector<double> v;
    for (int idx = 0; idx < count; ++idx) {
        v.assign(static_cast<std::size_t>(w) * h, 0.0);
        for (auto& p : v) p = rng.uniform();
        const int passes = 1 + static_cast<int>(rng.below(4));
        for (int pass = 0; pass < passes; ++pass) detail::binomial_blur_5x5(v, w, h);
        const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
        const double mn = *mn_it, mx = *mx_it;
        const double scale = mx > mn ? 255.0 / (mx - mn) : 0.0;
        GrayImage img(w, h);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double r = std::round((v[i] - mn) * scale);
            img.pixels[i] = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
        }
        images.push_back(std::move(img));
    }
    return images;
}

}  // namespace triadstego
