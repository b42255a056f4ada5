#pragma once

#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/layers.hpp"
#include "triadstego/tensor.hpp"

namespace triadstego {

// The 30 base high-pass residual kernels of the spatial rich model, zero-
// padded to 5x5 and divided by their integer normalizer so every kernel's
// largest coefficient magnitude is 1. Composition:
//   8 first-order differences (all 8 neighbor directions),
//   4 second-order [1,-2,1] (two axes, two diagonals)          / 2,
//   8 third-order [1,-3,3,-1] (all 8 directions)               / 3,
//   1 SQUARE 3x3 predictor                                     / 4,
//   1 SQUARE 5x5 predictor (the KV kernel)                     / 12,
//   4 EDGE 3x3 rotations                                       / 4,
//   4 EDGE 5x5 rotations                                       / 12.
struct SrmBank {
    static constexpr int kCount = 30;
    static constexpr int kSize = 5;
    Tensor<double> kernels;             // (30, 1, 5, 5), already normalized
    std::vector<std::string> names;     // per-kernel label
    std::vector<int> normalizers;       // the integer divisor applied
};

namespace detail {

struct KernelBuilder {
    SrmBank bank;
    int next = 0;

    KernelBuilder() {
        bank.kernels = Tensor<double>({SrmBank::kCount, 1, SrmBank::kSize, SrmBank::kSize});
        bank.names.resize(SrmBank::kCount);
        bank.normalizers.resize(SrmBank::kCount);
    }

    // Writes value/norm at (dy,dx) relative to the 5x5 center.
    void set(int idx, int dy, int dx, double value, int norm) {
        bank.kernels.at(idx, 0, 2 + dy, 2 + dx) = value / norm;
    }

    void begin(const std::string& name, int norm) {
        bank.names[next] = name;
        bank.normalizers[next] = norm;
    }

    void finish() { ++next; }
};

}  // namespace detail

inline const SrmBank& srm_bank() {
    static const SrmBank bank = [] {
        detail::KernelBuilder b;
        static constexpr std::array<std::array<int, 2>, 8> dirs = {{
            {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}}};
        static constexpr std::array<const char*, 8> dir_names = {
            "e", "ne", "n", "nw", "w", "sw", "s", "se"};

        for (int d = 0; d < 8; ++d) {
            b.begin(std::string("first_order_") + dir_names[d], 1);
            b.set(b.next, 0, 0, -1, 1);
            b.set(b.next, dirs[d][0], dirs[d][1], 1, 1);
            b.finish();
        }
        for (int d = 0; d < 4; ++d) {  // e, ne, n, nw axes
            b.begin(std::string("second_order_") + dir_names[d], 2);
            b.set(b.next, -dirs[d][0], -dirs[d][1], 1, 2);
            b.set(b.next, 0, 0, -2, 2);
            b.set(b.next, dirs[d][0], dirs[d][1], 1, 2);
            b.finish();
        }
        for (int d = 0; d < 8; ++d) {
            b.begin(std::string("third_order_") + dir_names[d], 3);
            b.set(b.next, -dirs[d][0], -dirs[d][1], 1, 3);
            b.set(b.next, 0, 0, -3, 3);
            b.set(b.next, dirs[d][0], dirs[d][1], 3, 3);
            b.set(b.next, 2 * dirs[d][0], 2 * dirs[d][1], -1, 3);
            b.finish();
        }
        {
            b.begin("square_3x3", 4);
            static constexpr int sq3[3][3] = {{-1, 2, -1}, {2, -4, 2}, {-1, 2, -1}};
            for (int y = 0; y < 3; ++y)
                for (int x = 0; x < 3; ++x) b.set(b.next, y - 1, x - 1, sq3[y][x], 4);
            b.finish();
        }
        {
            b.begin("square_5x5_kv", 12);
            static constexpr int kv[5][5] = {{-1, 2, -2, 2, -1},
                                             {2, -6, 8, -6, 2},
                                             {-2, 8, -12, 8, -2},
                                             {2, -6, 8, -6, 2},
                                             {-1, 2, -2, 2, -1}};
            for (int y = 0; y < 5; ++y)
                for (int x = 0; x < 5; ++x) b.set(b.next, y - 2, x - 2, kv[y][x], 12);
            b.finish();
        }
        {
            // EDGE 3x3 base: predictor from the upper half-plane.
            static constexpr int e3[3][3] = {{-1, 2, -1}, {2, -4, 2}, {0, 0, 0}};
            static constexpr const char* rot_names[4] = {"up", "right", "down", "left"};
            for (int rot = 0; rot < 4; ++rot) {
                b.begin(std::string("edge_3x3_") + rot_names[rot], 4);
                for (int y = 0; y < 3; ++y) {
                    for (int x = 0; x < 3; ++x) {
                        int ry = y - 1, rx = x - 1;
                        for (int r = 0; r < rot; ++r) {
                            const int t = ry;
                            ry = rx;        // rotate 90 degrees clockwise
                            rx = -t;
                        }
                        if (e3[y][x] != 0) b.set(b.next, ry, rx, e3[y][x], 4);
                    }
                }
                b.finish();
            }
        }
        {
            static constexpr int e5[5][5] = {{-1, 2, -2, 2, -1},
                                             {2, -6, 8, -6, 2},
                                             {-2, 8, -12, 8, -2},
                                             {0, 0, 0, 0, 0},
                                             {0, 0, 0, 0, 0}};
            static constexpr const char* rot_names[4] = {"up", "right", "down", "left"};
            for (int rot = 0; rot < 4; ++rot) {
                b.begin(std::string("edge_5x5_") + rot_names[rot], 12);
                for (int y = 0; y < 5; ++y) {
                    for (int x = 0; x < 5; ++x) {
                        int ry = y - 2, rx = x - 2;
                        for (int r = 0; r < rot; ++r) {
                            const int t = ry;
                            ry = rx;
                            rx = -t;
                        }
                        if (e5[y][x] != 0) b.set(b.next, ry, rx, e5[y][x], 12);
                    }
                }
                b.finish();
            }
        }
        if (b.next != SrmBank::kCount) {
            throw ConfigError("SRM bank construction produced " + std::to_string(b.next) +
                              " kernels");
        }
        return b.bank;
    }();
    return bank;
}

// SRM-F layer parameters: a 1->30 channel 5x5 conv initialized from the
// bank. Trainable in the embedder/extractor, fixed in the steganalyzer's
// preprocessing (both per config).
template <typename T>
nn::LayerParams<T> make_srm_layer(const std::string& name, bool trainable) {
    const SrmBank& bank = srm_bank();
    nn::LayerParams<T> p;
    p.name = name;
    p.kernels = bank.kernels.template cast<T>();
    p.bias = Tensor<T>({SrmBank::kCount});
    p.trainable = trainable;
    return p;
}

// Residual extraction on a plain tensor batch (n,1,h,w) -> (n,30,h,w).
template <typename T>
Tensor<T> srm_residuals(const Tensor<T>& x) {
    if (x.ndim() != 4 || x.dim(1) != 1) {
        throw ConfigError("srm_residuals expects (n,1,h,w), got " + x.shape_str());
    }
    const SrmBank& bank = srm_bank();
    const Tensor<T> kernels = bank.kernels.template cast<T>();
    const auto d = nn::ConvDims::make(x.dim(0), 1, x.dim(2), x.dim(3), SrmBank::kCount,
                                      SrmBank::kSize, SrmBank::kSize, 1, 2);
    Tensor<T> out({d.n, d.oc, d.oh, d.ow});
    nn::conv_forward(x.data(), kernels.data(), static_cast<const T*>(nullptr), out.data(), d);
    return out;
}

inline std::string srm_bank_dump() {
    const SrmBank& bank = srm_bank();
    std::ostringstream os;
    for (int k = 0; k < SrmBank::kCount; ++k) {
        os << "kernel " << k << " " << bank.names[k] << " (divisor " << bank.normalizers[k]
           << ")\n";
        for (int y = 0; y < SrmBank::kSize; ++y) {
            for (int x = 0; x < SrmBank::kSize; ++x) {
                os << (x ? " " : "  ") << bank.kernels.at(k, 0, y, x);
            }
            os << "\n";
        }
    }
    return os.str();
}

}  // namespace triadstego
