#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"

namespace triadstego {

enum class HammingVariant { H7_4, H15_11 };

// Systematic single-error-correcting Hamming code, minimum distance 3.
// Block layout is data bits first, parity bits last. Internally each
// position carries a distinct nonzero r-bit column of the parity-check
// matrix: parity position j carries 1<<j, data positions carry the
// remaining values in increasing order. The syndrome of a corrupted block
// equals the column of the flipped position, which makes decoding a table
// lookup.
class HammingCode {
public:
    explicit HammingCode(HammingVariant variant) : variant_(variant) {
        const int r = variant == HammingVariant::H7_4 ? 3 : 4;
        n_ = (1 << r) - 1;
        k_ = n_ - r;
        col_of_pos_.resize(n_);
        pos_of_col_.assign(n_ + 1, -1);
        int data_pos = 0;
        for (int col = 1; col <= n_; ++col) {
            const bool parity = (col & (col - 1)) == 0;
            if (parity) continue;
            col_of_pos_[data_pos] = col;
            pos_of_col_[col] = data_pos;
            ++data_pos;
        }
        for (int j = 0; data_pos + j < n_; ++j) {
            col_of_pos_[k_ + j] = 1 << j;
            pos_of_col_[1 << j] = k_ + j;
        }
    }

    static HammingCode h7_4() { return HammingCode(HammingVariant::H7_4); }
    static HammingCode h15_11() { return HammingCode(HammingVariant::H15_11); }

    HammingVariant variant() const { return variant_; }
    int n() const { return n_; }
    int k() const { return k_; }
    int distance() const { return 3; }

    std::string name() const {
        return "[" + std::to_string(n_) + "," + std::to_string(k_) + ",3]";
    }

    // Largest per-block error fraction still guaranteed correctable: 1/n.
    double correction_capability() const { return 1.0 / n_; }

    void encode_block(const std::uint8_t* data, std::uint8_t* out) const {
        int syndrome = 0;
        for (int i = 0; i < k_; ++i) {
            out[i] = data[i] & 1u;
            if (out[i]) syndrome ^= col_of_pos_[i];
        }
        for (int j = 0; k_ + j < n_; ++j) {
            out[k_ + j] = static_cast<std::uint8_t>((syndrome >> j) & 1);
        }
    }

    void decode_block(const std::uint8_t* coded, std::uint8_t* data_out) const {
        int syndrome = 0;
        for (int i = 0; i < n_; ++i) {
            if (coded[i] & 1u) syndrome ^= col_of_pos_[i];
        }
        for (int i = 0; i < k_; ++i) data_out[i] = coded[i] & 1u;
        if (syndrome != 0) {
            const int pos = pos_of_col_[syndrome];
            if (pos < k_) data_out[pos] ^= 1u;
        }
    }

    // Zero-pads to a whole number of blocks; the caller keeps the original
    // bit count out-of-band (the message file header stores it).
    std::vector<std::uint8_t> encode(const std::vector<std::uint8_t>& data) const {
        const std::size_t blocks = (data.size() + k_ - 1) / k_;
        std::vector<std::uint8_t> padded(data);
        padded.resize(blocks * k_, 0);
        std::vector<std::uint8_t> out(blocks * n_);
        for (std::size_t b = 0; b < blocks; ++b) {
            encode_block(padded.data() + b * k_, out.data() + b * n_);
        }
        return out;
    }

    std::vector<std::uint8_t> decode(const std::vector<std::uint8_t>& coded) const {
        if (coded.size() % n_ != 0) {
            throw ConfigError("coded length " + std::to_string(coded.size()) +
                              " is not a multiple of block length " + std::to_string(n_));
        }
        const std::size_t blocks = coded.size() / n_;
        std::vector<std::uint8_t> out(blocks * k_);
        for (std::size_t b = 0; b < blocks; ++b) {
            decode_block(coded.data() + b * n_, out.data() + b * k_);
        }
        return out;
    }

    std::vector<std::vector<std::uint8_t>> generator_matrix() const {
        std::vector<std::vector<std::uint8_t>> g(k_, std::vector<std::uint8_t>(n_, 0));
        std::vector<std::uint8_t> unit(k_, 0), row(n_);
        for (int i = 0; i < k_; ++i) {
            unit[i] = 1;
            encode_block(unit.data(), row.data());
            unit[i] = 0;
            g[i].assign(row.begin(), row.end());
        }
        return g;
    }

    std::vector<std::vector<std::uint8_t>> parity_check_matrix() const {
        const int r = n_ - k_;
        std::vector<std::vector<std::uint8_t>> h(r, std::vector<std::uint8_t>(n_, 0));
        for (int pos = 0; pos < n_; ++pos) {
            for (int j = 0; j < r; ++j) {
                h[j][pos] = static_cast<std::uint8_t>((col_of_pos_[pos] >> j) & 1);
            }
        }
        return h;
    }

private:
    HammingVariant variant_;
    int n_ = 0;
    int k_ = 0;
    std::vector<int> col_of_pos_;
    std::vector<int> pos_of_col_;
};

inline double ber(const std::vector<std::uint8_t>& m,
                  const std::vector<std::uint8_t>& m_prime) {
    if (m.size() != m_prime.size()) {
        throw ConfigError("BER requires equal lengths, got " + std::to_string(m.size()) +
                          " vs " + std::to_string(m_prime.size()));
    }
    if (m.empty()) throw ConfigError("BER of an empty message is undefined");
    std::size_t diff = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if ((m[i] & 1u) != (m_prime[i] & 1u)) ++diff;
    }
    return static_cast<double>(diff) / static_cast<double>(m.size());
}

// Net payload after discounting ECC redundancy: payload scaled by the code
// rate k/n.
inline double real_payload(double payload_bpp, const HammingCode& code) {
    if (payload_bpp < 0) throw ConfigError("payload must be non-negative");
    return payload_bpp * static_cast<double>(code.k()) / static_cast<double>(code.n());
}

inline double real_payload(double payload_bpp, HammingVariant variant) {
    return real_payload(payload_bpp, HammingCode(variant));
}

}  // namespace triadstego
