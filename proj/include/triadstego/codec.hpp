#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/rng.hpp"

namespace triadstego {

// Secret payload: a plain vector of bits.
struct SecretMessage {
    std::vector<std::uint8_t> bits;  // values 0/1

    std::size_t length() const { return bits.size(); }

    static SecretMessage random(std::size_t length, SplitMix64& rng) {
        SecretMessage m;
        m.bits.resize(length);
        for (auto& b : m.bits) b = static_cast<std::uint8_t>(rng.next() & 1ull);
        return m;
    }
};

// Shared embedding key. At least 64 bits; the key alone determines where
// message bits land in the image plane.
struct StegoKey {
    std::vector<std::uint8_t> bits;  // values 0/1

    std::size_t length() const { return bits.size(); }

    static StegoKey random(std::size_t length, SplitMix64& rng) {
        StegoKey k;
        k.bits.resize(length);
        for (auto& b : k.bits) b = static_cast<std::uint8_t>(rng.next() & 1ull);
        return k;
    }
};

inline constexpr std::size_t kDefaultKeyBits = 128;

// Key bits -> 64-bit PRNG seed. Bits are packed into 64-bit words least
// significant bit first (bit i of word j is key bit 64*j + i); a trailing
// partial word is zero-padded; the words are XOR-folded together.
inline std::uint64_t derive_seed(const StegoKey& key) {
    if (key.length() < 64) {
        throw ConfigError("stego key must hold at least 64 bits, got " +
                          std::to_string(key.length()));
    }
    std::uint64_t seed = 0;
    std::uint64_t word = 0;
    int bit_pos = 0;
    for (std::size_t i = 0; i < key.bits.size(); ++i) {
        if (key.bits[i] & 1u) word |= (1ull << bit_pos);
        if (++bit_pos == 64) {
            seed ^= word;
            word = 0;
            bit_pos = 0;
        }
    }
    if (bit_pos != 0) seed ^= word;
    return seed;
}

// Message bits spread over an h-by-w plane. Cells are enumerated row-major
// (cell p sits at row p/w, column p%w). The placement order is the first m
// outputs of a Fisher-Yates partial shuffle of all w*h cells, driven by
// SplitMix64 seeded from the key, so any party holding the key reproduces
// the exact same bit-to-cell bijection.
struct SpreadMessage {
    int width = 0;
    int height = 0;
    std::vector<float> plane;            // h*w, message bit value at occupied cells, 0 elsewhere
    std::vector<std::uint8_t> occupancy; // h*w, 1 where a message bit lives
    std::vector<std::uint32_t> order;    // order[i] = flat cell index of message bit i

    std::size_t message_length() const { return order.size(); }
};

inline std::vector<std::uint32_t> spread_order(const StegoKey& key,
                                               std::size_t m_len, int w, int h) {
    const std::uint64_t cells = static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h);
    if (m_len > cells) {
        throw CapacityError("message of " + std::to_string(m_len) +
                            " bits exceeds carrier capacity of " +
                            std::to_string(cells) + " cells");
    }
    SplitMix64 rng(derive_seed(key));
    return partial_shuffle(cells, m_len, rng);
}

inline SpreadMessage spread(const SecretMessage& m, const StegoKey& key, int w, int h) {
    SpreadMessage s;
    s.width = w;
    s.height = h;
    s.order = spread_order(key, m.length(), w, h);
    s.plane.assign(static_cast<std::size_t>(w) * h, 0.0f);
    s.occupancy.assign(static_cast<std::size_t>(w) * h, 0);
    for (std::size_t i = 0; i < s.order.size(); ++i) {
        s.plane[s.order[i]] = static_cast<float>(m.bits[i]);
        s.occupancy[s.order[i]] = 1;
    }
    return s;
}

// Reads the values of a (possibly real-valued) plane back in message order.
template <typename T>
std::vector<T> despread(const std::vector<T>& plane, const StegoKey& key,
                        std::size_t m_len, int w, int h) {
    if (plane.size() != static_cast<std::size_t>(w) * h) {
        throw ConfigError("plane size does not match " + std::to_string(w) + "x" +
                          std::to_string(h));
    }
    const auto order = spread_order(key, m_len, w, h);
    std::vector<T> out(m_len);
    for (std::size_t i = 0; i < m_len; ++i) out[i] = plane[order[i]];
    return out;
}

// Threshold a soft bit estimate: values at or above 0.5 become 1.
template <typename T>
std::vector<std::uint8_t> harden(const std::vector<T>& soft) {
    std::vector<std::uint8_t> bits(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) {
        bits[i] = soft[i] >= T(0.5) ? 1 : 0;
    }
    return bits;
}

// --- file formats ---------------------------------------------------------
//
// Message file: 8-byte little-endian bit count, then the bits packed MSB
// first within each byte. Key file: packed bits only (same bit order); the
// bit count is eight times the file size.

inline void write_bits_packed(std::ofstream& out, const std::vector<std::uint8_t>& bits) {
    std::uint8_t acc = 0;
    int filled = 0;
    for (std::uint8_t b : bits) {
        acc = static_cast<std::uint8_t>((acc << 1) | (b & 1u));
        if (++filled == 8) {
            out.put(static_cast<char>(acc));
            acc = 0;
            filled = 0;
        }
    }
    if (filled > 0) {
        acc = static_cast<std::uint8_t>(acc << (8 - filled));
        out.put(static_cast<char>(acc));
    }
}

inline std::vector<std::uint8_t> read_bits_packed(std::ifstream& in, std::uint64_t count) {
    std::vector<std::uint8_t> bits;
    bits.reserve(count);
    std::uint64_t remaining = count;
    while (remaining > 0) {
        const int c = in.get();
        if (c == EOF) throw IoError("unexpected end of file while reading packed bits");
        const auto byte = static_cast<std::uint8_t>(c);
        for (int i = 7; i >= 0 && remaining > 0; --i, --remaining) {
            bits.push_back((byte >> i) & 1u);
        }
    }
    return bits;
}

inline void save_message(const SecretMessage& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open message file for writing: " + path.string());
    const std::uint64_t n = m.bits.size();
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((n >> (8 * i)) & 0xffu));
    write_bits_packed(out, m.bits);
    if (!out) throw IoError("failed writing message file: " + path.string());
}

inline SecretMessage load_message(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open message file: " + path.string());
    std::uint64_t n = 0;
    for (int i = 0; i < 8; ++i) {
        const int c = in.get();
        if (c == EOF) throw IoError("message file too short for header: " + path.string());
        n |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(c)) << (8 * i);
    }
    const auto size = std::filesystem::file_size(path);
    if (size < 8 || (size - 8) * 8 < n) {
        throw IoError("message file claims " + std::to_string(n) + " bits but only " +
                      std::to_string(size < 8 ? 0 : (size - 8) * 8) + " are stored: " +
                      path.string());
    }
    SecretMessage m;
    m.bits = read_bits_packed(in, n);
    return m;
}

inline void save_key(const StegoKey& key, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open key file for writing: " + path.string());
    write_bits_packed(out, key.bits);
    if (!out) throw IoError("failed writing key file: " + path.string());
}

inline StegoKey load_key(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open key file: " + path.string());
    const auto size = std::filesystem::file_size(path);
    StegoKey k;
    k.bits = read_bits_packed(in, static_cast<std::uint64_t>(size) * 8);
    return k;
}

}  // namespace triadstego
