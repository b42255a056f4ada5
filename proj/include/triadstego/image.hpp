#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"

namespace triadstego {

// 8-bit grayscale image, pixels row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // size width*height

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0) : width(w), height(h) {
        if (w <= 0 || h <= 0) throw ConfigError("image dimensions must be positive");
        pixels.assign(static_cast<std::size_t>(w) * h, fill);
    }

    std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }

    bool operator==(const GrayImage& other) const {
        return width == other.width && height == other.height && pixels == other.pixels;
    }
};

namespace detail {

inline int pgm_next_token(std::istream& in, std::string& token) {
    token.clear();
    int c = in.get();
    // skip whitespace and '#' comments
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        token.push_back(static_cast<char>(c));
        c = in.get();
    }
    return token.empty() ? EOF : 0;
}

}  // namespace detail

// Binary PGM (P5), maxval 255 only.
inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path.string());
    std::string magic;
    if (detail::pgm_next_token(in, magic) == EOF) {
        throw IoError("empty or unreadable PGM file: " + path.string());
    }
    if (magic != "P5") {
        throw IoError("unsupported image format \"" + magic + "\" in " + path.string() +
                      " (only binary PGM \"P5\" is supported)");
    }
    std::string tok;
    long w = 0, h = 0, maxval = 0;
    try {
        if (detail::pgm_next_token(in, tok) == EOF) throw std::invalid_argument("eof");
        w = std::stol(tok);
        if (detail::pgm_next_token(in, tok) == EOF) throw std::invalid_argument("eof");
        h = std::stol(tok);
        if (detail::pgm_next_token(in, tok) == EOF) throw std::invalid_argument("eof");
        maxval = std::stol(tok);
    } catch (const std::exception&) {
        throw IoError("malformed PGM header in " + path.string());
    }
    if (w <= 0 || h <= 0) throw IoError("invalid PGM dimensions in " + path.string());
    if (maxval != 255) {
        throw IoError("unsupported PGM maxval " + std::to_string(maxval) + " in " +
                      path.string() + " (only 255 is supported)");
    }
    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw IoError("corrupt PGM file (truncated pixel data): " + path.string());
    }
    return img;
}

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open image file for writing: " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("failed writing image file: " + path.string());
}

// 8-bit -> real [0,1] by division by 255.
template <typename T = float>
std::vector<T> normalize(const GrayImage& img) {
    std::vector<T> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        out[i] = static_cast<T>(img.pixels[i]) / T(255);
    }
    return out;
}

// Real -> 8-bit: clamp(round(255*v), 0, 255), rounding half away from zero.
template <typename T>
GrayImage denormalize_round(const std::vector<T>& values, int w, int h) {
    if (values.size() != static_cast<std::size_t>(w) * h) {
        throw ConfigError("value count does not match " + std::to_string(w) + "x" +
                          std::to_string(h));
    }
    GrayImage img(w, h);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = static_cast<double>(values[i]);
        if (std::isnan(v)) throw NumericError("NaN pixel value at index " + std::to_string(i));
        const double r = std::round(255.0 * v);  // std::round: half away from zero
        img.pixels[i] = static_cast<std::uint8_t>(r < 0.0 ? 0.0 : (r > 255.0 ? 255.0 : r));
    }
    return img;
}

}  // namespace triadstego
