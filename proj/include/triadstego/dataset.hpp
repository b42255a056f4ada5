#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/image.hpp"
#include "triadstego/rng.hpp"

namespace triadstego {

// Disjoint train/validation/test partition of a set of image identifiers.
struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

// Seeded shuffle then contiguous cut; val/test sizes are rounded down, train
// absorbs the remainder so the union always equals the source set.
inline DatasetSplit split_dataset(const std::vector<std::string>& ids, double val_frac,
                                  double test_frac, std::uint64_t seed) {
    if (val_frac < 0 || test_frac < 0 || val_frac + test_frac > 1.0) {
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    }
    std::vector<std::string> shuffled = ids;
    SplitMix64 rng(seed);
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(shuffled[i - 1], shuffled[j]);
    }
    const auto n_val = static_cast<std::size_t>(val_frac * static_cast<double>(ids.size()));
    const auto n_test = static_cast<std::size_t>(test_frac * static_cast<double>(ids.size()));
    DatasetSplit split;
    split.seed = seed;
    split.val.assign(shuffled.begin(), shuffled.begin() + n_val);
    split.test.assign(shuffled.begin() + n_val, shuffled.begin() + n_val + n_test);
    split.train.assign(shuffled.begin() + n_val + n_test, shuffled.end());
    return split;
}

// One epoch of index batches: a seeded permutation of {0,...,n-1} chunked
// into full batches; a trailing short batch is dropped.
inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n, int batch_size,
                                                          std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (n == 0) throw ConfigError("cannot batch an empty split");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    SplitMix64 rng(epoch_seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(perm[i - 1], perm[j]);
    }
    std::vector<std::vector<std::size_t>> batches;
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start + bs <= n; start += bs) {
        batches.emplace_back(perm.begin() + start, perm.begin() + start + bs);
    }
    return batches;
}

// Split manifest: text sections "[train]", "[val]", "[test]", one identifier
// per line.
inline void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open split manifest for writing: " + path.string());
    const auto dump = [&out](const char* name, const std::vector<std::string>& ids) {
        out << "[" << name << "]\n";
        for (const auto& id : ids) out << id << "\n";
    };
    dump("train", split.train);
    dump("val", split.val);
    dump("test", split.test);
    if (!out) throw IoError("failed writing split manifest: " + path.string());
}

inline DatasetSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split manifest: " + path.string());
    DatasetSplit split;
    std::vector<std::string>* current = nullptr;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line == "[train]") current = &split.train;
            else if (line == "[val]") current = &split.val;
            else if (line == "[test]") current = &split.test;
            else throw IoError("unknown section " + line + " at line " +
                               std::to_string(line_no) + " of " + path.string());
        } else {
            if (!current) {
                throw IoError("identifier before any section at line " +
                              std::to_string(line_no) + " of " + path.string());
            }
            current->push_back(line);
        }
    }
    return split;
}

// Sorted .pgm identifiers (filenames) under a dataset directory.
inline std::vector<std::string> list_dataset_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("dataset directory not found: " + dir.string());
    }
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
            ids.push_back(entry.path().filename().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

inline std::vector<GrayImage> load_images(const std::filesystem::path& dir,
                                          const std::vector<std::string>& ids) {
    std::vector<GrayImage> images;
    images.reserve(ids.size());
    for (const auto& id : ids) images.push_back(read_pgm(dir / id));
    return images;
}

}  // namespace triadstego
