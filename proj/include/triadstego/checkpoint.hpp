#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "triadstego/agents.hpp"
#include "triadstego/errors.hpp"
#include "triadstego/tensor.hpp"

namespace triadstego {

inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'T', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// A checkpoint is a bag of named values: counters, scalars, strings, and
// f64 tensors. Maps keep keys sorted, so serialization is canonical and a
// save -> load -> save round trip is byte-identical. All agent parameters
// (including batch-norm running statistics and Adam moments) fit the tensor
// table; every RNG dependency of training is a plain counter, so the ints
// table alone makes a run resumable.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::map<std::string, std::uint64_t> ints;
    std::map<std::string, double> reals;
    std::map<std::string, std::string> texts;
    std::map<std::string, Tensor<double>> tensors;
};

namespace detail {

template <typename V>
void write_raw(std::ostream& out, const V& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_raw(std::istream& in, const char* what) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw IoError(std::string("truncated checkpoint while reading ") + what);
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_raw<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
    const auto len = read_raw<std::uint64_t>(in, what);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(std::string("truncated checkpoint while reading ") + what);
    return s;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 4);
    detail::write_raw<std::uint32_t>(out, cp.version);
    detail::write_raw<std::uint64_t>(out, cp.ints.size());
    for (const auto& [k, v] : cp.ints) {
        detail::write_string(out, k);
        detail::write_raw<std::uint64_t>(out, v);
    }
    detail::write_raw<std::uint64_t>(out, cp.reals.size());
    for (const auto& [k, v] : cp.reals) {
        detail::write_string(out, k);
        detail::write_raw<double>(out, v);
    }
    detail::write_raw<std::uint64_t>(out, cp.texts.size());
    for (const auto& [k, v] : cp.texts) {
        detail::write_string(out, k);
        detail::write_string(out, v);
    }
    detail::write_raw<std::uint64_t>(out, cp.tensors.size());
    for (const auto& [k, t] : cp.tensors) {
        detail::write_string(out, k);
        detail::write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
        for (int d = 0; d < t.ndim(); ++d) detail::write_raw<std::int32_t>(out, t.dim(d));
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw IoError(path.string() + " is not a checkpoint (bad magic header)");
    }
    Checkpoint cp;
    cp.version = detail::read_raw<std::uint32_t>(in, "version");
    if (cp.version != kCheckpointVersion) {
        throw IoError("checkpoint " + path.string() + " has version " +
                      std::to_string(cp.version) + ", this build reads version " +
                      std::to_string(kCheckpointVersion));
    }
    const auto n_ints = detail::read_raw<std::uint64_t>(in, "int table");
    for (std::uint64_t i = 0; i < n_ints; ++i) {
        std::string k = detail::read_string(in, "int key");
        cp.ints[k] = detail::read_raw<std::uint64_t>(in, "int value");
    }
    const auto n_reals = detail::read_raw<std::uint64_t>(in, "real table");
    for (std::uint64_t i = 0; i < n_reals; ++i) {
        std::string k = detail::read_string(in, "real key");
        cp.reals[k] = detail::read_raw<double>(in, "real value");
    }
    const auto n_texts = detail::read_raw<std::uint64_t>(in, "text table");
    for (std::uint64_t i = 0; i < n_texts; ++i) {
        std::string k = detail::read_string(in, "text key");
        cp.texts[k] = detail::read_string(in, "text value");
    }
    const auto n_tensors = detail::read_raw<std::uint64_t>(in, "tensor table");
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        std::string k = detail::read_string(in, "tensor key");
        const auto nd = detail::read_raw<std::uint32_t>(in, "tensor rank");
        if (nd > 8) throw IoError("implausible tensor rank in checkpoint: " + std::to_string(nd));
        std::vector<int> shape(nd);
        for (auto& d : shape) d = detail::read_raw<std::int32_t>(in, "tensor dim");
        Tensor<double> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint while reading tensor \"" + k + "\"");
        cp.tensors[k] = std::move(t);
    }
    return cp;
}

// --- ParamSet round-trip ----------------------------------------------------------

namespace detail {

template <typename T, typename U>
Tensor<double> to_f64(const Tensor<U>& t) {
    return t.template cast<double>();
}

template <typename T>
void put_tensor(Checkpoint& cp, const std::string& key, const Tensor<T>& t) {
    cp.tensors[key] = t.template cast<double>();
}

template <typename T>
void get_tensor(const Checkpoint& cp, const std::string& key, Tensor<T>& dst) {
    const auto it = cp.tensors.find(key);
    if (it == cp.tensors.end()) throw IoError("checkpoint is missing tensor \"" + key + "\"");
    if (it->second.shape() != dst.shape()) {
        throw IoError("checkpoint tensor \"" + key + "\" has shape " + it->second.shape_str() +
                      ", expected " + dst.shape_str());
    }
    dst = it->second.template cast<T>();
}

template <typename T>
void put_adam(Checkpoint& cp, const std::string& key, const nn::AdamState<T>& s) {
    cp.ints[key + "/t"] = static_cast<std::uint64_t>(s.step_count);
    if (s.step_count > 0) {
        put_tensor(cp, key + "/m", s.first_moment);
        put_tensor(cp, key + "/v", s.second_moment);
    }
}

template <typename T>
void get_adam(const Checkpoint& cp, const std::string& key, const Tensor<T>& param,
              nn::AdamState<T>& s) {
    const auto it = cp.ints.find(key + "/t");
    if (it == cp.ints.end()) throw IoError("checkpoint is missing counter \"" + key + "/t\"");
    s.step_count = static_cast<std::int64_t>(it->second);
    if (s.step_count > 0) {
        s.first_moment = Tensor<T>(param.shape());
        s.second_moment = Tensor<T>(param.shape());
        get_tensor(cp, key + "/m", s.first_moment);
        get_tensor(cp, key + "/v", s.second_moment);
    } else {
        s.first_moment = Tensor<T>();
        s.second_moment = Tensor<T>();
    }
}

}  // namespace detail

// Layer names (e.g. "alice/stack0_1") key the blobs, so structure changes
// between writer and reader surface as missing-tensor or shape errors.
template <typename T>
void checkpoint_store_params(Checkpoint& cp, const ParamSet<T>& params) {
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        const auto& a = params.adam[i];
        detail::put_tensor(cp, l.name + "/kernels", l.kernels);
        detail::put_tensor(cp, l.name + "/bias", l.bias);
        detail::put_adam(cp, l.name + "/adam/kernels", a.kernels);
        detail::put_adam(cp, l.name + "/adam/bias", a.bias);
        if (l.has_bn) {
            detail::put_tensor(cp, l.name + "/bn_gamma", l.bn_gamma);
            detail::put_tensor(cp, l.name + "/bn_beta", l.bn_beta);
            detail::put_tensor(cp, l.name + "/bn_running_mean", l.bn_running_mean);
            detail::put_tensor(cp, l.name + "/bn_running_var", l.bn_running_var);
            detail::put_adam(cp, l.name + "/adam/bn_gamma", a.bn_gamma);
            detail::put_adam(cp, l.name + "/adam/bn_beta", a.bn_beta);
        }
    }
}

template <typename T>
void checkpoint_load_params(const Checkpoint& cp, ParamSet<T>& params) {
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& l = params.layers[i];
        auto& a = params.adam[i];
        detail::get_tensor(cp, l.name + "/kernels", l.kernels);
        detail::get_tensor(cp, l.name + "/bias", l.bias);
        detail::get_adam(cp, l.name + "/adam/kernels", l.kernels, a.kernels);
        detail::get_adam(cp, l.name + "/adam/bias", l.bias, a.bias);
        if (l.has_bn) {
            detail::get_tensor(cp, l.name + "/bn_gamma", l.bn_gamma);
            detail::get_tensor(cp, l.name + "/bn_beta", l.bn_beta);
            detail::get_tensor(cp, l.name + "/bn_running_mean", l.bn_running_mean);
            detail::get_tensor(cp, l.name + "/bn_running_var", l.bn_running_var);
            detail::get_adam(cp, l.name + "/adam/bn_gamma", l.bn_gamma, a.bn_gamma);
            detail::get_adam(cp, l.name + "/adam/bn_beta", l.bn_beta, a.bn_beta);
        }
    }
}

}  // namespace triadstego
