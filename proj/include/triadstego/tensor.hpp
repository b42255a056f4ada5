#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "triadstego/errors.hpp"
#include "triadstego/rng.hpp"

namespace triadstego {

// Dense n-dimensional array, row-major. Images and feature maps use the
// (batch, channels, height, width) convention.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill_value = T(0))
        : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int d : shape_) {
            if (d <= 0) throw ConfigError("tensor dimension must be positive, got " + std::to_string(d));
            n *= static_cast<std::size_t>(d);
        }
        data_.assign(n, fill_value);
    }

    static Tensor from_data(std::vector<int> shape, std::vector<T> data) {
        Tensor t(std::move(shape));
        if (data.size() != t.size()) {
            throw ConfigError("tensor data size " + std::to_string(data.size()) +
                              " does not match shape size " + std::to_string(t.size()));
        }
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 4-D accessors (n, c, y, x).
    T& at(int n, int c, int y, int x) {
        return data_[idx4(n, c, y, x)];
    }
    const T& at(int n, int c, int y, int x) const {
        return data_[idx4(n, c, y, x)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void fill_gaussian(SplitMix64& rng, T stddev) {
        for (auto& v : data_) v = static_cast<T>(rng.gaussian()) * stddev;
    }

    void fill_uniform(SplitMix64& rng, T lo, T hi) {
        for (auto& v : data_) v = static_cast<T>(rng.uniform(lo, hi));
    }

    bool all_finite() const {
        for (const T v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << ", ";
            os << shape_[i];
        }
        os << ')';
        return os.str();
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::size_t idx4(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

using TensorMap = Tensor<float>;

}  // namespace triadstego
