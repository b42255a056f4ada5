#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "triadstego/conv_impl.hpp"
#include "triadstego/errors.hpp"
#include "triadstego/graph.hpp"

namespace triadstego::nn {

namespace detail {

template <typename T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents, std::string name) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->name = std::move(name);
    node->parents = std::move(parents);
    for (const auto& p : node->parents) {
        if (p->requires_grad) {
            node->requires_grad = true;
            break;
        }
    }
    return node;
}

template <typename T>
void check_4d(const NodePtr<T>& x, const char* op) {
    if (x->value.ndim() != 4) {
        throw ConfigError(std::string(op) + " expects a 4-D tensor, got " +
                          x->value.shape_str() + " at node \"" + x->name + "\"");
    }
}

}  // namespace detail

// --- convolution -----------------------------------------------------------

template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b,
                  int stride, int pad, const std::string& name = "conv2d") {
    detail::check_4d(x, "conv2d");
    if (w->value.ndim() != 4) {
        throw ConfigError("conv2d kernels must be 4-D, got " + w->value.shape_str());
    }
    if (x->value.dim(1) != w->value.dim(1)) {
        throw ConfigError("conv2d channel mismatch at \"" + name + "\": input " +
                          x->value.shape_str() + " vs kernels " + w->value.shape_str());
    }
    if (stride < 1) throw ConfigError("conv2d stride must be positive");
    if (pad < 0) throw ConfigError("conv2d padding must be non-negative");
    const auto d = ConvDims::make(x->value.dim(0), x->value.dim(1), x->value.dim(2),
                                  x->value.dim(3), w->value.dim(0), w->value.dim(2),
                                  w->value.dim(3), stride, pad);
    if (d.oh <= 0 || d.ow <= 0) {
        throw ConfigError("conv2d output would be empty for input " + x->value.shape_str() +
                          " with kernels " + w->value.shape_str());
    }
    if (b && b->value.size() != static_cast<std::size_t>(d.oc)) {
        throw ConfigError("conv2d bias size mismatch at \"" + name + "\"");
    }
    Tensor<T> out({d.n, d.oc, d.oh, d.ow});
    conv_forward(x->value.data(), w->value.data(), b ? b->value.data() : nullptr,
                 out.data(), d);
    std::vector<NodePtr<T>> parents{x, w};
    if (b) parents.push_back(b);
    auto node = detail::make_op<T>(std::move(out), std::move(parents), name);
    NodePtr<T> bias = b;
    node->backward_fn = [x, w, bias, d](Node<T>& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            conv_backward_input(self.grad.data(), w->value.data(), x->grad.data(), d);
        }
        if (w->requires_grad || (bias && bias->requires_grad)) {
            Tensor<T>* dw = nullptr;
            if (w->requires_grad) {
                w->ensure_grad();
                dw = &w->grad;
            }
            Tensor<T> scratch;
            if (!dw) {
                scratch = Tensor<T>(w->value.shape());
                dw = &scratch;
            }
            T* db = nullptr;
            if (bias && bias->requires_grad) {
                bias->ensure_grad();
                db = bias->grad.data();
            }
            conv_backward_params(self.grad.data(), x->value.data(), dw->data(), db, d);
        }
    };
    return node;
}

// --- batch normalization ----------------------------------------------------

// Train mode: normalizes with the batch statistics (biased variance) and, if
// running stats are supplied, folds them in with the given momentum. The
// running-stat update is a side effect on the owner's tensors, not a graph
// edge, so a frozen net evaluated in inference mode stays bit-constant.
template <typename T>
NodePtr<T> batch_norm_train(const NodePtr<T>& x, const NodePtr<T>& gamma,
                            const NodePtr<T>& beta, Tensor<T>* running_mean,
                            Tensor<T>* running_var, double momentum, double eps,
                            const std::string& name = "batch_norm") {
    detail::check_4d(x, "batch_norm");
    const int n = x->value.dim(0), c = x->value.dim(1);
    const int h = x->value.dim(2), w = x->value.dim(3);
    const std::size_t per_channel = static_cast<std::size_t>(n) * h * w;
    if (per_channel < 2) throw ConfigError("batch_norm needs at least 2 values per channel");
    if (gamma->value.size() != static_cast<std::size_t>(c) ||
        beta->value.size() != static_cast<std::size_t>(c)) {
        throw ConfigError("batch_norm parameter size mismatch at \"" + name + "\"");
    }

    std::vector<double> mu(c, 0.0), var(c, 0.0);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const T* p = x->value.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
        }
        mu[ci] = acc / static_cast<double>(per_channel);
        double acc2 = 0.0;
        for (int ni = 0; ni < n; ++ni) {
            const T* p = x->value.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double dlt = static_cast<double>(p[i]) - mu[ci];
                acc2 += dlt * dlt;
            }
        }
        var[ci] = acc2 / static_cast<double>(per_channel);
    }
    if (running_mean && running_var) {
        for (int ci = 0; ci < c; ++ci) {
            (*running_mean)[ci] = static_cast<T>((1.0 - momentum) *
                                      static_cast<double>((*running_mean)[ci]) + momentum * mu[ci]);
            (*running_var)[ci] = static_cast<T>((1.0 - momentum) *
                                     static_cast<double>((*running_var)[ci]) + momentum * var[ci]);
        }
    }

    auto inv_std = std::make_shared<std::vector<T>>(c);
    auto xhat = std::make_shared<Tensor<T>>(x->value.shape());
    Tensor<T> out(x->value.shape());
    for (int ci = 0; ci < c; ++ci) {
        const double istd = 1.0 / std::sqrt(var[ci] + eps);
        (*inv_std)[ci] = static_cast<T>(istd);
        const double g = static_cast<double>(gamma->value[ci]);
        const double bt = static_cast<double>(beta->value[ci]);
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (static_cast<double>(x->value[base + i]) - mu[ci]) * istd;
                (*xhat)[base + i] = static_cast<T>(xh);
                out[base + i] = static_cast<T>(g * xh + bt);
            }
        }
    }
    auto node = detail::make_op<T>(std::move(out), {x, gamma, beta}, name);
    node->backward_fn = [x, gamma, beta, xhat, inv_std, n, c, plane,
                         per_channel](Node<T>& self) {
        // dgamma_c = sum(dy*xhat), dbeta_c = sum(dy),
        // dx = gamma*inv_std*(dy - mean(dy) - xhat*mean(dy*xhat))
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (int ci = 0; ci < c; ++ci) {
            for (int ni = 0; ni < n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dy = static_cast<double>(self.grad[base + i]);
                    sum_dy[ci] += dy;
                    sum_dy_xhat[ci] += dy * static_cast<double>((*xhat)[base + i]);
                }
            }
        }
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            for (int ci = 0; ci < c; ++ci) gamma->grad[ci] += static_cast<T>(sum_dy_xhat[ci]);
        }
        if (beta->requires_grad) {
            beta->ensure_grad();
            for (int ci = 0; ci < c; ++ci) beta->grad[ci] += static_cast<T>(sum_dy[ci]);
        }
        if (x->requires_grad) {
            x->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                const double g_istd = static_cast<double>(gamma->value[ci]) *
                                      static_cast<double>((*inv_std)[ci]);
                const double mean_dy = sum_dy[ci] / static_cast<double>(per_channel);
                const double mean_dy_xhat = sum_dy_xhat[ci] / static_cast<double>(per_channel);
                for (int ni = 0; ni < n; ++ni) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double dy = static_cast<double>(self.grad[base + i]);
                        const double xh = static_cast<double>((*xhat)[base + i]);
                        x->grad[base + i] += static_cast<T>(
                            g_istd * (dy - mean_dy - xh * mean_dy_xhat));
                    }
                }
            }
        }
    };
    return node;
}

// Inference mode: a fixed per-channel affine map from the running statistics.
template <typename T>
NodePtr<T> batch_norm_inference(const NodePtr<T>& x, const NodePtr<T>& gamma,
                                const NodePtr<T>& beta, const Tensor<T>& running_mean,
                                const Tensor<T>& running_var, double eps,
                                const std::string& name = "batch_norm") {
    detail::check_4d(x, "batch_norm");
    const int n = x->value.dim(0), c = x->value.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
    auto scale = std::make_shared<std::vector<T>>(c);
    auto xhat = std::make_shared<Tensor<T>>(x->value.shape());
    Tensor<T> out(x->value.shape());
    for (int ci = 0; ci < c; ++ci) {
        const double istd = 1.0 / std::sqrt(static_cast<double>(running_var[ci]) + eps);
        const double g = static_cast<double>(gamma->value[ci]);
        (*scale)[ci] = static_cast<T>(g * istd);
        const double mean = static_cast<double>(running_mean[ci]);
        const double bt = static_cast<double>(beta->value[ci]);
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double xh = (static_cast<double>(x->value[base + i]) - mean) * istd;
                (*xhat)[base + i] = static_cast<T>(xh);
                out[base + i] = static_cast<T>(g * xh + bt);
            }
        }
    }
    auto node = detail::make_op<T>(std::move(out), {x, gamma, beta}, name);
    node->backward_fn = [x, gamma, beta, scale, xhat, n, c, plane](Node<T>& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                const T s = (*scale)[ci];
                for (int ni = 0; ni < n; ++ni) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        x->grad[base + i] += s * self.grad[base + i];
                    }
                }
            }
        }
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += static_cast<double>(self.grad[base + i]) *
                               static_cast<double>((*xhat)[base + i]);
                    }
                }
                gamma->grad[ci] += static_cast<T>(acc);
            }
        }
        if (beta->requires_grad) {
            beta->ensure_grad();
            for (int ci = 0; ci < c; ++ci) {
                double acc = 0.0;
                for (int ni = 0; ni < n; ++ni) {
                    const std::size_t base = (static_cast<std::size_t>(ni) * c + ci) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += static_cast<double>(self.grad[base + i]);
                    }
                }
                beta->grad[ci] += static_cast<T>(acc);
            }
        }
    };
    return node;
}

// --- element-wise ------------------------------------------------------------

template <typename T, typename FwdFn, typename BwdFn>
NodePtr<T> elementwise(const NodePtr<T>& x, FwdFn fwd, BwdFn dydx_from_xy,
                       const std::string& name) {
    Tensor<T> out(x->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x->value[i]);
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, dydx_from_xy](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            x->grad[i] += self.grad[i] * dydx_from_xy(x->value[i], self.value[i]);
        }
    };
    return node;
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x, const std::string& name = "relu") {
    return elementwise<T>(
        x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); }, name);
}

template <typename T>
NodePtr<T> leaky_relu(const NodePtr<T>& x, T alpha, const std::string& name = "leaky_relu") {
    return elementwise<T>(
        x, [alpha](T v) { return v > T(0) ? v : alpha * v; },
        [alpha](T v, T) { return v > T(0) ? T(1) : alpha; }, name);
}

template <typename T>
NodePtr<T> tanh_op(const NodePtr<T>& x, const std::string& name = "tanh") {
    return elementwise<T>(
        x, [](T v) { return std::tanh(v); },
        [](T, T y) { return T(1) - y * y; }, name);
}

template <typename T>
NodePtr<T> sigmoid_op(const NodePtr<T>& x, const std::string& name = "sigmoid") {
    return elementwise<T>(
        x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); }, name);
}

// Clamp to [0,1]; gradient passes inside the closed range, zero outside.
template <typename T>
NodePtr<T> clamp01(const NodePtr<T>& x, const std::string& name = "clamp01") {
    return elementwise<T>(
        x, [](T v) { return v < T(0) ? T(0) : (v > T(1) ? T(1) : v); },
        [](T v, T) { return (v >= T(0) && v <= T(1)) ? T(1) : T(0); }, name);
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& x, T factor, const std::string& name = "scale") {
    return elementwise<T>(
        x, [factor](T v) { return factor * v; },
        [factor](T, T) { return factor; }, name);
}

// --- straight-through estimators ---------------------------------------------

// Forward: pixel quantization clamp(round(255*v),0,255)/255 in the
// normalized domain. Backward: identity inside [0,1], zero outside.
template <typename T>
NodePtr<T> ste_round_pixels(const NodePtr<T>& x, const std::string& name = "ste_round") {
    return elementwise<T>(
        x,
        [](T v) {
            const double r = std::round(255.0 * static_cast<double>(v));
            return static_cast<T>(std::clamp(r, 0.0, 255.0) / 255.0);
        },
        [](T v, T) { return (v >= T(0) && v <= T(1)) ? T(1) : T(0); }, name);
}

// Forward: round to the nearest of {-1,0,1}, halves away from zero.
// Backward: identity (the estimator that lets training see through the
// quantizer).
template <typename T>
NodePtr<T> ste_ternary(const NodePtr<T>& x, const std::string& name = "ste_ternary") {
    return elementwise<T>(
        x,
        [](T v) {
            const double r = std::round(static_cast<double>(v));
            return static_cast<T>(std::clamp(r, -1.0, 1.0));
        },
        [](T, T) { return T(1); }, name);
}

// --- binary ops ---------------------------------------------------------------

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b, const std::string& name = "add") {
    if (!a->value.same_shape(b->value)) {
        throw ConfigError("add shape mismatch: " + a->value.shape_str() + " vs " +
                          b->value.shape_str());
    }
    Tensor<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    auto node = detail::make_op<T>(std::move(out), {a, b}, name);
    node->backward_fn = [a, b](Node<T>& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) b->accumulate(self.grad);
    };
    return node;
}

// a + alpha * b
template <typename T>
NodePtr<T> add_scaled(const NodePtr<T>& a, T alpha, const NodePtr<T>& b,
                      const std::string& name = "add_scaled") {
    if (!a->value.same_shape(b->value)) {
        throw ConfigError("add_scaled shape mismatch: " + a->value.shape_str() + " vs " +
                          b->value.shape_str());
    }
    Tensor<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + alpha * b->value[i];
    auto node = detail::make_op<T>(std::move(out), {a, b}, name);
    node->backward_fn = [a, b, alpha](Node<T>& self) {
        if (a->requires_grad) a->accumulate(self.grad);
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                b->grad[i] += alpha * self.grad[i];
            }
        }
    };
    return node;
}

template <typename T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b, const std::string& name = "mul") {
    if (!a->value.same_shape(b->value)) {
        throw ConfigError("mul shape mismatch: " + a->value.shape_str() + " vs " +
                          b->value.shape_str());
    }
    Tensor<T> out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
    auto node = detail::make_op<T>(std::move(out), {a, b}, name);
    node->backward_fn = [a, b](Node<T>& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                a->grad[i] += self.grad[i] * b->value[i];
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                b->grad[i] += self.grad[i] * a->value[i];
            }
        }
    };
    return node;
}

// --- shape ops ----------------------------------------------------------------

template <typename T>
NodePtr<T> concat_channels(const NodePtr<T>& a, const NodePtr<T>& b,
                           const std::string& name = "concat") {
    detail::check_4d(a, "concat_channels");
    detail::check_4d(b, "concat_channels");
    if (a->value.dim(0) != b->value.dim(0) || a->value.dim(2) != b->value.dim(2) ||
        a->value.dim(3) != b->value.dim(3)) {
        throw ConfigError("concat_channels shape mismatch: " + a->value.shape_str() +
                          " vs " + b->value.shape_str());
    }
    const int n = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1);
    const std::size_t plane = static_cast<std::size_t>(a->value.dim(2)) * a->value.dim(3);
    Tensor<T> out({n, ca + cb, a->value.dim(2), a->value.dim(3)});
    for (int ni = 0; ni < n; ++ni) {
        const std::size_t out_base = static_cast<std::size_t>(ni) * (ca + cb) * plane;
        std::copy_n(a->value.data() + static_cast<std::size_t>(ni) * ca * plane, ca * plane,
                    out.data() + out_base);
        std::copy_n(b->value.data() + static_cast<std::size_t>(ni) * cb * plane, cb * plane,
                    out.data() + out_base + ca * plane);
    }
    auto node = detail::make_op<T>(std::move(out), {a, b}, name);
    node->backward_fn = [a, b, n, ca, cb, plane](Node<T>& self) {
        for (int ni = 0; ni < n; ++ni) {
            const std::size_t g_base = static_cast<std::size_t>(ni) * (ca + cb) * plane;
            if (a->requires_grad) {
                a->ensure_grad();
                T* dst = a->grad.data() + static_cast<std::size_t>(ni) * ca * plane;
                const T* src = self.grad.data() + g_base;
                for (std::size_t i = 0; i < static_cast<std::size_t>(ca) * plane; ++i) {
                    dst[i] += src[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                T* dst = b->grad.data() + static_cast<std::size_t>(ni) * cb * plane;
                const T* src = self.grad.data() + g_base + ca * plane;
                for (std::size_t i = 0; i < static_cast<std::size_t>(cb) * plane; ++i) {
                    dst[i] += src[i];
                }
            }
        }
    };
    return node;
}

template <typename T>
NodePtr<T> avg_pool(const NodePtr<T>& x, int k, const std::string& name = "avg_pool") {
    detail::check_4d(x, "avg_pool");
    if (k < 1) throw ConfigError("avg_pool window must be positive");
    const int n = x->value.dim(0), c = x->value.dim(1);
    const int ih = x->value.dim(2), iw = x->value.dim(3);
    if (ih % k != 0 || iw % k != 0) {
        throw ConfigError("avg_pool input " + x->value.shape_str() +
                          " not divisible by window " + std::to_string(k));
    }
    const int oh = ih / k, ow = iw / k;
    const T inv = T(1) / static_cast<T>(k * k);
    Tensor<T> out({n, c, oh, ow});
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    T acc = T(0);
                    for (int dy = 0; dy < k; ++dy) {
                        for (int dx = 0; dx < k; ++dx) {
                            acc += x->value.at(ni, ci, oy * k + dy, ox * k + dx);
                        }
                    }
                    out.at(ni, ci, oy, ox) = acc * inv;
                }
            }
        }
    }
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, k, inv](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const int n = self.value.dim(0), c = self.value.dim(1);
        const int oh = self.value.dim(2), ow = self.value.dim(3);
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < c; ++ci) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const T g = self.grad.at(ni, ci, oy, ox) * inv;
                        for (int dy = 0; dy < k; ++dy) {
                            for (int dx = 0; dx < k; ++dx) {
                                x->grad.at(ni, ci, oy * k + dy, ox * k + dx) += g;
                            }
                        }
                    }
                }
            }
        }
    };
    return node;
}

// (n,c,h,w) -> (n,c): mean over the spatial plane.
template <typename T>
NodePtr<T> global_avg_pool(const NodePtr<T>& x, const std::string& name = "global_avg_pool") {
    detail::check_4d(x, "global_avg_pool");
    const int n = x->value.dim(0), c = x->value.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
    const T inv = T(1) / static_cast<T>(plane);
    Tensor<T> out({n, c});
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const T* p = x->value.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]);
            out[static_cast<std::size_t>(ni) * c + ci] = static_cast<T>(acc) * inv;
        }
    }
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, c, plane, inv](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const int n = self.value.dim(0);
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < c; ++ci) {
                const T g = self.grad[static_cast<std::size_t>(ni) * c + ci] * inv;
                T* p = x->grad.data() + (static_cast<std::size_t>(ni) * c + ci) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += g;
            }
        }
    };
    return node;
}

// (n, f) x (out, f) + (out) -> (n, out)
template <typename T>
NodePtr<T> fully_connected(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b,
                           const std::string& name = "fc") {
    // Weights may be stored (out, f) or as degenerate conv kernels (out, f, 1, 1).
    const bool w4 = w->value.ndim() == 4 && w->value.dim(2) == 1 && w->value.dim(3) == 1;
    if (x->value.ndim() != 2 || (w->value.ndim() != 2 && !w4)) {
        throw ConfigError("fully_connected expects 2-D input and (out,f) weights, got " +
                          x->value.shape_str() + " and " + w->value.shape_str());
    }
    const int n = x->value.dim(0), f = x->value.dim(1), out_dim = w->value.dim(0);
    if (w->value.dim(1) != f) {
        throw ConfigError("fully_connected feature mismatch at \"" + name + "\": input " +
                          x->value.shape_str() + " vs weights " + w->value.shape_str());
    }
    if (b && b->value.size() != static_cast<std::size_t>(out_dim)) {
        throw ConfigError("fully_connected bias size mismatch at \"" + name + "\"");
    }
    Tensor<T> out({n, out_dim});
    for (int ni = 0; ni < n; ++ni) {
        const T* xr = x->value.data() + static_cast<std::size_t>(ni) * f;
        for (int o = 0; o < out_dim; ++o) {
            const T* wr = w->value.data() + static_cast<std::size_t>(o) * f;
            double acc = b ? static_cast<double>(b->value[o]) : 0.0;
            for (int i = 0; i < f; ++i) acc += static_cast<double>(xr[i]) * wr[i];
            out[static_cast<std::size_t>(ni) * out_dim + o] = static_cast<T>(acc);
        }
    }
    std::vector<NodePtr<T>> parents{x, w};
    if (b) parents.push_back(b);
    auto node = detail::make_op<T>(std::move(out), std::move(parents), name);
    NodePtr<T> bias = b;
    node->backward_fn = [x, w, bias, n, f, out_dim](Node<T>& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int ni = 0; ni < n; ++ni) {
                T* dxr = x->grad.data() + static_cast<std::size_t>(ni) * f;
                for (int o = 0; o < out_dim; ++o) {
                    const T g = self.grad[static_cast<std::size_t>(ni) * out_dim + o];
                    const T* wr = w->value.data() + static_cast<std::size_t>(o) * f;
                    for (int i = 0; i < f; ++i) dxr[i] += g * wr[i];
                }
            }
        }
        if (w->requires_grad) {
            w->ensure_grad();
            for (int ni = 0; ni < n; ++ni) {
                const T* xr = x->value.data() + static_cast<std::size_t>(ni) * f;
                for (int o = 0; o < out_dim; ++o) {
                    const T g = self.grad[static_cast<std::size_t>(ni) * out_dim + o];
                    T* dwr = w->grad.data() + static_cast<std::size_t>(o) * f;
                    for (int i = 0; i < f; ++i) dwr[i] += g * xr[i];
                }
            }
        }
        if (bias && bias->requires_grad) {
            bias->ensure_grad();
            for (int ni = 0; ni < n; ++ni) {
                for (int o = 0; o < out_dim; ++o) {
                    bias->grad[o] += self.grad[static_cast<std::size_t>(ni) * out_dim + o];
                }
            }
        }
    };
    return node;
}

template <typename T>
NodePtr<T> flatten(const NodePtr<T>& x, const std::string& name = "flatten") {
    detail::check_4d(x, "flatten");
    const int n = x->value.dim(0);
    const int f = x->value.dim(1) * x->value.dim(2) * x->value.dim(3);
    Tensor<T> out = Tensor<T>::from_data({n, f},
        std::vector<T>(x->value.data(), x->value.data() + x->value.size()));
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x](Node<T>& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) x->grad[i] += self.grad[i];
        }
    };
    return node;
}

// Nearest-neighbor x2 upsampling.
template <typename T>
NodePtr<T> upsample_nearest2(const NodePtr<T>& x, const std::string& name = "upsample2") {
    detail::check_4d(x, "upsample_nearest2");
    const int n = x->value.dim(0), c = x->value.dim(1);
    const int ih = x->value.dim(2), iw = x->value.dim(3);
    Tensor<T> out({n, c, ih * 2, iw * 2});
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            for (int y = 0; y < ih * 2; ++y) {
                for (int xx = 0; xx < iw * 2; ++xx) {
                    out.at(ni, ci, y, xx) = x->value.at(ni, ci, y / 2, xx / 2);
                }
            }
        }
    }
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, n, c, ih, iw](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni) {
            for (int ci = 0; ci < c; ++ci) {
                for (int y = 0; y < ih * 2; ++y) {
                    for (int xx = 0; xx < iw * 2; ++xx) {
                        x->grad.at(ni, ci, y / 2, xx / 2) += self.grad.at(ni, ci, y, xx);
                    }
                }
            }
        }
    };
    return node;
}

// Per-batch-item cell gather from single-channel maps: x (n,1,h,w) with
// orders[i] listing flat cell indices -> (n, m). This is despreading inside
// the graph.
template <typename T>
NodePtr<T> gather_cells(const NodePtr<T>& x,
                        std::vector<std::vector<std::uint32_t>> orders,
                        const std::string& name = "gather_cells") {
    detail::check_4d(x, "gather_cells");
    if (x->value.dim(1) != 1) {
        throw ConfigError("gather_cells expects single-channel input, got " +
                          x->value.shape_str());
    }
    const int n = x->value.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
    if (orders.size() != static_cast<std::size_t>(n)) {
        throw ConfigError("gather_cells needs one order per batch item");
    }
    const std::size_t m = orders.empty() ? 0 : orders[0].size();
    for (const auto& o : orders) {
        if (o.size() != m) throw ConfigError("gather_cells ragged orders");
        for (const auto idx : o) {
            if (idx >= plane) throw ConfigError("gather_cells index out of range");
        }
    }
    if (m == 0) throw ConfigError("gather_cells on an empty message");
    Tensor<T> out({n, static_cast<int>(m)});
    for (int ni = 0; ni < n; ++ni) {
        const T* p = x->value.data() + static_cast<std::size_t>(ni) * plane;
        for (std::size_t i = 0; i < m; ++i) {
            out[static_cast<std::size_t>(ni) * m + i] = p[orders[ni][i]];
        }
    }
    auto ord = std::make_shared<std::vector<std::vector<std::uint32_t>>>(std::move(orders));
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, ord, plane, m](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const int n = self.value.dim(0);
        for (int ni = 0; ni < n; ++ni) {
            T* p = x->grad.data() + static_cast<std::size_t>(ni) * plane;
            for (std::size_t i = 0; i < m; ++i) {
                p[(*ord)[ni][i]] += self.grad[static_cast<std::size_t>(ni) * m + i];
            }
        }
    };
    return node;
}

// --- reductions and losses ----------------------------------------------------

template <typename T>
NodePtr<T> mean_all(const NodePtr<T>& x, const std::string& name = "mean") {
    const std::size_t n = x->value.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x->value[i]);
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, n](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const T g = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) x->grad[i] += g;
    };
    return node;
}

// mean(|x|); the subgradient at zero is taken as zero.
template <typename T>
NodePtr<T> mean_abs(const NodePtr<T>& x, const std::string& name = "mean_abs") {
    const std::size_t n = x->value.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(x->value[i]));
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    auto node = detail::make_op<T>(std::move(out), {x}, name);
    node->backward_fn = [x, n](Node<T>& self) {
        if (!x->requires_grad) return;
        x->ensure_grad();
        const T g = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T v = x->value[i];
            x->grad[i] += v > T(0) ? g : (v < T(0) ? -g : T(0));
        }
    };
    return node;
}

// mean((a-b)^2); b may be a constant target.
template <typename T>
NodePtr<T> mse_between(const NodePtr<T>& a, const NodePtr<T>& b,
                       const std::string& name = "mse") {
    if (!a->value.same_shape(b->value)) {
        throw ConfigError("mse shape mismatch: " + a->value.shape_str() + " vs " +
                          b->value.shape_str());
    }
    const std::size_t n = a->value.size();
    if (n == 0) throw ConfigError("mse of empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a->value[i]) - static_cast<double>(b->value[i]);
        acc += d * d;
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    auto node = detail::make_op<T>(std::move(out), {a, b}, name);
    node->backward_fn = [a, b, n](Node<T>& self) {
        const T g2 = T(2) * self.grad[0] / static_cast<T>(n);
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                a->grad[i] += g2 * (a->value[i] - b->value[i]);
            }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                b->grad[i] -= g2 * (a->value[i] - b->value[i]);
            }
        }
    };
    return node;
}

// sum(((a-b) .* mask)^2) / denom — the spread-domain extraction loss.
template <typename T>
NodePtr<T> masked_sq_sum(const NodePtr<T>& a, const NodePtr<T>& b, const Tensor<T>& mask,
                         double denom, const std::string& name = "masked_sq_sum") {
    if (!a->value.same_shape(b->value) || a->value.size() != mask.size()) {
        throw ConfigError("masked_sq_sum shape mismatch");
    }
    if (denom <= 0) throw ConfigError("masked_sq_sum denominator must be positive");
    const std::size_t n = a->value.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (static_cast<double>(a->value[i]) - static_cast<double>(b->value[i])) *
                         static_cast<double>(mask[i]);
        acc += d * d;
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / denom);
    auto mask_copy = std::make_shared<Tensor<T>>(mask);
    auto node = detail::make_op<T>(std::move(out), {a, b}, name);
    node->backward_fn = [a, b, mask_copy, denom, n](Node<T>& self) {
        const double g2 = 2.0 * static_cast<double>(self.grad[0]) / denom;
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const T msq = (*mask_copy)[i] * (*mask_copy)[i];
            const T d = (a->value[i] - b->value[i]) * msq;
            if (a->requires_grad) a->grad[i] += static_cast<T>(g2) * d;
            if (b->requires_grad) b->grad[i] -= static_cast<T>(g2) * d;
        }
    };
    return node;
}

// Mean binary cross-entropy of per-item scores against fixed labels, with
// scores clamped away from {0,1} before the logs.
template <typename T>
NodePtr<T> bce_loss(const NodePtr<T>& scores, const std::vector<T>& labels, double clamp_eps,
                    const std::string& name = "bce") {
    const std::size_t n = scores->value.size();
    if (n != labels.size()) {
        throw ConfigError("bce label count " + std::to_string(labels.size()) +
                          " does not match score count " + std::to_string(n));
    }
    if (n == 0) throw ConfigError("bce of empty scores");
    const double lo = clamp_eps, hi = 1.0 - clamp_eps;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(static_cast<double>(scores->value[i]), lo, hi);
        const double l = static_cast<double>(labels[i]);
        acc += -l * std::log(p) - (1.0 - l) * std::log(1.0 - p);
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc / static_cast<double>(n));
    auto labels_copy = std::make_shared<std::vector<T>>(labels);
    auto node = detail::make_op<T>(std::move(out), {scores}, name);
    node->backward_fn = [scores, labels_copy, lo, hi, n](Node<T>& self) {
        if (!scores->requires_grad) return;
        scores->ensure_grad();
        const double g = static_cast<double>(self.grad[0]) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double raw = static_cast<double>(scores->value[i]);
            if (raw < lo || raw > hi) continue;  // clamped: flat
            const double l = static_cast<double>((*labels_copy)[i]);
            scores->grad[i] += static_cast<T>(g * (-l / raw + (1.0 - l) / (1.0 - raw)));
        }
    };
    return node;
}

// |s - shift| on a scalar node.
template <typename T>
NodePtr<T> abs_minus(const NodePtr<T>& s, double shift, const std::string& name = "abs_minus") {
    if (s->value.size() != 1) throw ConfigError("abs_minus expects a scalar node");
    Tensor<T> out({1});
    const double d = static_cast<double>(s->value[0]) - shift;
    out[0] = static_cast<T>(std::abs(d));
    auto node = detail::make_op<T>(std::move(out), {s}, name);
    node->backward_fn = [s, shift](Node<T>& self) {
        if (!s->requires_grad) return;
        s->ensure_grad();
        const double d = static_cast<double>(s->value[0]) - shift;
        s->grad[0] += d > 0 ? self.grad[0] : (d < 0 ? -self.grad[0] : T(0));
    };
    return node;
}

// Weighted sum of scalar nodes (+ optional constant): the loss combiner.
template <typename T>
NodePtr<T> weighted_sum(const std::vector<std::pair<double, NodePtr<T>>>& terms,
                        double constant = 0.0, const std::string& name = "weighted_sum") {
    if (terms.empty()) throw ConfigError("weighted_sum of no terms");
    double acc = constant;
    std::vector<NodePtr<T>> parents;
    parents.reserve(terms.size());
    for (const auto& [wgt, node] : terms) {
        if (node->value.size() != 1) {
            throw ConfigError("weighted_sum expects scalar nodes, got " +
                              node->value.shape_str());
        }
        acc += wgt * static_cast<double>(node->value[0]);
        parents.push_back(node);
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(acc);
    auto weights = std::make_shared<std::vector<double>>();
    for (const auto& [wgt, node] : terms) weights->push_back(wgt);
    auto node = detail::make_op<T>(std::move(out), std::move(parents), name);
    node->backward_fn = [weights](Node<T>& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            auto& p = self.parents[i];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            p->grad[0] += static_cast<T>((*weights)[i]) * self.grad[0];
        }
    };
    return node;
}

}  // namespace triadstego::nn
