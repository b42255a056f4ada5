#pragma once

#include <algorithm>
#include <cstddef>

namespace triadstego::nn {

// Raw convolution kernels shared by the forward op and both backward
// routes. Stride-1 loops are written with precomputed valid ranges so the
// innermost loop is a branch-free unit-stride AXPY/dot, which the compiler
// vectorizes; that path carries essentially all training time.
struct ConvDims {
    int n, ic, ih, iw;      // input
    int oc, kh, kw;         // kernels
    int stride, pad;
    int oh, ow;             // output

    static ConvDims make(int n, int ic, int ih, int iw, int oc, int kh, int kw,
                         int stride, int pad) {
        ConvDims d{n, ic, ih, iw, oc, kh, kw, stride, pad, 0, 0};
        d.oh = (ih + 2 * pad - kh) / stride + 1;
        d.ow = (iw + 2 * pad - kw) / stride + 1;
        return d;
    }
};

// y[n,oc,oy,ox] = b[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * x[n,ic,oy*s-p+ky,ox*s-p+kx]
template <typename T>
void conv_forward(const T* x, const T* w, const T* b, T* y, const ConvDims& d) {
    const std::size_t y_plane = static_cast<std::size_t>(d.oh) * d.ow;
    const std::size_t x_plane = static_cast<std::size_t>(d.ih) * d.iw;
    for (int n = 0; n < d.n; ++n) {
        for (int oc = 0; oc < d.oc; ++oc) {
            T* y_map = y + (static_cast<std::size_t>(n) * d.oc + oc) * y_plane;
            const T bias = b ? b[oc] : T(0);
            std::fill(y_map, y_map + y_plane, bias);
            for (int ic = 0; ic < d.ic; ++ic) {
                const T* x_map = x + (static_cast<std::size_t>(n) * d.ic + ic) * x_plane;
                const T* w_k = w + ((static_cast<std::size_t>(oc) * d.ic + ic) * d.kh) * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const T wv = w_k[ky * d.kw + kx];
                        if (wv == T(0)) continue;
                        if (d.stride == 1) {
                            const int ox_lo = std::max(0, d.pad - kx);
                            const int ox_hi = std::min(d.ow, d.iw + d.pad - kx);
                            for (int oy = 0; oy < d.oh; ++oy) {
                                const int iy = oy - d.pad + ky;
                                if (iy < 0 || iy >= d.ih) continue;
                                const T* x_row = x_map + static_cast<std::size_t>(iy) * d.iw;
                                T* y_row = y_map + static_cast<std::size_t>(oy) * d.ow;
                                const int off = kx - d.pad;
                                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                    y_row[ox] += wv * x_row[ox + off];
                                }
                            }
                        } else {
                            for (int oy = 0; oy < d.oh; ++oy) {
                                const int iy = oy * d.stride - d.pad + ky;
                                if (iy < 0 || iy >= d.ih) continue;
                                const T* x_row = x_map + static_cast<std::size_t>(iy) * d.iw;
                                T* y_row = y_map + static_cast<std::size_t>(oy) * d.ow;
                                for (int ox = 0; ox < d.ow; ++ox) {
                                    const int ix = ox * d.stride - d.pad + kx;
                                    if (ix >= 0 && ix < d.iw) y_row[ox] += wv * x_row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// dx accumulation: dx[n,ic,iy,ix] += sum_{oc,ky,kx} dy[n,oc,oy,ox] * w[oc,ic,ky,kx]
template <typename T>
void conv_backward_input(const T* dy, const T* w, T* dx, const ConvDims& d) {
    const std::size_t y_plane = static_cast<std::size_t>(d.oh) * d.ow;
    const std::size_t x_plane = static_cast<std::size_t>(d.ih) * d.iw;
    for (int n = 0; n < d.n; ++n) {
        for (int oc = 0; oc < d.oc; ++oc) {
            const T* dy_map = dy + (static_cast<std::size_t>(n) * d.oc + oc) * y_plane;
            for (int ic = 0; ic < d.ic; ++ic) {
                T* dx_map = dx + (static_cast<std::size_t>(n) * d.ic + ic) * x_plane;
                const T* w_k = w + ((static_cast<std::size_t>(oc) * d.ic + ic) * d.kh) * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const T wv = w_k[ky * d.kw + kx];
                        if (wv == T(0)) continue;
                        if (d.stride == 1) {
                            const int ox_lo = std::max(0, d.pad - kx);
                            const int ox_hi = std::min(d.ow, d.iw + d.pad - kx);
                            for (int oy = 0; oy < d.oh; ++oy) {
                                const int iy = oy - d.pad + ky;
                                if (iy < 0 || iy >= d.ih) continue;
                                T* dx_row = dx_map + static_cast<std::size_t>(iy) * d.iw;
                                const T* dy_row = dy_map + static_cast<std::size_t>(oy) * d.ow;
                                const int off = kx - d.pad;
                                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                    dx_row[ox + off] += wv * dy_row[ox];
                                }
                            }
                        } else {
                            for (int oy = 0; oy < d.oh; ++oy) {
                                const int iy = oy * d.stride - d.pad + ky;
                                if (iy < 0 || iy >= d.ih) continue;
                                T* dx_row = dx_map + static_cast<std::size_t>(iy) * d.iw;
                                const T* dy_row = dy_map + static_cast<std::size_t>(oy) * d.ow;
                                for (int ox = 0; ox < d.ow; ++ox) {
                                    const int ix = ox * d.stride - d.pad + kx;
                                    if (ix >= 0 && ix < d.iw) dx_row[ix] += wv * dy_row[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// dw[oc,ic,ky,kx] += sum_{n,oy,ox} dy[n,oc,oy,ox] * x[n,ic,...]; db[oc] += sum dy
template <typename T>
void conv_backward_params(const T* dy, const T* x, T* dw, T* db, const ConvDims& d) {
    const std::size_t y_plane = static_cast<std::size_t>(d.oh) * d.ow;
    const std::size_t x_plane = static_cast<std::size_t>(d.ih) * d.iw;
    for (int n = 0; n < d.n; ++n) {
        for (int oc = 0; oc < d.oc; ++oc) {
            const T* dy_map = dy + (static_cast<std::size_t>(n) * d.oc + oc) * y_plane;
            if (db) {
                T acc = T(0);
                for (std::size_t i = 0; i < y_plane; ++i) acc += dy_map[i];
                db[oc] += acc;
            }
            for (int ic = 0; ic < d.ic; ++ic) {
                const T* x_map = x + (static_cast<std::size_t>(n) * d.ic + ic) * x_plane;
                T* dw_k = dw + ((static_cast<std::size_t>(oc) * d.ic + ic) * d.kh) * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                    for (int kx = 0; kx < d.kw; ++kx) {
                        T acc = T(0);
                        if (d.stride == 1) {
                            const int ox_lo = std::max(0, d.pad - kx);
                            const int ox_hi = std::min(d.ow, d.iw + d.pad - kx);
                            for (int oy = 0; oy < d.oh; ++oy) {
                                const int iy = oy - d.pad + ky;
                                if (iy < 0 || iy >= d.ih) continue;
                                const T* x_row = x_map + static_cast<std::size_t>(iy) * d.iw;
                                const T* dy_row = dy_map + static_cast<std::size_t>(oy) * d.ow;
                                const int off = kx - d.pad;
                                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                    acc += dy_row[ox] * x_row[ox + off];
                                }
                            }
                        } else {
                            for (int oy = 0; oy < d.oh; ++oy) {
                                const int iy = oy * d.stride - d.pad + ky;
                                if (iy < 0 || iy >= d.ih) continue;
                                const T* x_row = x_map + static_cast<std::size_t>(iy) * d.iw;
                                const T* dy_row = dy_map + static_cast<std::size_t>(oy) * d.ow;
                                for (int ox = 0; ox < d.ow; ++ox) {
                                    const int ix = ox * d.stride - d.pad + kx;
                                    if (ix >= 0 && ix < d.iw) acc += dy_row[ox] * x_row[ix];
                                }
                            }
                        }
                        dw_k[ky * d.kw + kx] += acc;
                    }
                }
            }
        }
    }
}

}  // namespace triadstego::nn
