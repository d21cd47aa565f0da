// Differentiable ops needed by the distillation model.
//
// Convolutions are lowered to im2col + GEMM through Eigen. All loops run
// single-threaded in a fixed order.
#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "fwrd/autodiff.hpp"

namespace fwrd {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * pad) - static_cast<std::ptrdiff_t>(k);
    if (span < 0) return 0;
    return static_cast<std::size_t>(span) / stride + 1;
}

namespace detail {

// col is (C*k*k) x (oh*ow), row-major.
template <class T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t oh, std::size_t ow, T* col) {
    const std::size_t p = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci) {
        const T* src = img + ci * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T* dst = col + ((ci * k + ky) * k + kx) * p;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    T* row = dst + oy * ow;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                        for (std::size_t ox = 0; ox < ow; ++ox) row[ox] = T(0);
                        continue;
                    }
                    const T* srow = src + static_cast<std::size_t>(iy) * w;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0)
                                                                                   : srow[ix];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters-and-adds col back into img.
template <class T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t oh, std::size_t ow, T* img) {
    const std::size_t p = oh * ow;
    for (std::size_t ci = 0; ci < c; ++ci) {
        T* dst = img + ci * h * w;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T* src = col + ((ci * k + ky) * k + kx) * p;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    T* drow = dst + static_cast<std::size_t>(iy) * w;
                    const T* srow = src + oy * ow;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

inline bool is_pointwise(std::size_t k, std::size_t stride, std::size_t pad) {
    return k == 1 && stride == 1 && pad == 0;
}

}  // namespace detail

/// 2-D cross-correlation. weight is (c_out, c_in, k, k); bias is (c_out, 1, 1, 1).
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t padding) {
    const Shape is = input.shape();
    const Shape ws = weight.shape();
    if (ws.h != ws.w)
        throw ShapeError("conv2d: kernel must be square, weight " + ws.str());
    if (ws.c != is.c)
        throw ShapeError("conv2d: input " + is.str() + " incompatible with weight " + ws.str());
    if (bias.value().numel() != ws.n)
        throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const std::size_t k = ws.h;
    const std::size_t oh = conv_out_size(is.h, k, stride, padding);
    const std::size_t ow = conv_out_size(is.w, k, stride, padding);
    if (oh == 0 || ow == 0)
        throw ShapeError("conv2d: kernel " + ws.str() + " larger than padded input " + is.str());

    const std::size_t cout = ws.n, kk = is.c * k * k, p = oh * ow;
    const bool pointwise = detail::is_pointwise(k, stride, padding);
    Tensor<T> out({is.n, cout, oh, ow});
    std::vector<T> col(pointwise ? 0 : kk * p);
    CMapMat<T> wmat(weight.value().data(), cout, kk);
    const T* b = bias.value().data();
    for (std::size_t n = 0; n < is.n; ++n) {
        const T* x = input.value().plane(n, 0);
        if (!pointwise) detail::im2col(x, is.c, is.h, is.w, k, stride, padding, oh, ow, col.data());
        CMapMat<T> cmat(pointwise ? x : col.data(), kk, p);
        MapMat<T> omat(out.plane(n, 0), cout, p);
        omat.noalias() = wmat * cmat;
        for (std::size_t co = 0; co < cout; ++co) omat.row(co).array() += b[co];
    }

    return Var<T>::make(std::move(out), {input, weight, bias},
                        [is, ws, k, stride, padding, oh, ow, kk, p, cout, pointwise](Node<T>& node) {
        Tensor<T>* dx = parent_grad(node, 0);
        Tensor<T>* dw = parent_grad(node, 1);
        Tensor<T>* db = parent_grad(node, 2);
        const Tensor<T>& xin = node.parents[0]->value;
        const Tensor<T>& wv = node.parents[1]->value;
        CMapMat<T> wmat(wv.data(), cout, kk);
        std::vector<T> col(pointwise ? 0 : kk * p);
        std::vector<T> dcol(kk * p);
        for (std::size_t n = 0; n < is.n; ++n) {
            CMapMat<T> g(node.grad.plane(n, 0), cout, p);
            if (db) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const T* gp = node.grad.plane(n, co);
                    double s = 0.0;
                    for (std::size_t i = 0; i < p; ++i) s += gp[i];
                    (*db)[co] += T(s);
                }
            }
            if (dw) {
                const T* x = xin.plane(n, 0);
                if (!pointwise) detail::im2col(x, is.c, is.h, is.w, k, stride, padding, oh, ow, col.data());
                CMapMat<T> cmat(pointwise ? x : col.data(), kk, p);
                MapMat<T> dwm(dw->data(), cout, kk);
                dwm.noalias() += g * cmat.transpose();
            }
            if (dx) {
                if (pointwise) {
                    MapMat<T> dxm(dx->plane(n, 0), kk, p);
                    dxm.noalias() += wmat.transpose() * g;
                } else {
                    MapMat<T> dcm(dcol.data(), kk, p);
                    dcm.noalias() = wmat.transpose() * g;
                    detail::col2im(dcol.data(), is.c, is.h, is.w, k, stride, padding, oh, ow, dx->plane(n, 0));
                }
            }
        }
    });
}

/// Transposed convolution (no padding). weight is (c_in, c_out, k, k).
/// Output spatial size is (h - 1) * stride + k.
template <class T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride) {
    const Shape is = input.shape();
    const Shape ws = weight.shape();
    if (ws.h != ws.w)
        throw ShapeError("conv_transpose2d: kernel must be square, weight " + ws.str());
    if (ws.n != is.c)
        throw ShapeError("conv_transpose2d: input " + is.str() + " incompatible with weight " + ws.str());
    if (bias.value().numel() != ws.c)
        throw ShapeError("conv_transpose2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
    if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
    const std::size_t k = ws.h, cin = is.c, cout = ws.c;
    const std::size_t oh = (is.h - 1) * stride + k, ow = (is.w - 1) * stride + k;
    const std::size_t kk = cout * k * k, p = is.h * is.w;

    Tensor<T> out({is.n, cout, oh, ow});
    std::vector<T> col(kk * p);
    CMapMat<T> wmat(weight.value().data(), cin, kk);
    const T* b = bias.value().data();
    for (std::size_t n = 0; n < is.n; ++n) {
        CMapMat<T> x(input.value().plane(n, 0), cin, p);
        MapMat<T> cm(col.data(), kk, p);
        cm.noalias() = wmat.transpose() * x;
        detail::col2im(col.data(), cout, oh, ow, k, stride, 0, is.h, is.w, out.plane(n, 0));
        for (std::size_t co = 0; co < cout; ++co) {
            T* o = out.plane(n, co);
            for (std::size_t i = 0; i < oh * ow; ++i) o[i] += b[co];
        }
    }

    return Var<T>::make(std::move(out), {input, weight, bias},
                        [is, k, stride, cin, cout, oh, ow, kk, p](Node<T>& node) {
        Tensor<T>* dx = parent_grad(node, 0);
        Tensor<T>* dw = parent_grad(node, 1);
        Tensor<T>* db = parent_grad(node, 2);
        const Tensor<T>& xin = node.parents[0]->value;
        CMapMat<T> wmat(node.parents[1]->value.data(), cin, kk);
        std::vector<T> col(kk * p);
        for (std::size_t n = 0; n < is.n; ++n) {
            const T* g = node.grad.plane(n, 0);
            if (db) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const T* gp = g + co * oh * ow;
                    double s = 0.0;
                    for (std::size_t i = 0; i < oh * ow; ++i) s += gp[i];
                    (*db)[co] += T(s);
                }
            }
            if (!dx && !dw) continue;
            detail::im2col(g, cout, oh, ow, k, stride, 0, is.h, is.w, col.data());
            CMapMat<T> cm(col.data(), kk, p);
            if (dx) {
                MapMat<T> dxm(dx->plane(n, 0), cin, p);
                dxm.noalias() += wmat * cm;
            }
            if (dw) {
                CMapMat<T> x(xin.plane(n, 0), cin, p);
                MapMat<T> dwm(dw->data(), cin, kk);
                dwm.noalias() += x * cm.transpose();
            }
        }
    });
}

/// max(x, 0); the subgradient at 0 is 0.
template <class T>
Var<T> relu(const Var<T>& input) {
    Tensor<T> out(input.shape());
    const T* x = input.value().data();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return Var<T>::make(std::move(out), {input}, [](Node<T>& node) {
        Tensor<T>* dx = parent_grad(node, 0);
        if (!dx) return;
        const T* x = node.parents[0]->value.data();
        for (std::size_t i = 0; i < dx->numel(); ++i)
            if (x[i] > T(0)) (*dx)[i] += node.grad[i];
    });
}

template <class T>
struct BatchNormStats {
    Tensor<T> running_mean;
    Tensor<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    explicit BatchNormStats(std::size_t channels = 1)
        : running_mean({channels, 1, 1, 1}, T(0)), running_var({channels, 1, 1, 1}, T(1)) {}
};

enum class Mode { train, eval };

/// Per-channel normalization over (n, h, w). Train mode uses batch statistics
/// and updates the running averages; eval mode uses the running averages.
template <class T>
Var<T> batch_norm2d(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                    Mode mode) {
    const Shape s = input.shape();
    if (gamma.value().numel() != s.c || beta.value().numel() != s.c)
        throw ShapeError("batch_norm2d: gamma/beta " + gamma.shape().str() + " do not match input " + s.str());
    if (stats.running_mean.numel() != s.c)
        throw ShapeError("batch_norm2d: running stats do not match input " + s.str());
    const std::size_t count = s.n * s.h * s.w;
    if (mode == Mode::train && count <= 1)
        throw std::invalid_argument("batch_norm2d: train mode needs more than one value per channel, input " +
                                    s.str());

    std::vector<T> mean(s.c), inv_std(s.c);
    if (mode == Mode::train) {
        for (std::size_t c = 0; c < s.c; ++c) {
            double md = 0.0;
            for (std::size_t n = 0; n < s.n; ++n) {
                const T* x = input.value().plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) md += x[i];
            }
            md /= double(count);
            double vd = 0.0;
            for (std::size_t n = 0; n < s.n; ++n) {
                const T* x = input.value().plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) vd += (x[i] - md) * (x[i] - md);
            }
            vd /= double(count);
            const T m = T(md), v = T(vd);
            mean[c] = m;
            inv_std[c] = T(1.0 / std::sqrt(vd + double(stats.eps)));
            const T unbiased = v * T(count) / T(count - 1);
            stats.running_mean[c] = (T(1) - stats.momentum) * stats.running_mean[c] + stats.momentum * m;
            stats.running_var[c] = (T(1) - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
        }
    } else {
        for (std::size_t c = 0; c < s.c; ++c) {
            mean[c] = stats.running_mean[c];
            inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + stats.eps);
        }
    }

    Tensor<T> xhat(s);
    Tensor<T> out(s);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* x = input.value().plane(n, c);
            T* xh = xhat.plane(n, c);
            T* o = out.plane(n, c);
            const T g = gamma.value()[c], b = beta.value()[c];
            for (std::size_t i = 0; i < s.plane(); ++i) {
                xh[i] = (x[i] - mean[c]) * inv_std[c];
                o[i] = g * xh[i] + b;
            }
        }
    }

    return Var<T>::make(std::move(out), {input, gamma, beta},
                        [s, count, mode, inv_std, xhat = std::move(xhat)](Node<T>& node) {
        Tensor<T>* dx = parent_grad(node, 0);
        Tensor<T>* dg = parent_grad(node, 1);
        Tensor<T>* db = parent_grad(node, 2);
        const Tensor<T>& gam = node.parents[1]->value;
        for (std::size_t c = 0; c < s.c; ++c) {
            double acc_g = 0.0, acc_gx = 0.0;
            for (std::size_t n = 0; n < s.n; ++n) {
                const T* g = node.grad.plane(n, c);
                const T* xh = xhat.plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) {
                    acc_g += g[i];
                    acc_gx += double(g[i]) * xh[i];
                }
            }
            const T sum_g = T(acc_g), sum_gx = T(acc_gx);
            if (db) (*db)[c] += sum_g;
            if (dg) (*dg)[c] += sum_gx;
            if (!dx) continue;
            const T scale = gam[c] * inv_std[c];
            for (std::size_t n = 0; n < s.n; ++n) {
                const T* g = node.grad.plane(n, c);
                const T* xh = xhat.plane(n, c);
                T* d = dx->plane(n, c);
                if (mode == Mode::train) {
                    const T inv_count = T(1) / T(count);
                    for (std::size_t i = 0; i < s.plane(); ++i)
                        d[i] += scale * (g[i] - inv_count * sum_g - xh[i] * inv_count * sum_gx);
                } else {
                    for (std::size_t i = 0; i < s.plane(); ++i) d[i] += scale * g[i];
                }
            }
        }
    });
}

/// Concatenates along the channel axis; all inputs share (n, h, w).
template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs) {
    if (inputs.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape s0 = inputs.front().shape();
    std::size_t total_c = 0;
    for (const auto& v : inputs) {
        const Shape s = v.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw ShapeError("concat_channels: " + s.str() + " incompatible with " + s0.str());
        total_c += s.c;
    }
    Tensor<T> out({s0.n, total_c, s0.h, s0.w});
    for (std::size_t n = 0; n < s0.n; ++n) {
        std::size_t c0 = 0;
        for (const auto& v : inputs) {
            const std::size_t len = v.shape().c * s0.plane();
            std::copy(v.value().plane(n, 0), v.value().plane(n, 0) + len, out.plane(n, c0));
            c0 += v.shape().c;
        }
    }
    return Var<T>::make(std::move(out), inputs, [s0](Node<T>& node) {
        std::size_t c0 = 0;
        for (std::size_t i = 0; i < node.parents.size(); ++i) {
            const std::size_t ci = node.parents[i]->value.shape().c;
            if (Tensor<T>* d = parent_grad(node, i)) {
                for (std::size_t n = 0; n < s0.n; ++n) {
                    const T* g = node.grad.plane(n, c0);
                    T* dp = d->plane(n, 0);
                    for (std::size_t j = 0; j < ci * s0.plane(); ++j) dp[j] += g[j];
                }
            }
            c0 += ci;
        }
    });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    a.value().require_same(b.value(), "add");
    Tensor<T> out = a.value();
    out += b.value();
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& node) {
        for (std::size_t i = 0; i < 2; ++i)
            if (Tensor<T>* d = parent_grad(node, i)) *d += node.grad;
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    a.value().require_same(b.value(), "mul");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    return Var<T>::make(std::move(out), {a, b}, [](Node<T>& node) {
        const Tensor<T>& av = node.parents[0]->value;
        const Tensor<T>& bv = node.parents[1]->value;
        if (Tensor<T>* d = parent_grad(node, 0))
            for (std::size_t i = 0; i < d->numel(); ++i) (*d)[i] += node.grad[i] * bv[i];
        if (Tensor<T>* d = parent_grad(node, 1))
            for (std::size_t i = 0; i < d->numel(); ++i) (*d)[i] += node.grad[i] * av[i];
    });
}

/// Scalar (1,1,1,1) sum of all elements.
template <class T>
Var<T> sum(const Var<T>& x) {
    Tensor<T> out({1, 1, 1, 1}, x.value().sum());
    return Var<T>::make(std::move(out), {x}, [](Node<T>& node) {
        if (Tensor<T>* d = parent_grad(node, 0)) {
            const T g = node.grad[0];
            for (auto& v : d->vec()) v += g;
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
    Tensor<T> out = x.value();
    for (auto& v : out.vec()) v *= factor;
    return Var<T>::make(std::move(out), {x}, [factor](Node<T>& node) {
        if (Tensor<T>* d = parent_grad(node, 0))
            for (std::size_t i = 0; i < d->numel(); ++i) (*d)[i] += factor * node.grad[i];
    });
}

/// (n, c, h, w) -> (n, c, 1, 1)
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    const Shape s = x.shape();
    Tensor<T> out({s.n, s.c, 1, 1});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = x.value().plane(n, c);
            T acc(0);
            for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc / T(s.plane());
        }
    return Var<T>::make(std::move(out), {x}, [s](Node<T>& node) {
        Tensor<T>* d = parent_grad(node, 0);
        if (!d) return;
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c) {
                const T g = node.grad.at(n, c, 0, 0) / T(s.plane());
                T* p = d->plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i) p[i] += g;
            }
    });
}

/// Mean softmax cross-entropy. logits are (n, classes, 1, 1).
template <class T>
Var<T> softmax_cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    const Shape s = logits.shape();
    if (s.h != 1 || s.w != 1 || labels.size() != s.n)
        throw ShapeError("softmax_cross_entropy: logits " + s.str() + " vs " + std::to_string(labels.size()) +
                         " labels");
    Tensor<T> prob({s.n, s.c, 1, 1});
    T loss(0);
    for (std::size_t n = 0; n < s.n; ++n) {
        if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= s.c)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t c = 0; c < s.c; ++c) mx = std::max(mx, logits.value().at(n, c, 0, 0));
        T z(0);
        for (std::size_t c = 0; c < s.c; ++c) z += std::exp(logits.value().at(n, c, 0, 0) - mx);
        for (std::size_t c = 0; c < s.c; ++c)
            prob.at(n, c, 0, 0) = std::exp(logits.value().at(n, c, 0, 0) - mx) / z;
        loss -= std::log(std::max(prob.at(n, labels[n], 0, 0), std::numeric_limits<T>::min()));
    }
    loss /= T(s.n);
    return Var<T>::make(Tensor<T>({1, 1, 1, 1}, loss), {logits},
                        [s, labels, prob = std::move(prob)](Node<T>& node) {
        Tensor<T>* d = parent_grad(node, 0);
        if (!d) return;
        const T g = node.grad[0] / T(s.n);
        for (std::size_t n = 0; n < s.n; ++n)
            for (std::size_t c = 0; c < s.c; ++c) {
                const T target = static_cast<std::size_t>(labels[n]) == c ? T(1) : T(0);
                d->at(n, c, 0, 0) += g * (prob.at(n, c, 0, 0) - target);
            }
    });
}

}  // namespace fwrd
