// Cosine similarity maps between teacher and student features, and the
// focal-weighted distillation loss that trains normal (label 1) and tumorous
// (label 0) patches in the same objective.
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fwrd/autodiff.hpp"

namespace fwrd {

struct LossConfig {
    double alpha = 0.1;   // class weight for label 1; label 0 gets 1 - alpha
    double gamma = 2.0;   // focusing exponent
    double eps_s = 1e-4;  // similarity clamp margin

    /// alpha may be exactly 1 to express a pure normal-branch objective.
    void validate() const {
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw std::invalid_argument("loss alpha must be in (0, 1], got " + std::to_string(alpha));
        if (!(gamma >= 0.0)) throw std::invalid_argument("loss gamma must be >= 0");
        if (!(eps_s > 0.0 && eps_s < 0.5)) throw std::invalid_argument("loss eps_s must be in (0, 0.5)");
    }
};

/// Norm floor used by the cosine, so zero vectors produce similarity 0.
inline constexpr double kCosineEps = 1e-8;

/// Per-position cosine similarity over the channel axis: (n,c,h,w) x2 -> (n,1,h,w).
template <class T>
Var<T> cosine_similarity_map(const Var<T>& f, const Var<T>& f_prime) {
    const Shape s = f.shape();
    if (!(s == f_prime.shape()))
        throw ShapeError("cosine_similarity_map: " + s.str() + " vs " + f_prime.shape().str());
    const std::size_t hw = s.plane();
    Tensor<T> out({s.n, 1, s.h, s.w});
    // per position: dot, |a|, |b| (after flooring)
    std::vector<T> dots(s.n * hw), na(s.n * hw), nb(s.n * hw);
    const T eps = static_cast<T>(kCosineEps);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t i = 0; i < hw; ++i) {
            T d(0), aa(0), bb(0);
            for (std::size_t c = 0; c < s.c; ++c) {
                const T a = f.value().plane(n, c)[i];
                const T b = f_prime.value().plane(n, c)[i];
                d += a * b;
                aa += a * a;
                bb += b * b;
            }
            const std::size_t j = n * hw + i;
            dots[j] = d;
            na[j] = std::max(std::sqrt(aa), eps);
            nb[j] = std::max(std::sqrt(bb), eps);
            out.plane(n, 0)[i] = d / (na[j] * nb[j]);
        }
    }
    return Var<T>::make(std::move(out), {f, f_prime},
                        [s, hw, eps, dots = std::move(dots), na = std::move(na), nb = std::move(nb)](Node<T>& node) {
        Tensor<T>* da = parent_grad(node, 0);
        Tensor<T>* db = parent_grad(node, 1);
        const Tensor<T>& av = node.parents[0]->value;
        const Tensor<T>& bv = node.parents[1]->value;
        for (std::size_t n = 0; n < s.n; ++n) {
            for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t j = n * hw + i;
                const T g = node.grad.plane(n, 0)[i];
                if (g == T(0)) continue;
                const T inv = T(1) / (na[j] * nb[j]);
                const T sim = dots[j] * inv;
                // the floored norm is constant below eps
                const T ka = na[j] > eps ? sim / (na[j] * na[j]) : T(0);
                const T kb = nb[j] > eps ? sim / (nb[j] * nb[j]) : T(0);
                for (std::size_t c = 0; c < s.c; ++c) {
                    const T a = av.plane(n, c)[i];
                    const T b = bv.plane(n, c)[i];
                    if (da) da->plane(n, c)[i] += g * (b * inv - ka * a);
                    if (db) db->plane(n, c)[i] += g * (a * inv - kb * b);
                }
            }
        }
    });
}

/// Clamps into [lo, hi]; gradient passes only strictly inside.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::min(std::max(x.value()[i], lo), hi);
    return Var<T>::make(std::move(out), {x}, [lo, hi](Node<T>& node) {
        Tensor<T>* d = parent_grad(node, 0);
        if (!d) return;
        const Tensor<T>& xv = node.parents[0]->value;
        for (std::size_t i = 0; i < d->numel(); ++i)
            if (xv[i] > lo && xv[i] < hi) (*d)[i] += node.grad[i];
    });
}

/// Training-time similarity: raw cosine clamped to [eps_s, 1 - eps_s].
template <class T>
Var<T> clamped_similarity(const Var<T>& f, const Var<T>& f_prime, const LossConfig& cfg) {
    return clamp(cosine_similarity_map(f, f_prime), static_cast<T>(cfg.eps_s), static_cast<T>(1.0 - cfg.eps_s));
}

/// -alpha_t (1 - s_t)^gamma log(s_t) for one pixel of similarity `s`.
template <class T>
T focal_term(T s, int label, const LossConfig& cfg) {
    const T st = label == 1 ? s : T(1) - s;
    const T at = static_cast<T>(label == 1 ? cfg.alpha : 1.0 - cfg.alpha);
    return -at * std::pow(T(1) - st, static_cast<T>(cfg.gamma)) * std::log(st);
}

/// d focal_term / d s.
template <class T>
T focal_term_grad(T s, int label, const LossConfig& cfg) {
    const T st = label == 1 ? s : T(1) - s;
    const T at = static_cast<T>(label == 1 ? cfg.alpha : 1.0 - cfg.alpha);
    const T g = static_cast<T>(cfg.gamma);
    const T one_m = T(1) - st;
    T d_st = -at * std::pow(one_m, g) / st;
    if (cfg.gamma != 0.0) d_st += at * g * std::pow(one_m, g - T(1)) * std::log(st);
    return label == 1 ? d_st : -d_st;
}

/// Focal distillation loss. `maps` holds one clamped similarity map (n,1,h,w)
/// per scale. Each sample contributes the sum over scales of the per-scale pixel
/// mean; the result is the batch mean.
template <class T>
Var<T> focal_distill_loss(const std::vector<Var<T>>& maps, const std::vector<int>& labels, const LossConfig& cfg) {
    cfg.validate();
    if (maps.empty()) throw ShapeError("focal_distill_loss: no similarity maps");
    const std::size_t batch = maps.front().shape().n;
    if (labels.size() != batch)
        throw ShapeError("focal_distill_loss: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(batch));
    for (int y : labels)
        if (y != 0 && y != 1) throw std::invalid_argument("focal_distill_loss: labels must be 0 or 1");
    T total(0);
    for (const auto& m : maps) {
        const Shape s = m.shape();
        if (s.n != batch || s.c != 1) throw ShapeError("focal_distill_loss: bad map shape " + s.str());
        for (std::size_t n = 0; n < batch; ++n) {
            const T* p = m.value().plane(n, 0);
            T acc(0);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                if (!(p[i] > T(0) && p[i] < T(1)))
                    throw std::domain_error("focal_distill_loss: similarity outside (0,1); clamp first");
                acc += focal_term(p[i], labels[n], cfg);
            }
            total += acc / T(s.plane());
        }
    }
    total /= T(batch);
    return Var<T>::make(Tensor<T>({1, 1, 1, 1}, total), maps, [labels, cfg, batch](Node<T>& node) {
        const T g = node.grad[0] / T(batch);
        for (std::size_t k = 0; k < node.parents.size(); ++k) {
            Tensor<T>* d = parent_grad(node, k);
            if (!d) continue;
            const Tensor<T>& v = node.parents[k]->value;
            const std::size_t hw = v.shape().plane();
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = v.plane(n, 0);
                T* dp = d->plane(n, 0);
                for (std::size_t i = 0; i < hw; ++i) dp[i] += g / T(hw) * focal_term_grad(p[i], labels[n], cfg);
            }
        }
    });
}

}  // namespace fwrd
