// Anomaly maps, multi-scale fusion, patch scores and threshold detection.
#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "fwrd/distill_loss.hpp"
#include "fwrd/rd_model.hpp"

namespace fwrd {

/// A single-channel map (n, 1, h, w); one map per batch item.
template <class T>
using AnomalyMap = Tensor<T>;

/// A_n = 1 - S_n for every scale.
template <class T>
std::vector<AnomalyMap<T>> anomaly_maps(const std::vector<Tensor<T>>& sim_maps) {
    std::vector<AnomalyMap<T>> out;
    out.reserve(sim_maps.size());
    for (const auto& s : sim_maps) {
        Tensor<T> a(s.shape());
        for (std::size_t i = 0; i < a.numel(); ++i) a[i] = T(1) - s[i];
        out.push_back(std::move(a));
    }
    return out;
}

/// Bilinear resize of every (n, c) plane with corner alignment.
template <class T>
Tensor<T> upsample_bilinear(const Tensor<T>& in, std::size_t out_h, std::size_t out_w) {
    const Shape s = in.shape();
    if (s.h == out_h && s.w == out_w) return in;
    Tensor<T> out({s.n, s.c, out_h, out_w});
    const double ry = out_h > 1 ? static_cast<double>(s.h - 1) / static_cast<double>(out_h - 1) : 0.0;
    const double rx = out_w > 1 ? static_cast<double>(s.w - 1) / static_cast<double>(out_w - 1) : 0.0;
    std::vector<std::size_t> x0(out_w), x1(out_w);
    std::vector<T> wx(out_w);
    for (std::size_t x = 0; x < out_w; ++x) {
        const double sx = static_cast<double>(x) * rx;
        x0[x] = std::min(static_cast<std::size_t>(sx), s.w - 1);
        x1[x] = std::min(x0[x] + 1, s.w - 1);
        wx[x] = static_cast<T>(sx - static_cast<double>(x0[x]));
    }
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* src = in.plane(n, c);
            T* dst = out.plane(n, c);
            for (std::size_t y = 0; y < out_h; ++y) {
                const double sy = static_cast<double>(y) * ry;
                const std::size_t y0 = std::min(static_cast<std::size_t>(sy), s.h - 1);
                const std::size_t y1 = std::min(y0 + 1, s.h - 1);
                const T wy = static_cast<T>(sy - static_cast<double>(y0));
                for (std::size_t x = 0; x < out_w; ++x) {
                    const T top = src[y0 * s.w + x0[x]] * (T(1) - wx[x]) + src[y0 * s.w + x1[x]] * wx[x];
                    const T bot = src[y1 * s.w + x0[x]] * (T(1) - wx[x]) + src[y1 * s.w + x1[x]] * wx[x];
                    dst[y * out_w + x] = top * (T(1) - wy) + bot * wy;
                }
            }
        }
    return out;
}

/// Upsamples every map to patch_size^2 and sums them.
template <class T>
AnomalyMap<T> fuse_maps(const std::vector<AnomalyMap<T>>& maps, std::size_t patch_size) {
    if (maps.empty()) throw std::invalid_argument("fuse_maps: no maps");
    const Shape s0 = maps.front().shape();
    Tensor<T> out({s0.n, s0.c, patch_size, patch_size});
    for (const auto& m : maps) {
        if (m.shape().n != s0.n || m.shape().c != s0.c)
            throw ShapeError("fuse_maps: " + m.shape().str() + " incompatible with " + s0.str());
        out += upsample_bilinear(m, patch_size, patch_size);
    }
    return out;
}

struct PatchScore {
    double sum = 0.0;
    double mean = 0.0;
};

/// Pixel-sum and pixel-mean of batch item n of a fused map.
template <class T>
PatchScore patch_score(const AnomalyMap<T>& fused, std::size_t n = 0) {
    const Shape s = fused.shape();
    double acc = 0.0;
    for (std::size_t c = 0; c < s.c; ++c) {
        const T* p = fused.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) acc += static_cast<double>(p[i]);
    }
    return {acc, acc / static_cast<double>(s.c * s.plane())};
}

/// Tumor decision: strictly above the threshold.
inline bool detect(double score, double threshold) { return score > threshold; }

/// Raw (unclamped) cosine maps between teacher and student features.
template <class T>
std::vector<Tensor<T>> raw_similarity(const MultiScaleFeatures<T>& f, const MultiScaleFeatures<T>& fp) {
    std::vector<Tensor<T>> out;
    for (std::size_t i = 0; i < kNumScales; ++i) out.push_back(cosine_similarity_map(f[i], fp[i]).value());
    return out;
}

/// Fused anomaly maps (n, 1, P, P) for a normalized input batch, eval mode.
template <class T>
AnomalyMap<T> infer_anomaly(RdModel<T>& model, const Tensor<T>& batch) {
    auto f = model.teacher_forward(batch);
    auto fp = model.reconstruct(f, Mode::eval);
    return fuse_maps(anomaly_maps(raw_similarity(f, fp)), model.config().input_size);
}

/// Same, from cached teacher features.
template <class T>
AnomalyMap<T> infer_anomaly_from_features(RdModel<T>& model, const std::array<Tensor<T>, kNumScales>& feats) {
    MultiScaleFeatures<T> f{Var<T>(feats[0]), Var<T>(feats[1]), Var<T>(feats[2])};
    auto fp = model.reconstruct(f, Mode::eval);
    return fuse_maps(anomaly_maps(raw_similarity(f, fp)), model.config().input_size);
}

}  // namespace fwrd
