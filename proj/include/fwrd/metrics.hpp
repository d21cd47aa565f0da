// Evaluation metrics: accuracy, AUROC (patch, slide, pixel), lesion-level FROC
// and two-class mIoU.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fwrd/image.hpp"
#include "fwrd/slide.hpp"

namespace fwrd {

struct ScoredItem {
    double score = 0.0;  // higher = more anomalous
    int truth = 0;       // 1 = anomalous
};

inline double accuracy(std::span<const int> predictions, std::span<const int> truths) {
    if (predictions.size() != truths.size())
        throw std::invalid_argument("accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                                    std::to_string(truths.size()) + " truths");
    if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) hit += predictions[i] == truths[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(truths.size());
}

/// Mann-Whitney AUROC over (score, truth) pairs: P(s+ > s-) + P(s+ = s-)/2.
/// Pairs are sorted in place.
template <class S>
double auroc_sorted_pairs(std::vector<std::pair<S, std::uint8_t>>& pairs) {
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double pos = 0, neg = 0, num = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i;
        double gp = 0, gn = 0;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) {
            (pairs[j].second ? gp : gn) += 1;
            ++j;
        }
        num += gp * neg + 0.5 * gp * gn;  // negatives strictly below, plus ties
        pos += gp;
        neg += gn;
        i = j;
    }
    if (pos == 0 || neg == 0) throw std::invalid_argument("auroc: need at least one item of each class");
    return num / (pos * neg);
}

inline double auroc(std::span<const ScoredItem> items) {
    std::vector<std::pair<double, std::uint8_t>> pairs;
    pairs.reserve(items.size());
    for (const auto& it : items) {
        if (!std::isfinite(it.score)) throw std::invalid_argument("auroc: non-finite score");
        pairs.emplace_back(it.score, it.truth ? 1 : 0);
    }
    return auroc_sorted_pairs(pairs);
}

/// Pooled pixel AUROC. NaN heatmap pixels are no-data and are skipped.
inline double pixel_auroc(const std::vector<std::span<const float>>& heatmaps,
                          const std::vector<std::span<const std::uint8_t>>& masks) {
    if (heatmaps.size() != masks.size()) throw std::invalid_argument("pixel_auroc: heatmap / mask count mismatch");
    std::vector<std::pair<float, std::uint8_t>> pairs;
    for (std::size_t k = 0; k < heatmaps.size(); ++k) {
        if (heatmaps[k].size() != masks[k].size())
            throw std::invalid_argument("pixel_auroc: heatmap " + std::to_string(k) + " and mask differ in size");
        for (std::size_t i = 0; i < heatmaps[k].size(); ++i)
            if (!std::isnan(heatmaps[k][i])) pairs.emplace_back(heatmaps[k][i], masks[k][i] ? 1 : 0);
    }
    return auroc_sorted_pairs(pairs);
}

/// Mean of anomaly-class IoU and normal-class IoU. A class absent from both
/// masks scores IoU 1.
inline double miou_2class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("miou_2class: shape mismatch " + std::to_string(pred.size()) + " vs " +
                                    std::to_string(truth.size()));
    std::size_t inter[2] = {0, 0}, uni[2] = {0, 0};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const int p = pred[i] ? 1 : 0, t = truth[i] ? 1 : 0;
        for (int c = 0; c < 2; ++c) {
            const bool pc = p == c, tc = t == c;
            inter[c] += (pc && tc) ? 1 : 0;
            uni[c] += (pc || tc) ? 1 : 0;
        }
    }
    double m = 0;
    for (int c = 0; c < 2; ++c) m += uni[c] ? static_cast<double>(inter[c]) / static_cast<double>(uni[c]) : 1.0;
    return m / 2.0;
}

// ---------------------------------------------------------------------------
// Lesions and FROC

/// Connected components of a binary mask (8-connectivity). labels are 0 for
/// background, 1..count otherwise.
struct LesionSet {
    std::size_t height = 0, width = 0;
    std::vector<std::uint32_t> labels;
    std::uint32_t count = 0;

    std::uint32_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
};

inline LesionSet label_lesions(const ImageU8& mask) {
    LesionSet ls{mask.height, mask.width, std::vector<std::uint32_t>(mask.height * mask.width, 0), 0};
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < ls.labels.size(); ++start) {
        if (!mask.pixels[start * mask.channels] || ls.labels[start]) continue;
        const std::uint32_t id = ++ls.count;
        ls.labels[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t cur = stack.back();
            stack.pop_back();
            const auto cy = static_cast<std::ptrdiff_t>(cur / mask.width);
            const auto cx = static_cast<std::ptrdiff_t>(cur % mask.width);
            for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
                for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                    const auto ny = cy + dy, nx = cx + dx;
                    if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(mask.height) ||
                        nx >= static_cast<std::ptrdiff_t>(mask.width))
                        continue;
                    const std::size_t ni = static_cast<std::size_t>(ny) * mask.width + static_cast<std::size_t>(nx);
                    if (mask.pixels[ni * mask.channels] && !ls.labels[ni]) {
                        ls.labels[ni] = id;
                        stack.push_back(ni);
                    }
                }
        }
    }
    return ls;
}

struct Candidate {
    std::size_t x = 0, y = 0;
    double score = 0.0;
};

/// Greedy non-maximum suppression: repeatedly keeps the highest remaining
/// pixel and discards everything within `radius` (Euclidean) of a kept one.
inline std::vector<Candidate> extract_candidates(const Heatmap& h, double radius, std::size_t max_candidates = 32) {
    std::vector<std::uint32_t> order;
    for (std::size_t i = 0; i < h.values.size(); ++i)
        if (!Heatmap::no_data(h.values[i])) order.push_back(static_cast<std::uint32_t>(i));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return h.values[a] > h.values[b]; });
    std::vector<Candidate> out;
    const double r2 = radius * radius;
    for (std::uint32_t idx : order) {
        if (out.size() >= max_candidates) break;
        const std::size_t y = idx / h.width, x = idx % h.width;
        const bool suppressed = std::any_of(out.begin(), out.end(), [&](const Candidate& c) {
            const double dx = static_cast<double>(c.x) - static_cast<double>(x);
            const double dy = static_cast<double>(c.y) - static_cast<double>(y);
            return dx * dx + dy * dy <= r2;
        });
        if (!suppressed) out.push_back({x, y, static_cast<double>(h.values[idx])});
    }
    return out;
}

struct SlideCandidates {
    std::vector<Candidate> candidates;
    LesionSet lesions;
};

struct FrocPoint {
    double threshold = 0.0;  // candidates with score >= threshold are kept
    double avg_fp = 0.0;     // false positives per slide
    double sensitivity = 0.0;
};

struct FrocResult {
    std::vector<FrocPoint> curve;  // starts at (+inf, 0, 0), thresholds descending
    std::vector<double> fp_targets;
    std::vector<double> sensitivity_at;
    double avg_sensitivity = 0.0;
};

inline const std::vector<double>& default_fp_targets() {
    static const std::vector<double> t{0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    return t;
}

/// Lesion-level FROC. A lesion counts as detected when any kept candidate
/// falls inside it; kept candidates outside every lesion are false positives.
/// Sensitivity at a target is the best sensitivity reached with at most that
/// many false positives per slide.
inline FrocResult froc(const std::vector<SlideCandidates>& slides,
                       const std::vector<double>& fp_targets = default_fp_targets()) {
    struct Hit {
        double score;
        std::size_t slide;
        std::uint32_t lesion;  // 0 = false positive
    };
    std::vector<Hit> hits;
    std::size_t total_lesions = 0;
    std::vector<std::size_t> lesion_offset;
    for (std::size_t s = 0; s < slides.size(); ++s) {
        const auto& sc = slides[s];
        lesion_offset.push_back(total_lesions);
        total_lesions += sc.lesions.count;
        for (const auto& c : sc.candidates) {
            if (c.x >= sc.lesions.width || c.y >= sc.lesions.height)
                throw std::out_of_range("froc: candidate outside slide " + std::to_string(s));
            hits.push_back({c.score, s, sc.lesions.at(c.y, c.x)});
        }
    }
    if (total_lesions == 0) throw std::invalid_argument("froc: no lesions in the evaluated slides");
    const double n_slides = static_cast<double>(slides.size());

    std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.score > b.score; });
    FrocResult r;
    r.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::vector<char> detected(total_lesions, 0);
    std::size_t n_detected = 0, fps = 0;
    std::size_t i = 0;
    while (i < hits.size()) {
        const double t = hits[i].score;
        for (; i < hits.size() && hits[i].score == t; ++i) {
            if (hits[i].lesion == 0) {
                ++fps;
            } else {
                const std::size_t id = lesion_offset[hits[i].slide] + hits[i].lesion - 1;
                if (!detected[id]) {
                    detected[id] = 1;
                    ++n_detected;
                }
            }
        }
        r.curve.push_back({t, static_cast<double>(fps) / n_slides,
                           static_cast<double>(n_detected) / static_cast<double>(total_lesions)});
    }

    r.fp_targets = fp_targets;
    double acc = 0.0;
    for (double target : fp_targets) {
        double best = 0.0;
        for (const auto& p : r.curve)
            if (p.avg_fp <= target) best = std::max(best, p.sensitivity);
        r.sensitivity_at.push_back(best);
        acc += best;
    }
    r.avg_sensitivity = fp_targets.empty() ? 0.0 : acc / static_cast<double>(fp_targets.size());
    return r;
}

// ---------------------------------------------------------------------------
// Threshold selection

/// `count` evenly spaced quantiles (nearest rank) of the given values.
inline std::vector<double> quantile_grid(std::vector<double> values, std::size_t count = 101) {
    if (values.empty()) throw std::invalid_argument("quantile_grid: no values");
    std::sort(values.begin(), values.end());
    std::vector<double> q;
    for (std::size_t k = 0; k < count; ++k) {
        const double pos = count > 1 ? static_cast<double>(k) / static_cast<double>(count - 1) : 0.0;
        q.push_back(values[static_cast<std::size_t>(std::llround(pos * static_cast<double>(values.size() - 1)))]);
    }
    return q;
}

struct Calibration {
    double threshold = 0.0;
    double accuracy = 0.0;
};

/// Picks the quantile threshold with the best accuracy of `score > threshold`
/// against `is_anomalous`; ties go to the lower threshold.
inline Calibration calibrate_threshold(const std::vector<double>& scores, const std::vector<int>& is_anomalous) {
    if (scores.size() != is_anomalous.size() || scores.empty())
        throw std::invalid_argument("calibrate_threshold: scores and truths must be non-empty and equal length");
    Calibration best{0.0, -1.0};
    for (double t : quantile_grid(scores)) {
        std::size_t hit = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) hit += (scores[i] > t ? 1 : 0) == is_anomalous[i];
        const double acc = static_cast<double>(hit) / static_cast<double>(scores.size());
        if (acc > best.accuracy || (acc == best.accuracy && t < best.threshold)) best = {t, acc};
    }
    return best;
}

}  // namespace fwrd
