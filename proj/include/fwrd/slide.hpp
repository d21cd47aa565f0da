// Synthetic slide generation, patch extraction, dataset assembly, and
// stitching of patch anomaly maps into slide heatmaps.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fwrd/image.hpp"

namespace fwrd {

// ---------------------------------------------------------------------------
// Hash-based procedural noise

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic seed derivation for independent RNG streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

inline double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x8cb92ba72f3d8dd7ULL ^
                                                         static_cast<std::uint64_t>(iy)));
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

/// Smoothly interpolated lattice noise in [0, 1) with the given period in pixels.
inline double value_noise(std::uint64_t seed, double x, double y, double period) {
    const double fx = x / period, fy = y / period;
    const double x0 = std::floor(fx), y0 = std::floor(fy);
    double tx = fx - x0, ty = fy - y0;
    tx = tx * tx * (3.0 - 2.0 * tx);
    ty = ty * ty * (3.0 - 2.0 * ty);
    const auto ix = static_cast<std::int64_t>(x0), iy = static_cast<std::int64_t>(y0);
    const double a = lattice_value(seed, ix, iy), b = lattice_value(seed, ix + 1, iy);
    const double c = lattice_value(seed, ix, iy + 1), d = lattice_value(seed, ix + 1, iy + 1);
    return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

/// Multi-octave noise normalized to [0, 1).
inline double fbm(std::uint64_t seed, double x, double y, double period, int octaves) {
    double sum = 0.0, amp = 1.0, norm = 0.0;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * value_noise(seed + static_cast<std::uint64_t>(o) * 7919, x, y, period);
        norm += amp;
        amp *= 0.5;
        period *= 0.5;
    }
    return sum / norm;
}

using Rgb = std::array<double, 3>;

inline Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// ---------------------------------------------------------------------------
// Synthetic slides

struct SlideParams {
    std::size_t size = 1024;
    std::size_t lesion_count_min = 1;
    std::size_t lesion_count_max = 3;
    double lesion_fraction_min = 0.01;
    double lesion_fraction_max = 0.05;
    std::size_t min_lesion_radius = 12;

    void validate() const {
        if (size < 64) throw std::invalid_argument("slide size must be >= 64");
        if (lesion_count_min > lesion_count_max) throw std::invalid_argument("lesion count range is empty");
        if (lesion_count_max == 0) return;
        if (!(lesion_fraction_min > 0.0 && lesion_fraction_min <= lesion_fraction_max &&
              lesion_fraction_max < 0.5))
            throw std::invalid_argument("lesion fraction bounds must satisfy 0 < min <= max < 0.5");
        const double area = static_cast<double>(size * size);
        const double smallest = std::numbers::pi * static_cast<double>(min_lesion_radius * min_lesion_radius);
        if (lesion_fraction_max * area < static_cast<double>(std::max<std::size_t>(lesion_count_min, 1)) * smallest)
            throw std::invalid_argument("lesion fraction bounds infeasible for slide size " + std::to_string(size) +
                                        ": max lesion area cannot hold the minimum lesion count");
        // leave room to place non-overlapping lesions
        if (lesion_fraction_max * static_cast<double>(lesion_count_max) > 0.6)
            throw std::invalid_argument("lesion fraction bounds infeasible: lesions cannot be placed apart");
    }
};

struct SyntheticSlide {
    std::string slide_id;
    std::uint64_t seed = 0;
    ImageU8 image;        // (size, size, 3)
    ImageU8 lesion_mask;  // (size, size, 1), 0 or 1
    std::size_t lesion_count = 0;

    double lesion_fraction() const {
        std::size_t n = 0;
        for (auto v : lesion_mask.pixels) n += v;
        return static_cast<double>(n) / static_cast<double>(lesion_mask.pixels.size());
    }
};

namespace detail {

struct Lesion {
    double cx, cy, radius;
    std::array<double, 3> amp, phase;

    double boundary(double theta) const {
        double r = 1.0;
        for (int k = 0; k < 3; ++k) r += amp[k] * std::cos((k + 2) * theta + phase[k]);
        return radius * r;
    }
};

inline std::size_t rasterize(const std::vector<Lesion>& lesions, double scale, ImageU8& mask) {
    std::fill(mask.pixels.begin(), mask.pixels.end(), 0);
    const auto size = static_cast<std::int64_t>(mask.width);
    std::size_t count = 0;
    for (const auto& l : lesions) {
        const double rmax = l.radius * scale * 1.5;
        const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(l.cy - rmax));
        const auto y1 = std::min<std::int64_t>(size - 1, static_cast<std::int64_t>(l.cy + rmax) + 1);
        const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(l.cx - rmax));
        const auto x1 = std::min<std::int64_t>(size - 1, static_cast<std::int64_t>(l.cx + rmax) + 1);
        for (auto y = y0; y <= y1; ++y)
            for (auto x = x0; x <= x1; ++x) {
                const double dx = static_cast<double>(x) + 0.5 - l.cx, dy = static_cast<double>(y) + 0.5 - l.cy;
                const double r = std::sqrt(dx * dx + dy * dy);
                if (r <= scale * l.boundary(std::atan2(dy, dx))) {
                    auto& m = mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                    if (!m) {
                        m = 1;
                        ++count;
                    }
                }
            }
    }
    return count;
}

}  // namespace detail

/// Generates a tissue-like slide with `lesion_count` inserted lesions whose
/// texture differs in spatial frequency, nucleus density and color.
inline SyntheticSlide generate_slide(std::uint64_t seed, const SlideParams& params, std::string slide_id = {}) {
    params.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t size = params.size;

    SyntheticSlide slide;
    slide.slide_id = slide_id.empty() ? "slide_" + std::to_string(seed) : std::move(slide_id);
    slide.seed = seed;
    slide.image = ImageU8(size, size, 3);
    slide.lesion_mask = ImageU8(size, size, 1);

    // slide-specific stain palette
    const double jitter = 18.0;
    auto jit = [&](Rgb c) {
        const double shift = (u01(rng) - 0.5) * jitter;
        return Rgb{c[0] + shift + (u01(rng) - 0.5) * jitter, c[1] + shift + (u01(rng) - 0.5) * jitter,
                   c[2] + shift + (u01(rng) - 0.5) * jitter};
    };
    const Rgb stroma_light = jit({236, 188, 212});
    const Rgb stroma_dark = jit({206, 138, 180});
    const Rgb nucleus = jit({112, 72, 150});
    const Rgb lesion_light = jit({196, 128, 190});
    const Rgb lesion_dark = jit({150, 88, 164});
    const Rgb lesion_nucleus = jit({72, 40, 118});

    // lesions
    std::vector<detail::Lesion> lesions;
    const std::size_t count =
        params.lesion_count_max == 0
            ? 0
            : std::uniform_int_distribution<std::size_t>(params.lesion_count_min, params.lesion_count_max)(rng);
    if (count > 0) {
        const double lo = params.lesion_fraction_min, hi = params.lesion_fraction_max;
        const double target = lo + (hi - lo) * (0.15 + 0.7 * u01(rng));
        const double area = static_cast<double>(size * size);
        std::vector<double> share(count);
        double total = 0.0;
        for (auto& s : share) total += (s = 0.5 + u01(rng));
        for (std::size_t i = 0; i < count; ++i) {
            detail::Lesion l{};
            l.radius = std::max(static_cast<double>(params.min_lesion_radius),
                                std::sqrt(share[i] / total * target * area / std::numbers::pi));
            for (int k = 0; k < 3; ++k) {
                l.amp[k] = 0.12 * u01(rng);
                l.phase[k] = 2.0 * std::numbers::pi * u01(rng);
            }
            bool placed = false;
            for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
                const double margin = l.radius * 1.3 + 4.0;
                if (2.0 * margin >= static_cast<double>(size)) break;
                l.cx = margin + u01(rng) * (static_cast<double>(size) - 2.0 * margin);
                l.cy = margin + u01(rng) * (static_cast<double>(size) - 2.0 * margin);
                placed = std::all_of(lesions.begin(), lesions.end(), [&](const detail::Lesion& o) {
                    return std::hypot(o.cx - l.cx, o.cy - l.cy) > 1.4 * (o.radius + l.radius) + 8.0;
                });
            }
            if (!placed)
                throw std::invalid_argument("generate_slide: could not place " + std::to_string(count) +
                                            " non-overlapping lesions on a " + std::to_string(size) + " slide");
            lesions.push_back(l);
        }
        // correct the realized area towards the target
        double scale = 1.0;
        for (int iter = 0; iter < 8; ++iter) {
            const double frac = static_cast<double>(detail::rasterize(lesions, scale, slide.lesion_mask)) / area;
            if (frac >= lo && frac <= hi && std::abs(frac - target) < 0.1 * target) break;
            scale *= std::sqrt(target / std::max(frac, 1e-9));
        }
        const double frac = slide.lesion_fraction();
        if (frac < lo || frac > hi)
            throw std::runtime_error("generate_slide: realized lesion fraction outside requested band");
    }
    slide.lesion_count = count;

    const std::uint64_t tissue_seed = derive_seed(seed, 1);
    const std::uint64_t nuclei_seed = derive_seed(seed, 2);
    const std::uint64_t lesion_seed = derive_seed(seed, 3);
    const std::uint64_t grain_seed = derive_seed(seed, 4);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            const double grain = value_noise(grain_seed, fx, fy, 1.5) - 0.5;
            Rgb c;
            if (slide.lesion_mask.at(y, x)) {
                const double t = fbm(lesion_seed, fx, fy, 10.0, 2);
                c = mix(lesion_light, lesion_dark, t);
                const double nuc = value_noise(nuclei_seed, fx, fy, 3.0);
                if (nuc > 0.62) c = mix(c, lesion_nucleus, std::min(1.0, (nuc - 0.62) * 5.0));
            } else {
                const double t = fbm(tissue_seed, fx, fy, 96.0, 4);
                c = mix(stroma_light, stroma_dark, t);
                const double nuc = value_noise(nuclei_seed, fx, fy, 5.0);
                if (nuc > 0.80) c = mix(c, nucleus, std::min(1.0, (nuc - 0.80) * 6.0));
            }
            for (int ch = 0; ch < 3; ++ch) slide.image.at(y, x, ch) = to_u8(c[ch] + 14.0 * grain);
        }
    }
    return slide;
}

// ---------------------------------------------------------------------------
// Pretext texture corpus for the teacher

inline constexpr double kMinTextureContrast = 96.0;

/// `n_classes` (2..4) procedural texture families with random colors:
/// smooth clouds, fine grain, oriented stripes, scattered spots.
inline std::pair<std::vector<ImageU8>, std::vector<int>> make_texture_dataset(std::size_t n_per_class,
                                                                            std::size_t n_classes,
                                                                            std::size_t size, std::uint64_t seed) {
    if (n_classes < 2 || n_classes > 4)
        throw std::invalid_argument("make_texture_dataset: n_classes must be in [2, 4]");
    std::vector<ImageU8> images;
    std::vector<int> labels;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (std::size_t i = 0; i < n_per_class; ++i) {
        for (std::size_t cls = 0; cls < n_classes; ++cls) {
            const std::uint64_t s = derive_seed(seed, i, cls);
            const Rgb a{255 * u01(rng), 255 * u01(rng), 255 * u01(rng)};
            Rgb b{};
            do b = Rgb{255 * u01(rng), 255 * u01(rng), 255 * u01(rng)};
            while (std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]) < kMinTextureContrast);
            const double p1 = u01(rng), p2 = u01(rng);
            const double off_x = 4096 * u01(rng), off_y = 4096 * u01(rng);
            ImageU8 im(size, size, 3);
            for (std::size_t y = 0; y < size; ++y)
                for (std::size_t x = 0; x < size; ++x) {
                    const double fx = static_cast<double>(x) + off_x, fy = static_cast<double>(y) + off_y;
                    double t = 0.0;
                    switch (cls) {
                        case 0: t = fbm(s, fx, fy, 24.0 + 24.0 * p1, 3); break;
                        case 1: t = value_noise(s, fx, fy, 1.5 + 2.0 * p1); break;
                        case 2: {
                            const double th = std::numbers::pi * p1, lambda = 4.0 + 6.0 * p2;
                            const double d = fx * std::cos(th) + fy * std::sin(th);
                            t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * d / lambda);
                            break;
                        }
                        default: {
                            const double v = value_noise(s, fx, fy, 4.0 + 3.0 * p1);
                            t = v > 0.72 ? 1.0 : 0.0;
                            break;
                        }
                    }
                    const Rgb c = mix(a, b, t);
                    for (int ch = 0; ch < 3; ++ch) im.at(y, x, ch) = to_u8(c[ch]);
                }
            images.push_back(std::move(im));
            labels.push_back(static_cast<int>(cls));
        }
    }
    return {std::move(images), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Patch extraction

struct PatchRecord {
    ImageU8 image;  // (P, P, 3)
    ImageU8 mask;   // (P, P, 1) lesion pixels of the crop
    int label = 1;  // 1 = normal, 0 = tumor
    std::string slide_id;
    std::size_t x = 0, y = 0;  // origin in slide coordinates
};

struct ExtractionConfig {
    std::size_t patch_size = 64;
    std::size_t grid_stride = 4;
    double tau_lesion = 0.05;  // minimum lesion fraction of a tumor crop
};

/// Summed-area table over a binary mask, (h+1) x (w+1).
class IntegralMask {
public:
    explicit IntegralMask(const ImageU8& mask) : w_(mask.width + 1), sums_((mask.height + 1) * (mask.width + 1), 0) {
        for (std::size_t y = 0; y < mask.height; ++y) {
            std::uint64_t row = 0;
            for (std::size_t x = 0; x < mask.width; ++x) {
                row += mask.at(y, x) ? 1 : 0;
                sums_[(y + 1) * w_ + x + 1] = sums_[y * w_ + x + 1] + row;
            }
        }
    }
    std::uint64_t count(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
        return sums_[(y + h) * w_ + x + w] - sums_[y * w_ + x + w] - sums_[(y + h) * w_ + x] + sums_[y * w_ + x];
    }

private:
    std::size_t w_;
    std::vector<std::uint64_t> sums_;
};

/// Shuffled candidate origins (y, x) on the extraction grid, split by label rule.
struct CandidateOrigins {
    std::vector<std::pair<std::size_t, std::size_t>> normal, tumor;
};

inline CandidateOrigins candidate_origins(const SyntheticSlide& slide, const ExtractionConfig& cfg,
                                          std::uint64_t seed) {
    const std::size_t P = cfg.patch_size;
    if (slide.image.height <= P || slide.image.width <= P)
        throw std::invalid_argument("extract_patches: slide " + slide.slide_id + " is not larger than the patch size");
    const IntegralMask im(slide.lesion_mask);
    CandidateOrigins c;
    const auto need = static_cast<std::uint64_t>(std::ceil(cfg.tau_lesion * static_cast<double>(P * P)));
    for (std::size_t y = 0; y + P <= slide.image.height; y += cfg.grid_stride)
        for (std::size_t x = 0; x + P <= slide.image.width; x += cfg.grid_stride) {
            const auto n = im.count(y, x, P, P);
            if (n == 0)
                c.normal.emplace_back(y, x);
            else if (n >= need)
                c.tumor.emplace_back(y, x);
        }
    std::mt19937_64 rn(derive_seed(seed, 11)), rt(derive_seed(seed, 12));
    std::shuffle(c.normal.begin(), c.normal.end(), rn);
    std::shuffle(c.tumor.begin(), c.tumor.end(), rt);
    return c;
}

inline PatchRecord make_patch(const SyntheticSlide& slide, std::size_t y, std::size_t x, std::size_t P, int label) {
    PatchRecord r;
    r.image = slide.image.crop(y, x, P, P);
    r.mask = slide.lesion_mask.crop(y, x, P, P);
    r.label = label;
    r.slide_id = slide.slide_id;
    r.x = x;
    r.y = y;
    return r;
}

/// Samples crops without replacement: normal crops have zero lesion overlap,
/// tumor crops at least tau_lesion. Normal and tumor draws use independent
/// streams, and a smaller request is always a prefix of a larger one.
inline std::vector<PatchRecord> extract_patches(const SyntheticSlide& slide, std::size_t n_normal,
                                                std::size_t n_tumor, const ExtractionConfig& cfg,
                                                std::uint64_t seed) {
    const CandidateOrigins c = candidate_origins(slide, cfg, seed);
    if (c.normal.size() < n_normal || c.tumor.size() < n_tumor)
        throw std::invalid_argument("extract_patches: slide " + slide.slide_id + " has " +
                                    std::to_string(c.normal.size()) + " normal / " + std::to_string(c.tumor.size()) +
                                    " tumor candidate crops, requested " + std::to_string(n_normal) + " / " +
                                    std::to_string(n_tumor));
    std::vector<PatchRecord> out;
    for (std::size_t i = 0; i < n_normal; ++i)
        out.push_back(make_patch(slide, c.normal[i].first, c.normal[i].second, cfg.patch_size, 1));
    for (std::size_t i = 0; i < n_tumor; ++i)
        out.push_back(make_patch(slide, c.tumor[i].first, c.tumor[i].second, cfg.patch_size, 0));
    return out;
}

inline double lesion_fraction(const ImageU8& mask) {
    std::size_t n = 0;
    for (auto v : mask.pixels) n += v ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(mask.pixels.size());
}

/// Label rule check against the slide's ground truth.
inline bool label_sound(const PatchRecord& p, const SyntheticSlide& slide, double tau) {
    const std::size_t P = p.image.height;
    if (p.x + P > slide.image.width || p.y + P > slide.image.height) return false;
    const double f = lesion_fraction(slide.lesion_mask.crop(p.y, p.x, P, P));
    return p.label == 1 ? f == 0.0 : f >= tau - 1e-12;
}

// ---------------------------------------------------------------------------
// Dataset assembly

struct DatasetSpec {
    std::size_t n_normal_train = 500;
    std::size_t n_tumor_train = 50;
    std::size_t n_val_per_class = 200;
    std::size_t n_test_per_class = 1000;
    std::size_t n_train_slides = 10;
    std::size_t n_test_tumor_slides = 4;
    std::size_t n_test_normal_slides = 4;
    std::uint64_t seed = 0;
    SlideParams slide{};
    ExtractionConfig extraction{};

    void validate() const {
        if (n_normal_train == 0 || n_val_per_class == 0 || n_test_per_class == 0)
            throw std::invalid_argument("dataset counts must be positive (n_tumor_train may be 0)");
        if (n_train_slides == 0 || n_test_tumor_slides == 0)
            throw std::invalid_argument("insufficient slides for disjoint splits: need >= 1 train and >= 1 test tumor slide");
        slide.validate();
        if (slide.lesion_count_min == 0)
            throw std::invalid_argument("tumor slides need lesion_count_min >= 1");
    }

    bool operator==(const DatasetSpec& o) const {
        return n_normal_train == o.n_normal_train && n_tumor_train == o.n_tumor_train &&
               n_val_per_class == o.n_val_per_class && n_test_per_class == o.n_test_per_class &&
               n_train_slides == o.n_train_slides && n_test_tumor_slides == o.n_test_tumor_slides &&
               n_test_normal_slides == o.n_test_normal_slides && seed == o.seed && slide.size == o.slide.size &&
               slide.lesion_count_min == o.slide.lesion_count_min &&
               slide.lesion_count_max == o.slide.lesion_count_max &&
               slide.lesion_fraction_min == o.slide.lesion_fraction_min &&
               slide.lesion_fraction_max == o.slide.lesion_fraction_max &&
               slide.min_lesion_radius == o.slide.min_lesion_radius &&
               extraction.patch_size == o.extraction.patch_size &&
               extraction.grid_stride == o.extraction.grid_stride && extraction.tau_lesion == o.extraction.tau_lesion;
    }
};

enum class Split { train, val, test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}

struct Dataset {
    std::vector<SyntheticSlide> slides;
    std::vector<Split> slide_split;  // parallel to slides
    std::vector<PatchRecord> train, val, test;

    const SyntheticSlide* find_slide(const std::string& id) const {
        for (const auto& s : slides)
            if (s.slide_id == id) return &s;
        return nullptr;
    }
    std::vector<const SyntheticSlide*> slides_of(Split split) const {
        std::vector<const SyntheticSlide*> out;
        for (std::size_t i = 0; i < slides.size(); ++i)
            if (slide_split[i] == split) out.push_back(&slides[i]);
        return out;
    }
    const std::vector<PatchRecord>& patches(Split s) const {
        return s == Split::train ? train : (s == Split::val ? val : test);
    }
};

/// count_i for item i when `total` is dealt round-robin over `n` bins.
inline std::size_t round_robin_share(std::size_t total, std::size_t n, std::size_t i) {
    return total / n + (i < total % n ? 1 : 0);
}

/// Builds slide-disjoint train / val / test splits. Val uses one lesion-free and
/// one lesion-bearing slide; val and test are class-balanced.
inline Dataset build_dataset(const DatasetSpec& spec) {
    spec.validate();
    Dataset ds;
    SlideParams normal_params = spec.slide;
    normal_params.lesion_count_min = normal_params.lesion_count_max = 0;

    auto add_slide = [&](Split split, const std::string& id, std::uint64_t tag, std::size_t idx, bool lesions) {
        ds.slides.push_back(generate_slide(derive_seed(spec.seed, tag, idx), lesions ? spec.slide : normal_params, id));
        ds.slide_split.push_back(split);
    };
    auto id = [](const char* prefix, std::size_t i) {
        std::string s = std::to_string(i);
        return std::string(prefix) + (s.size() < 2 ? "0" : "") + s;
    };
    for (std::size_t i = 0; i < spec.n_train_slides; ++i) add_slide(Split::train, id("train_", i), 100, i, true);
    add_slide(Split::val, "val_normal_00", 200, 0, false);
    add_slide(Split::val, "val_tumor_00", 201, 0, true);
    for (std::size_t i = 0; i < spec.n_test_normal_slides; ++i)
        add_slide(Split::test, id("test_normal_", i), 300, i, false);
    for (std::size_t i = 0; i < spec.n_test_tumor_slides; ++i)
        add_slide(Split::test, id("test_tumor_", i), 301, i, true);

    const auto& ex = spec.extraction;
    auto extract = [&](const SyntheticSlide& s, std::size_t nn, std::size_t nt, std::vector<PatchRecord>& into) {
        auto ps = extract_patches(s, nn, nt, ex, derive_seed(s.seed, 500));
        for (auto& p : ps) into.push_back(std::move(p));
    };

    const auto train = ds.slides_of(Split::train);
    for (std::size_t i = 0; i < train.size(); ++i)
        extract(*train[i], round_robin_share(spec.n_normal_train, train.size(), i),
                round_robin_share(spec.n_tumor_train, train.size(), i), ds.train);

    const auto val = ds.slides_of(Split::val);
    extract(*val[0], spec.n_val_per_class, 0, ds.val);
    extract(*val[1], 0, spec.n_val_per_class, ds.val);

    const auto test = ds.slides_of(Split::test);
    std::size_t tumor_idx = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const bool has_lesion = test[i]->lesion_count > 0;
        const std::size_t nt =
            has_lesion ? round_robin_share(spec.n_test_per_class, spec.n_test_tumor_slides, tumor_idx++) : 0;
        extract(*test[i], round_robin_share(spec.n_test_per_class, test.size(), i), nt, ds.test);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Heatmap stitching

/// Float raster with NaN marking pixels no patch covered.
struct Heatmap {
    std::size_t height = 0, width = 0;
    std::vector<float> values;

    float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    static bool no_data(float v) { return std::isnan(v); }
};

struct PatchMap {
    std::size_t x = 0, y = 0;   // origin in slide coordinates
    std::size_t size = 0;       // square side
    std::vector<float> values;  // size * size, row-major
};

/// Averages overlapping patch maps per pixel; uncovered pixels are NaN.
inline Heatmap stitch_heatmap(const std::vector<PatchMap>& maps, std::size_t height, std::size_t width) {
    std::vector<double> sum(height * width, 0.0);
    std::vector<std::uint32_t> cover(height * width, 0);
    for (const auto& m : maps) {
        if (m.values.size() != m.size * m.size)
            throw std::invalid_argument("stitch_heatmap: patch map value count does not match its size");
        if (m.x + m.size > width || m.y + m.size > height)
            throw std::out_of_range("stitch_heatmap: patch at (" + std::to_string(m.x) + "," + std::to_string(m.y) +
                                    ") size " + std::to_string(m.size) + " extends beyond slide " +
                                    std::to_string(width) + "x" + std::to_string(height));
        for (std::size_t yy = 0; yy < m.size; ++yy)
            for (std::size_t xx = 0; xx < m.size; ++xx) {
                const std::size_t i = (m.y + yy) * width + m.x + xx;
                sum[i] += static_cast<double>(m.values[yy * m.size + xx]);
                ++cover[i];
            }
    }
    Heatmap h{height, width, std::vector<float>(height * width, std::numeric_limits<float>::quiet_NaN())};
    for (std::size_t i = 0; i < sum.size(); ++i)
        if (cover[i]) h.values[i] = static_cast<float>(sum[i] / cover[i]);
    return h;
}

/// Tile origins along one axis: regular stride, plus a final tile flush with the edge.
inline std::vector<std::size_t> tile_origins(std::size_t extent, std::size_t patch, std::size_t stride) {
    if (patch > extent || stride == 0) throw std::invalid_argument("tile_origins: bad tiling geometry");
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o + patch <= extent; o += stride) out.push_back(o);
    if (out.back() + patch != extent) out.push_back(extent - patch);
    return out;
}

/// Slide-level score: the maximum patch score.
inline double slide_score(const std::vector<double>& patch_scores) {
    if (patch_scores.empty()) throw std::invalid_argument("slide_score: no scored patches");
    return *std::max_element(patch_scores.begin(), patch_scores.end());
}

}  // namespace fwrd
