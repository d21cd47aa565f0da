// Training with validation-based checkpoint selection, patch / slide
// inference, evaluation, and the ablation sweep. Shared by the CLI and the
// acceptance suite.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fwrd/anomaly.hpp"
#include "fwrd/distill_loss.hpp"
#include "fwrd/io.hpp"
#include "fwrd/metrics.hpp"
#include "fwrd/rd_model.hpp"
#include "fwrd/slide.hpp"

namespace fwrd {

using Model = RdModel<float>;

enum class ThresholdMode { calibrated, fixed };

struct TrainConfig {
    AdamConfig adam{1e-3, 0.5, 0.999, 1e-8};
    std::size_t batch_size = 16;
    std::size_t epochs = 20;
};

struct TeacherConfig {
    std::size_t per_class = 150;
    std::size_t classes = 4;
    std::size_t epochs = 4;
};

struct RunConfig {
    DatasetSpec dataset{};
    EncoderConfig encoder{};
    LossConfig loss{};
    TrainConfig train{};
    TeacherConfig teacher{};
    ThresholdMode threshold_mode = ThresholdMode::calibrated;
    double fixed_threshold = 2.0;   // on the per-pixel mean score
    std::size_t infer_stride = 32;  // slide tiling stride
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    /// Dataset spec with the run seed and the model's patch size applied.
    DatasetSpec dataset_spec() const {
        DatasetSpec s = dataset;
        s.seed = seed;
        s.extraction.patch_size = encoder.input_size;
        return s;
    }

    void validate() const {
        dataset_spec().validate();
        encoder.validate();
        loss.validate();
        if (train.batch_size < 2) throw std::invalid_argument("train batch_size must be >= 2");
        if (train.epochs == 0) throw std::invalid_argument("train epochs must be >= 1");
        if (infer_stride == 0) throw std::invalid_argument("infer_stride must be >= 1");
    }
};

inline std::uint64_t teacher_seed(const RunConfig& c) { return derive_seed(c.seed, 7); }
inline std::uint64_t model_seed(const RunConfig& c) { return derive_seed(c.seed, 8); }
inline std::uint64_t shuffle_seed(const RunConfig& c) { return derive_seed(c.seed, 9); }

/// Pretrains and freezes the teacher on the texture pretext corpus.
inline PretrainedTeacher<float> pretrain_default_teacher(const RunConfig& cfg) {
    auto [images, labels] = make_texture_dataset(cfg.teacher.per_class, cfg.teacher.classes, cfg.encoder.input_size,
                                                 derive_seed(cfg.seed, 6));
    PretrainConfig pc;
    pc.epochs = cfg.teacher.epochs;
    return pretrain_teacher<float>(images, labels, cfg.encoder, teacher_seed(cfg), pc);
}

// ---------------------------------------------------------------------------
// Teacher feature cache

struct FeatureCache {
    std::array<Tensor<float>, kNumScales> features;  // (N, C_n, h_n, w_n)
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }

    std::array<Tensor<float>, kNumScales> gather(const std::vector<std::size_t>& idx) const {
        std::array<Tensor<float>, kNumScales> out;
        for (std::size_t s = 0; s < kNumScales; ++s) {
            const Shape fs = features[s].shape();
            const std::size_t item = fs.c * fs.h * fs.w;
            Tensor<float> t({idx.size(), fs.c, fs.h, fs.w});
            for (std::size_t i = 0; i < idx.size(); ++i)
                std::copy(features[s].data() + idx[i] * item, features[s].data() + (idx[i] + 1) * item,
                          t.data() + i * item);
            out[s] = std::move(t);
        }
        return out;
    }
};

inline FeatureCache cache_teacher_features(Model& model, const std::vector<PatchRecord>& patches,
                                           std::size_t batch = 64) {
    FeatureCache cache;
    if (patches.empty()) throw std::invalid_argument("cache_teacher_features: no patches");
    const auto& cfg = model.config();
    for (std::size_t s = 0; s < kNumScales; ++s)
        cache.features[s] = Tensor<float>({patches.size(), cfg.channels[s], cfg.scale_size(s), cfg.scale_size(s)});
    for (std::size_t b = 0; b < patches.size(); b += batch) {
        std::vector<const ImageU8*> imgs;
        for (std::size_t i = b; i < std::min(patches.size(), b + batch); ++i) imgs.push_back(&patches[i].image);
        auto f = model.teacher_forward(to_tensor<float>(imgs, model.norm()));
        for (std::size_t s = 0; s < kNumScales; ++s) {
            const auto& v = f[s].value();
            std::copy(v.data(), v.data() + v.numel(), cache.features[s].data() + b * (v.numel() / imgs.size()));
        }
    }
    for (const auto& p : patches) cache.labels.push_back(p.label);
    return cache;
}

// ---------------------------------------------------------------------------
// Scoring

struct PatchScores {
    std::vector<double> mean;
    std::vector<double> sum;
    std::vector<float> maps;  // n * P * P fused maps when requested
    std::size_t patch_size = 0;
};

inline void append_scores(const Tensor<float>& fused, PatchScores& out, bool keep_maps) {
    for (std::size_t n = 0; n < fused.shape().n; ++n) {
        const PatchScore s = patch_score(fused, n);
        out.mean.push_back(s.mean);
        out.sum.push_back(s.sum);
        if (keep_maps) out.maps.insert(out.maps.end(), fused.plane(n, 0), fused.plane(n, 0) + fused.shape().plane());
    }
}

inline PatchScores score_cached(Model& model, const FeatureCache& cache, bool keep_maps, std::size_t batch = 64) {
    PatchScores out;
    out.patch_size = model.config().input_size;
    for (std::size_t b = 0; b < cache.size(); b += batch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = b; i < std::min(cache.size(), b + batch); ++i) idx.push_back(i);
        append_scores(infer_anomaly_from_features(model, cache.gather(idx)), out, keep_maps);
    }
    return out;
}

inline PatchScores score_patches(Model& model, const std::vector<PatchRecord>& patches, bool keep_maps,
                                 std::size_t batch = 64) {
    PatchScores out;
    out.patch_size = model.config().input_size;
    for (std::size_t b = 0; b < patches.size(); b += batch) {
        std::vector<const ImageU8*> imgs;
        for (std::size_t i = b; i < std::min(patches.size(), b + batch); ++i) imgs.push_back(&patches[i].image);
        append_scores(infer_anomaly(model, to_tensor<float>(imgs, model.norm())), out, keep_maps);
    }
    return out;
}

inline std::vector<int> anomalous_truths(const std::vector<int>& labels) {
    std::vector<int> t;
    for (int y : labels) t.push_back(y == 0 ? 1 : 0);
    return t;
}

inline std::vector<int> labels_of(const std::vector<PatchRecord>& patches) {
    std::vector<int> l;
    for (const auto& p : patches) l.push_back(p.label);
    return l;
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double val_accuracy = 0.0;
    double val_threshold = 0.0;
};

using Snapshot = std::vector<Tensor<float>>;

inline Snapshot snapshot(Model& m) {
    Snapshot s;
    m.visit([&](const std::string&, Tensor<float>& t, bool) { s.push_back(t); });
    return s;
}

inline void restore(Model& m, const Snapshot& s) {
    std::size_t i = 0;
    m.visit([&](const std::string&, Tensor<float>& t, bool) { t = s.at(i++); });
}

struct TrainResult {
    Model model;  // holds the best-validation weights
    std::vector<EpochLog> log;
    std::vector<double> batch_losses;
    std::size_t best_epoch = 0;
    double best_val_accuracy = -1.0;
    double best_threshold = 0.0;
    bool diverged = false;
};

/// Validation accuracy and operating threshold for the current weights.
inline Calibration validate_model(Model& model, const FeatureCache& val, const RunConfig& cfg) {
    const PatchScores ps = score_cached(model, val, false);
    const auto truths = anomalous_truths(val.labels);
    if (cfg.threshold_mode == ThresholdMode::fixed) {
        std::vector<int> pred;
        for (double s : ps.mean) pred.push_back(detect(s, cfg.fixed_threshold) ? 1 : 0);
        return {cfg.fixed_threshold, accuracy(pred, truths)};
    }
    return calibrate_threshold(ps.mean, truths);
}

/// One optimization step on a batch of cached teacher features; returns the loss.
inline double train_step(Model& model, Adam<float>& opt, const std::array<Tensor<float>, kNumScales>& feats,
                         const std::vector<int>& labels, const LossConfig& loss_cfg) {
    MultiScaleFeatures<float> f{Var<float>(feats[0]), Var<float>(feats[1]), Var<float>(feats[2])};
    auto fp = model.reconstruct(f, Mode::train);
    std::vector<Var<float>> maps;
    for (std::size_t s = 0; s < kNumScales; ++s) maps.push_back(clamped_similarity(f[s], fp[s], loss_cfg));
    Var<float> loss = focal_distill_loss(maps, labels, loss_cfg);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) return value;
    opt.zero_grad();
    backward(loss);
    opt.step();
    return value;
}

using ProgressFn = std::function<void(const EpochLog&)>;

/// Trains bottleneck + student, validating after every epoch and keeping the
/// weights with the best validation accuracy (latest epoch on ties).
inline TrainResult train_rd(const RunConfig& cfg, const PretrainedTeacher<float>& teacher, const Dataset& ds,
                            const ProgressFn& progress = {}) {
    cfg.validate();
    TrainResult r;
    r.model = Model(teacher.teacher, teacher.norm, model_seed(cfg));
    Model& model = r.model;
    const FeatureCache train = cache_teacher_features(model, ds.train);
    const FeatureCache val = cache_teacher_features(model, ds.val);
    Adam<float> opt(model.trainable_parameters(), cfg.train.adam);
    std::mt19937_64 rng(shuffle_seed(cfg));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    Snapshot best = snapshot(model);
    for (std::size_t epoch = 1; epoch <= cfg.train.epochs && !r.diverged; ++epoch) {
        Snapshot last_good = snapshot(model);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.train.batch_size) {
            const std::size_t e = std::min(order.size(), b + cfg.train.batch_size);
            if (e - b < 2) continue;  // batch statistics need two samples
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b),
                                         order.begin() + static_cast<std::ptrdiff_t>(e));
            std::vector<int> labels;
            for (auto i : idx) labels.push_back(train.labels[i]);
            double l = 0.0;
            try {
                l = train_step(model, opt, train.gather(idx), labels, cfg.loss);
            } catch (const NonFiniteGradient&) {
                l = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(l)) {
                r.diverged = true;
                restore(model, last_good);
                break;
            }
            r.batch_losses.push_back(l);
            loss_sum += l;
            ++batches;
        }
        if (r.diverged) break;
        const Calibration c = validate_model(model, val, cfg);
        EpochLog log{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, c.accuracy, c.threshold};
        r.log.push_back(log);
        if (progress) progress(log);
        if (c.accuracy >= r.best_val_accuracy) {
            r.best_val_accuracy = c.accuracy;
            r.best_threshold = c.threshold;
            r.best_epoch = epoch;
            best = snapshot(model);
        }
    }
    restore(model, best);
    return r;
}

// ---------------------------------------------------------------------------
// Slide inference

struct TileScore {
    std::size_t x = 0, y = 0;
    double sum = 0.0, mean = 0.0;
};

struct SlideInference {
    std::string slide_id;
    Heatmap heatmap;
    std::vector<TileScore> tiles;
    double score = 0.0;  // max tile mean-score
};

inline SlideInference infer_slide(Model& model, const SyntheticSlide& slide, std::size_t stride,
                                  std::size_t batch = 64) {
    const std::size_t P = model.config().input_size;
    const auto ys = tile_origins(slide.image.height, P, stride);
    const auto xs = tile_origins(slide.image.width, P, stride);
    std::vector<std::pair<std::size_t, std::size_t>> origins;
    for (auto y : ys)
        for (auto x : xs) origins.emplace_back(y, x);

    SlideInference out;
    out.slide_id = slide.slide_id;
    std::vector<PatchMap> maps;
    for (std::size_t b = 0; b < origins.size(); b += batch) {
        std::vector<ImageU8> crops;
        std::vector<const ImageU8*> ptrs;
        const std::size_t e = std::min(origins.size(), b + batch);
        for (std::size_t i = b; i < e; ++i) crops.push_back(slide.image.crop(origins[i].first, origins[i].second, P, P));
        for (const auto& c : crops) ptrs.push_back(&c);
        const Tensor<float> fused = infer_anomaly(model, to_tensor<float>(ptrs, model.norm()));
        for (std::size_t i = b; i < e; ++i) {
            const PatchScore s = patch_score(fused, i - b);
            out.tiles.push_back({origins[i].second, origins[i].first, s.sum, s.mean});
            const float* p = fused.plane(i - b, 0);
            maps.push_back({origins[i].second, origins[i].first, P, std::vector<float>(p, p + P * P)});
        }
    }
    out.heatmap = stitch_heatmap(maps, slide.image.height, slide.image.width);
    std::vector<double> means;
    for (const auto& t : out.tiles) means.push_back(t.mean);
    out.score = slide_score(means);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct MetricRow {
    std::string name;
    std::string split;
    double value = 0.0;
    double threshold = std::numeric_limits<double>::quiet_NaN();
};

/// Best-mIoU threshold over quantiles of the pooled validation pixel values.
inline Calibration calibrate_miou(const std::vector<float>& maps, const std::vector<std::uint8_t>& truth) {
    std::vector<double> sample;
    const std::size_t step = std::max<std::size_t>(1, maps.size() / 200000);
    for (std::size_t i = 0; i < maps.size(); i += step) sample.push_back(maps[i]);
    Calibration best{0.0, -1.0};
    std::vector<std::uint8_t> pred(maps.size());
    for (double t : quantile_grid(sample)) {
        for (std::size_t i = 0; i < maps.size(); ++i) pred[i] = maps[i] > t ? 1 : 0;
        const double m = miou_2class(pred, truth);
        if (m > best.accuracy || (m == best.accuracy && t < best.threshold)) best = {t, m};
    }
    return best;
}

inline std::vector<std::uint8_t> pooled_masks(const std::vector<PatchRecord>& patches) {
    std::vector<std::uint8_t> out;
    for (const auto& p : patches) out.insert(out.end(), p.mask.pixels.begin(), p.mask.pixels.end());
    return out;
}

struct PatchEvaluation {
    double val_threshold = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double patch_auroc = 0.0;
    double pixel_auroc = 0.0;
    double miou = 0.0;
    double miou_threshold = 0.0;
    PatchScores test_scores;
};

/// Scored patches with their labels and lesion masks (pooled, P*P per patch).
struct ScoredSplit {
    PatchScores scores;
    std::vector<int> labels;
    std::vector<std::uint8_t> masks;
};

inline ScoredSplit score_split(Model& model, const std::vector<PatchRecord>& patches) {
    return {score_patches(model, patches, true), labels_of(patches), pooled_masks(patches)};
}

/// Patch-level test metrics with the detection and mIoU thresholds frozen
/// from validation.
inline PatchEvaluation evaluate_scored(const ScoredSplit& val, ScoredSplit test, const RunConfig& cfg) {
    PatchEvaluation ev;
    const auto val_truth = anomalous_truths(val.labels);
    if (cfg.threshold_mode == ThresholdMode::fixed) {
        ev.val_threshold = cfg.fixed_threshold;
        std::vector<int> pred;
        for (double s : val.scores.mean) pred.push_back(detect(s, cfg.fixed_threshold) ? 1 : 0);
        ev.val_accuracy = accuracy(pred, val_truth);
    } else {
        const Calibration c = calibrate_threshold(val.scores.mean, val_truth);
        ev.val_threshold = c.threshold;
        ev.val_accuracy = c.accuracy;
    }
    const Calibration mc = calibrate_miou(val.scores.maps, val.masks);
    ev.miou_threshold = mc.threshold;

    const auto truth = anomalous_truths(test.labels);
    std::vector<int> pred;
    std::vector<ScoredItem> items;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        pred.push_back(detect(test.scores.mean[i], ev.val_threshold) ? 1 : 0);
        items.push_back({test.scores.mean[i], truth[i]});
    }
    ev.test_accuracy = accuracy(pred, truth);
    ev.patch_auroc = auroc(items);
    ev.pixel_auroc =
        pixel_auroc({std::span<const float>(test.scores.maps)}, {std::span<const std::uint8_t>(test.masks)});
    std::vector<std::uint8_t> pm(test.masks.size());
    for (std::size_t i = 0; i < pm.size(); ++i) pm[i] = test.scores.maps[i] > mc.threshold ? 1 : 0;
    ev.miou = miou_2class(pm, test.masks);
    ev.test_scores = std::move(test.scores);
    return ev;
}

inline PatchEvaluation evaluate_patches(Model& model, const Dataset& ds, const RunConfig& cfg) {
    return evaluate_scored(score_split(model, ds.val), score_split(model, ds.test), cfg);
}

struct SlideEvaluation {
    std::vector<SlideInference> slides;
    double slide_auroc = std::numeric_limits<double>::quiet_NaN();
    std::optional<FrocResult> froc;
};

/// Slide AUROC (needs both slide classes) and lesion FROC (needs lesions).
inline SlideEvaluation evaluate_inferred(std::vector<SlideInference> inferred,
                                         const std::vector<const SyntheticSlide*>& slides, std::size_t radius) {
    SlideEvaluation ev;
    std::vector<ScoredItem> items;
    std::vector<SlideCandidates> cands;
    std::size_t positives = 0, lesions = 0;
    for (std::size_t i = 0; i < slides.size(); ++i) {
        items.push_back({inferred[i].score, slides[i]->lesion_count > 0 ? 1 : 0});
        positives += slides[i]->lesion_count > 0;
        cands.push_back({extract_candidates(inferred[i].heatmap, static_cast<double>(radius)),
                         label_lesions(slides[i]->lesion_mask)});
        lesions += cands.back().lesions.count;
    }
    if (positives > 0 && positives < slides.size()) ev.slide_auroc = auroc(items);
    if (lesions > 0) ev.froc = froc(cands);
    ev.slides = std::move(inferred);
    return ev;
}

inline SlideEvaluation evaluate_slides(Model& model, const std::vector<const SyntheticSlide*>& slides,
                                       std::size_t stride) {
    std::vector<SlideInference> inferred;
    for (const auto* s : slides) inferred.push_back(infer_slide(model, *s, stride));
    return evaluate_inferred(std::move(inferred), slides, model.config().input_size);
}

// ---------------------------------------------------------------------------
// Full experiment and ablation

struct ExperimentResult {
    TrainResult training;
    PatchEvaluation patches;
    std::optional<SlideEvaluation> slides;
    std::vector<MetricRow> metrics;
};

inline std::vector<MetricRow> metric_rows(const PatchEvaluation& pe, const SlideEvaluation* se) {
    std::vector<MetricRow> rows{
        {"patch_accuracy", "val", pe.val_accuracy, pe.val_threshold},
        {"patch_accuracy", "test", pe.test_accuracy, pe.val_threshold},
        {"patch_auroc", "test", pe.patch_auroc},
        {"pixel_auroc", "test", pe.pixel_auroc},
        {"miou_2class", "test", pe.miou, pe.miou_threshold},
    };
    if (se) {
        if (!std::isnan(se->slide_auroc)) rows.push_back({"slide_auroc", "test", se->slide_auroc});
        if (se->froc) rows.push_back({"froc_avg_sensitivity", "test", se->froc->avg_sensitivity});
    }
    return rows;
}

/// Dataset -> training -> test evaluation for one (config, seed).
/// `teacher` may be supplied to reuse a pretrained teacher for the same seed.
inline ExperimentResult run_experiment(const RunConfig& cfg, bool with_slides,
                                       const PretrainedTeacher<float>* teacher = nullptr,
                                       const ProgressFn& progress = {}) {
    cfg.validate();
    const Dataset ds = build_dataset(cfg.dataset_spec());
    std::optional<PretrainedTeacher<float>> own;
    if (!teacher) {
        own = pretrain_default_teacher(cfg);
        teacher = &*own;
    }
    ExperimentResult r;
    r.training = train_rd(cfg, *teacher, ds, progress);
    r.patches = evaluate_patches(r.training.model, ds, cfg);
    if (with_slides) r.slides = evaluate_slides(r.training.model, ds.slides_of(Split::test), cfg.infer_stride);
    r.metrics = metric_rows(r.patches, r.slides ? &*r.slides : nullptr);
    return r;
}

struct AblationCell {
    std::string name;
    std::size_t n_tumor = 0;
    std::size_t n_normal = 0;
    LossConfig loss{};
};

/// alpha following the normal / tumor ratio; with no tumor patches only the
/// normal branch remains and alpha is 1.
inline double ratio_alpha(std::size_t n_tumor, std::size_t n_normal) {
    if (n_tumor == 0) return 1.0;
    return static_cast<double>(n_tumor) / static_cast<double>(n_tumor + n_normal);
}

inline AblationCell tumor_count_cell(const RunConfig& base, std::size_t k) {
    AblationCell c{"tumor_" + std::to_string(k), k, base.dataset.n_normal_train, base.loss};
    c.loss.alpha = ratio_alpha(k, c.n_normal);
    return c;
}

inline AblationCell unweighted_cell(const RunConfig& base) {
    AblationCell c{"unweighted_tumor_" + std::to_string(base.dataset.n_tumor_train), base.dataset.n_tumor_train,
                   base.dataset.n_normal_train, base.loss};
    c.loss.alpha = 0.5;
    c.loss.gamma = 0.0;
    return c;
}

inline AblationCell balanced_cell(const RunConfig& base) {
    const std::size_t k = base.dataset.n_tumor_train;
    AblationCell c{"balanced_" + std::to_string(k), k, k, base.loss};
    c.loss.alpha = ratio_alpha(k, k);
    return c;
}

inline std::vector<AblationCell> default_sweep(const RunConfig& base,
                                               const std::vector<std::size_t>& counts = {0, 5, 10, 50, 100}) {
    std::vector<AblationCell> cells;
    for (auto k : counts) cells.push_back(tumor_count_cell(base, k));
    cells.push_back(unweighted_cell(base));
    cells.push_back(balanced_cell(base));
    return cells;
}

inline RunConfig apply_cell(RunConfig cfg, const AblationCell& cell, std::uint64_t seed) {
    cfg.dataset.n_tumor_train = cell.n_tumor;
    cfg.dataset.n_normal_train = cell.n_normal;
    cfg.loss = cell.loss;
    cfg.seed = seed;
    return cfg;
}

/// Standalone run in the original normal-only setting.
inline RunConfig baseline_config(RunConfig cfg) {
    cfg.dataset.n_tumor_train = 0;
    cfg.loss.alpha = 1.0;
    return cfg;
}

// ---------------------------------------------------------------------------
// CSV reports

inline void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows, std::uint64_t seed) {
    CsvWriter w(path, {"name", "split", "value", "threshold", "seed"});
    for (const auto& r : rows)
        w.row({r.name, r.split, fmt_double(r.value), std::isnan(r.threshold) ? "" : fmt_double(r.threshold),
               std::to_string(seed)});
}

inline void write_train_log(const std::string& path, const std::vector<EpochLog>& log) {
    CsvWriter w(path, {"epoch", "loss", "val_accuracy", "val_threshold"});
    for (const auto& e : log)
        w.row({std::to_string(e.epoch), fmt_double(e.loss), fmt_double(e.val_accuracy), fmt_double(e.val_threshold)});
}

inline void write_froc_csv(const std::string& path, const FrocResult& f) {
    CsvWriter w(path, {"threshold", "avg_fp", "sensitivity"});
    for (const auto& p : f.curve) w.row({fmt_double(p.threshold), fmt_double(p.avg_fp), fmt_double(p.sensitivity)});
}

}  // namespace fwrd
