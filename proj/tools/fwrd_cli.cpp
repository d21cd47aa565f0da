// fwrd: dataset building, teacher pretraining, RD training, inference,
// evaluation and ablation sweeps from the command line.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fwrd/fwrd.hpp"

namespace fs = std::filesystem;
using namespace fwrd;

namespace {

struct Failure : std::runtime_error {
    Failure(std::string kind, const std::string& msg, int code) : std::runtime_error(msg), kind(std::move(kind)), code(code) {}
    std::string kind;
    int code;
};

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "INI run configuration (defaults when omitted)");
    cmd->add_option("--seed", c.seed, "Master seed; overrides the config");
    cmd->add_option("--out", c.out, "Output directory; overrides the config");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); }

void log(const std::string& msg) { std::cerr << msg << '\n'; }

Dataset load_or_build(const RunConfig& cfg, const std::string& data_dir) {
    if (!data_dir.empty()) return read_dataset(data_dir);
    log("building dataset in memory (seed " + std::to_string(cfg.seed) + ")");
    return build_dataset(cfg.dataset_spec());
}

PretrainedTeacher<float> load_or_pretrain(const RunConfig& cfg, const std::string& teacher_path) {
    if (!teacher_path.empty()) return restore_teacher(load_checkpoint(teacher_path));
    log("pretraining teacher");
    return pretrain_default_teacher(cfg);
}

// ---------------------------------------------------------------------------

int cmd_build_dataset(const Common& c) {
    const RunConfig cfg = resolve(c);
    const Dataset ds = build_dataset(cfg.dataset_spec());
    write_dataset(ds, cfg.out_dir);
    save_config(out_path(cfg, "config.ini"), cfg);
    for (Split s : {Split::train, Split::val, Split::test}) {
        std::size_t normal = 0, tumor = 0;
        for (const auto& p : ds.patches(s)) (p.label == 1 ? normal : tumor)++;
        std::cout << "split=" << split_name(s) << " slides=" << ds.slides_of(s).size() << " normal=" << normal
                  << " tumor=" << tumor << '\n';
    }
    std::cout << "manifest_hash=" << std::hex << file_hash(out_path(cfg, "manifest.tsv")) << std::dec << '\n';
    return 0;
}

int cmd_pretrain_teacher(const Common& c) {
    const RunConfig cfg = resolve(c);
    auto t = pretrain_default_teacher(cfg);
    save_checkpoint(out_path(cfg, "teacher.ckpt"), make_teacher_checkpoint(t, cfg));
    std::cout << "teacher_train_accuracy=" << fmt_double(t.final_train_accuracy) << '\n';
    return 0;
}

int cmd_train(const Common& c, const std::string& data_dir, const std::string& teacher_path) {
    const RunConfig cfg = resolve(c);
    const Dataset ds = load_or_build(cfg, data_dir);
    const auto teacher = load_or_pretrain(cfg, teacher_path);
    auto r = train_rd(cfg, teacher, ds, [](const EpochLog& e) {
        log("epoch " + std::to_string(e.epoch) + " loss " + fmt_double(e.loss) + " val_accuracy " +
            fmt_double(e.val_accuracy) + " val_threshold " + fmt_double(e.val_threshold));
    });
    write_train_log(out_path(cfg, "train_log.csv"), r.log);
    save_config(out_path(cfg, "config.ini"), cfg);
    save_checkpoint(out_path(cfg, "best.ckpt"),
                    make_model_checkpoint(r.model, cfg, r.best_epoch, r.best_val_accuracy, r.best_threshold));
    std::cout << "best_epoch=" << r.best_epoch << " val_accuracy=" << fmt_double(r.best_val_accuracy)
              << " val_threshold=" << fmt_double(r.best_threshold) << '\n';
    if (r.diverged)
        throw Failure("diverged", "non-finite loss after epoch " + std::to_string(r.log.size()) +
                                      "; kept last good checkpoint " + out_path(cfg, "best.ckpt"), 6);
    return 0;
}

void write_patch_scores(CsvWriter& w, const std::string& split, const std::vector<PatchRecord>& patches,
                        const PatchScores& s) {
    for (std::size_t i = 0; i < patches.size(); ++i)
        w.row({split, patches[i].slide_id, std::to_string(patches[i].x), std::to_string(patches[i].y),
               std::to_string(patches[i].label), fmt_double(s.sum[i]), fmt_double(s.mean[i])});
}

void write_patch_maps(const std::string& path, const PatchScores& s) {
    Raster r;
    r.type = RasterType::f32;
    r.height = static_cast<std::uint32_t>(s.mean.size() * s.patch_size);
    r.width = static_cast<std::uint32_t>(s.patch_size);
    r.channels = 1;
    r.f32 = s.maps;
    write_raster(path, r);
}

int cmd_infer(const Common& c, const std::string& ckpt_path, const std::string& data_dir, const std::string& split,
              const std::optional<std::string>& slide_list) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    RunConfig cfg = c.config.empty() ? ck.config : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.out.empty()) cfg.out_dir = c.out;
    fs::create_directories(cfg.out_dir);
    const Dataset ds = read_dataset(data_dir);

    std::vector<const SyntheticSlide*> slides = ds.slides_of(parse_split(split));
    if (slide_list) {
        slides.clear();
        for (const auto& id : split_fields(*slide_list, ',')) {
            if (id.empty()) continue;
            const auto* s = ds.find_slide(id);
            if (!s) throw Failure("input", "unknown slide id " + id, 4);
            slides.push_back(s);
        }
        if (slides.empty()) {
            std::cout << "slides=0\n";
            return 0;
        }
    }
    Model model = restore_model(ck);

    CsvWriter pw(out_path(cfg, "patch_scores.csv"), {"split", "slide_id", "x", "y", "label", "sum", "mean"});
    for (Split s : {Split::val, Split::test}) {
        const PatchScores ps = score_patches(model, ds.patches(s), true);
        write_patch_scores(pw, split_name(s), ds.patches(s), ps);
        write_patch_maps(out_path(cfg, std::string("patch_maps_") + split_name(s) + ".rdhm"), ps);
    }

    fs::create_directories(fs::path(cfg.out_dir) / "heatmaps");
    CsvWriter sw(out_path(cfg, "slide_scores.csv"), {"slide_id", "score", "lesion_count"});
    CsvWriter tw(out_path(cfg, "tile_scores.csv"), {"slide_id", "x", "y", "sum", "mean"});
    for (const auto* s : slides) {
        const SlideInference inf = infer_slide(model, *s, cfg.infer_stride);
        write_heatmap((fs::path(cfg.out_dir) / "heatmaps" / (s->slide_id + ".rdhm")).string(), inf.heatmap);
        sw.row({s->slide_id, fmt_double(inf.score), std::to_string(s->lesion_count)});
        for (const auto& t : inf.tiles)
            tw.row({s->slide_id, std::to_string(t.x), std::to_string(t.y), fmt_double(t.sum), fmt_double(t.mean)});
        log("inferred " + s->slide_id + " score " + fmt_double(inf.score));
    }
    std::cout << "slides=" << slides.size() << " checkpoint_val_threshold=" << fmt_double(ck.val_threshold) << '\n';
    return 0;
}

ScoredSplit read_scored(const std::string& dir, const std::string& split, const Dataset& ds) {
    ScoredSplit out;
    std::size_t n = 0;
    for (const auto& r : read_table((fs::path(dir) / "patch_scores.csv").string(), ',', true)) {
        if (r.size() != 7) throw Failure("input", "patch_scores.csv: expected 7 columns", 4);
        if (r[0] != split) continue;
        out.labels.push_back(std::stoi(r[4]));
        out.scores.sum.push_back(parse_double_field(r[5]));
        out.scores.mean.push_back(parse_double_field(r[6]));
        ++n;
    }
    const Split sp = parse_split(split);
    const auto& patches = ds.patches(sp);
    if (patches.size() != n) throw Failure("input", "patch_scores.csv does not match the " + split + " manifest", 4);
    out.masks = pooled_masks(patches);
    const Raster maps = read_raster((fs::path(dir) / ("patch_maps_" + split + ".rdhm")).string());
    out.scores.maps = maps.f32;
    out.scores.patch_size = maps.width;
    return out;
}

int cmd_eval(const Common& c, const std::string& scores_dir, const std::string& data_dir) {
    const RunConfig cfg = resolve(c);
    const Dataset ds = read_dataset(data_dir);
    std::vector<MetricRow> rows;

    const PatchEvaluation pe = evaluate_scored(read_scored(scores_dir, "val", ds), read_scored(scores_dir, "test", ds), cfg);

    std::optional<SlideEvaluation> se;
    const fs::path slide_csv = fs::path(scores_dir) / "slide_scores.csv";
    if (fs::exists(slide_csv)) {
        std::vector<SlideInference> inferred;
        std::vector<const SyntheticSlide*> slides;
        for (const auto& r : read_table(slide_csv.string(), ',', true)) {
            const auto* s = ds.find_slide(r.at(0));
            if (!s) {
                log("warning: no ground truth for slide " + r.at(0) + "; skipped");
                continue;
            }
            SlideInference inf;
            inf.slide_id = r[0];
            inf.score = parse_double_field(r.at(1));
            inf.heatmap = read_heatmap((fs::path(scores_dir) / "heatmaps" / (r[0] + ".rdhm")).string());
            inferred.push_back(std::move(inf));
            slides.push_back(s);
        }
        if (!slides.empty()) se = evaluate_inferred(std::move(inferred), slides, cfg.encoder.input_size);
    }
    if (!se) log("warning: no slide heatmaps; slide_auroc and froc skipped");
    else if (std::isnan(se->slide_auroc)) log("warning: slides of one class only; slide_auroc skipped");
    if (se && !se->froc) log("warning: no lesions in evaluated slides; froc skipped");

    rows = metric_rows(pe, se ? &*se : nullptr);
    write_metrics_csv(out_path(cfg, "metrics.csv"), rows, cfg.seed);
    if (se && se->froc) write_froc_csv(out_path(cfg, "froc.csv"), *se->froc);
    for (const auto& r : rows) std::cout << r.name << ',' << r.split << ',' << fmt_double(r.value) << '\n';
    return 0;
}

int cmd_ablate(const Common& c, std::size_t n_seeds, const std::vector<std::size_t>& counts) {
    const RunConfig base = resolve(c);
    const auto cells = default_sweep(base, counts);
    std::map<std::uint64_t, PretrainedTeacher<float>> teachers;
    CsvWriter runs(out_path(base, "ablation_runs.csv"),
                   {"cell", "seed", "n_tumor", "n_normal", "alpha", "gamma", "status", "test_accuracy", "patch_auroc",
                    "val_accuracy"});
    struct Acc {
        std::vector<double> values;
    };
    std::vector<Acc> acc(cells.size());
    for (std::size_t k = 0; k < n_seeds; ++k) {
        const std::uint64_t seed = base.seed + k;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const RunConfig cfg = apply_cell(base, cells[i], seed);
            std::vector<std::string> row{cells[i].name, std::to_string(seed), std::to_string(cells[i].n_tumor),
                                         std::to_string(cells[i].n_normal), fmt_double(cells[i].loss.alpha),
                                         fmt_double(cells[i].loss.gamma)};
            try {
                if (!teachers.count(seed)) teachers.emplace(seed, pretrain_default_teacher(cfg));
                const auto r = run_experiment(cfg, false, &teachers.at(seed));
                if (r.training.diverged) throw std::runtime_error("diverged");
                acc[i].values.push_back(r.patches.test_accuracy);
                row.insert(row.end(), {"ok", fmt_double(r.patches.test_accuracy), fmt_double(r.patches.patch_auroc),
                                       fmt_double(r.patches.val_accuracy)});
                log(cells[i].name + " seed " + std::to_string(seed) + " accuracy " +
                    fmt_double(r.patches.test_accuracy));
            } catch (const std::exception& e) {
                row.insert(row.end(), {"failed", "", "", ""});
                log("warning: cell " + cells[i].name + " seed " + std::to_string(seed) + " failed: " + e.what());
            }
            runs.row(row);
        }
    }
    CsvWriter rep(out_path(base, "ablation_report.csv"),
                  {"cell", "n_tumor", "n_normal", "alpha", "gamma", "runs_ok", "mean_accuracy", "spread"});
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& v = acc[i].values;
        double mean = std::numeric_limits<double>::quiet_NaN(), spread = mean;
        if (!v.empty()) {
            mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            spread = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        }
        rep.row({cells[i].name, std::to_string(cells[i].n_tumor), std::to_string(cells[i].n_normal),
                 fmt_double(cells[i].loss.alpha), fmt_double(cells[i].loss.gamma), std::to_string(v.size()),
                 fmt_double(mean), fmt_double(spread)});
        std::cout << cells[i].name << ' ' << fmt_double(mean) << " +/- " << fmt_double(spread) << '\n';
    }
    return 0;
}

std::string one_line(std::string s) {
    for (char& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    for (std::size_t p = 0; (p = s.find('"', p)) != std::string::npos; p += 2) s.replace(p, 1, "\\\"");
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot reverse distillation for tumor localization"};
    app.require_subcommand(1);

    Common c;
    std::string data_dir, teacher_path, ckpt_path, scores_dir, split = "test";
    std::optional<std::string> slide_list;
    std::size_t n_seeds = 3;
    std::vector<std::size_t> counts{0, 5, 10, 50, 100};

    auto* build = app.add_subcommand("build-dataset", "Generate slides and write manifest + patch rasters");
    add_common(build, c);

    auto* pretrain = app.add_subcommand("pretrain-teacher", "Pretrain and freeze the teacher encoder");
    add_common(pretrain, c);

    auto* train = app.add_subcommand("train", "Train bottleneck + student; keep the best validation checkpoint");
    add_common(train, c);
    train->add_option("--data", data_dir, "Dataset directory from build-dataset (built in memory when omitted)");
    train->add_option("--teacher", teacher_path, "Teacher checkpoint from pretrain-teacher");

    auto* infer = app.add_subcommand("infer", "Anomaly maps, heatmaps and scores from a checkpoint");
    add_common(infer, c);
    infer->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
    infer->add_option("--data", data_dir, "Dataset directory")->required();
    infer->add_option("--split", split, "Slides to tile: train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    infer->add_option("--slides", slide_list, "Comma-separated slide ids (empty list: nothing to do)");

    auto* eval = app.add_subcommand("eval", "Metrics CSV from inference outputs");
    add_common(eval, c);
    eval->add_option("--scores", scores_dir, "Directory written by infer")->required();
    eval->add_option("--data", data_dir, "Dataset directory")->required();

    auto* ablate = app.add_subcommand("ablate", "Tumor-count, weighting and balanced-downsampling sweep");
    add_common(ablate, c);
    ablate->add_option("--seeds", n_seeds, "Seeds per cell (seed, seed+1, ...)")->check(CLI::PositiveNumber);
    ablate->add_option("--counts", counts, "Tumor patch counts")->delimiter(',');

    std::string verb = "fwrd";
    try {
        app.parse(argc, argv);
        verb = app.get_subcommands().front()->get_name();
        if (*build) return cmd_build_dataset(c);
        if (*pretrain) return cmd_pretrain_teacher(c);
        if (*train) return cmd_train(c, data_dir, teacher_path);
        if (*infer) return cmd_infer(c, ckpt_path, data_dir, split, slide_list);
        if (*eval) return cmd_eval(c, scores_dir, data_dir);
        if (*ablate) return cmd_ablate(c, n_seeds, counts);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=usage message=\"" << one_line(e.what()) << "\"\n";
        return 2;
    } catch (const Failure& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=" << e.kind << " message=\"" << one_line(e.what()) << "\"\n";
        return e.code;
    } catch (const ConfigError& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=config message=\"" << one_line(e.what()) << "\"\n";
        return 3;
    } catch (const CheckpointError& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=checkpoint message=\"" << one_line(e.what()) << "\"\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=input message=\"" << one_line(e.what()) << "\"\n";
        return 4;
    } catch (const RasterError& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=input message=\"" << one_line(e.what()) << "\"\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=invalid message=\"" << one_line(e.what()) << "\"\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "fwrd-error verb=" << verb << " kind=runtime message=\"" << one_line(e.what()) << "\"\n";
        return 1;
    }
    return 0;
}
