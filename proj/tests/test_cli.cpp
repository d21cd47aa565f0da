#include <gtest/gtest.h>

#include <chrono>
#include <regex>

#include "cli_runner.hpp"

using namespace fwrd;
using fixture::run_cli;
using fixture::slurp;

namespace {

const std::regex kErrorLine(R"(fwrd-error verb=[a-z-]+ kind=[a-z]+ message="[^\n]*"\n)");

TEST(Cli, MicroPipelineProducesAllArtifacts) {
    const auto dir = fixture::temp_dir("cli_pipeline");
    const auto start = std::chrono::steady_clock::now();
    const auto r = fixture::run_pipeline(dir, 1);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 120.0);
    for (const char* f : {"data/manifest.tsv", "data/config.ini", "train/best.ckpt", "train/train_log.csv",
                          "infer/patch_scores.csv", "infer/slide_scores.csv", "infer/patch_maps_test.rdhm",
                          "eval/metrics.csv", "eval/froc.csv"})
        EXPECT_TRUE(fs::exists(dir + "/" + f)) << f;
    const auto metrics = slurp(dir + "/eval/metrics.csv");
    EXPECT_EQ(metrics.rfind("name,split,value,threshold,seed\n", 0), 0u);
    for (const char* m : {"patch_accuracy,test", "patch_auroc,test", "pixel_auroc,test", "miou_2class,test",
                          "slide_auroc,test", "froc_avg_sensitivity,test"})
        EXPECT_NE(metrics.find(m), std::string::npos) << m;
    const auto ck = load_checkpoint(dir + "/train/best.ckpt");
    EXPECT_EQ(ck.kind, CheckpointKind::model);
    EXPECT_LE(ck.epoch, 2u);
}

TEST(Cli, SameSeedGivesIdenticalManifestAndLog) {
    const auto a = fixture::temp_dir("cli_det_a"), b = fixture::temp_dir("cli_det_b");
    for (const auto& d : {a, b}) {
        const auto cfg = fixture::write_micro_config(d, 5);
        ASSERT_EQ(run_cli("build-dataset --config " + cfg + " --out " + d + "/data", d).code, 0);
        const auto r = run_cli("train --config " + cfg + " --data " + d + "/data --out " + d + "/train", d);
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(a + "/data/manifest.tsv"), slurp(b + "/data/manifest.tsv"));
    EXPECT_EQ(slurp(a + "/train/train_log.csv"), slurp(b + "/train/train_log.csv"));
    const auto ca = load_checkpoint(a + "/train/best.ckpt"), cb = load_checkpoint(b + "/train/best.ckpt");
    EXPECT_EQ(ca.epoch, cb.epoch);
    EXPECT_EQ(ca.val_accuracy, cb.val_accuracy);
    EXPECT_EQ(ca.val_threshold, cb.val_threshold);
    Model ma = restore_model(ca), mb = restore_model(cb);
    EXPECT_EQ(checksum(ma.trainable_parameters()), checksum(mb.trainable_parameters()));
    EXPECT_EQ(checksum(ma.teacher_parameters()), checksum(mb.teacher_parameters()));
}

TEST(Cli, BuildDatasetReportsCountsAndHash) {
    const auto d = fixture::temp_dir("cli_build");
    const auto r = run_cli("build-dataset --config " + fixture::write_micro_config(d) + " --out " + d, d);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("split=train slides=2 normal=24 tumor=8"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("split=test slides=2 normal=16 tumor=16"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("manifest_hash="), std::string::npos);
}

TEST(Cli, FailuresPrintOneParsableLine) {
    const auto d = fixture::temp_dir("cli_errors");
    struct Case {
        std::string args;
        int code;
        std::string kind;
    };
    std::ofstream(d + "/bad.ini") << "[loss]\nwhatever = 1\n";
    std::ofstream(d + "/junk.ckpt") << "not a checkpoint";
    std::ofstream(d + "/infeasible.ini") << "[dataset]\nslide_size = 64\nlesion_fraction_max = 0.01\n";
    const std::vector<Case> cases{
        {"", 2, "usage"},
        {"train --bogus", 2, "usage"},
        {"train --config " + d + "/bad.ini", 3, "config"},
        {"train --config " + d + "/missing.ini", 3, "config"},
        {"infer --checkpoint " + d + "/junk.ckpt --data " + d, 4, "checkpoint"},
        {"eval --scores " + d + "/none --data " + d + "/none --out " + d, 4, "input"},
        {"build-dataset --config " + d + "/infeasible.ini --out " + d + "/x", 5, "invalid"},
    };
    for (const auto& c : cases) {
        const auto r = run_cli(c.args, d);
        EXPECT_EQ(r.code, c.code) << c.args << "\n" << r.err;
        std::smatch m;
        const auto last = r.err.substr(r.err.rfind("fwrd-error") == std::string::npos ? 0 : r.err.rfind("fwrd-error"));
        EXPECT_TRUE(std::regex_match(last, m, kErrorLine)) << c.args << "\n" << r.err;
        EXPECT_NE(last.find("kind=" + c.kind), std::string::npos) << c.args << "\n" << r.err;
    }
}

TEST(Cli, EmptySlideListIsANoOp) {
    const auto d = fixture::temp_dir("cli_empty");
    const auto cfg = fixture::write_micro_config(d);
    ASSERT_EQ(run_cli("build-dataset --config " + cfg + " --out " + d + "/data", d).code, 0);
    RunConfig c = fixture::micro_config();
    Model m(Teacher<float>(c.encoder, teacher_seed(c), c.teacher.classes), NormStats{}, model_seed(c));
    save_checkpoint(d + "/m.ckpt", make_model_checkpoint(m, c, 0, 0.5, 1.0));
    const auto r = run_cli("infer --checkpoint " + d + "/m.ckpt --data " + d + "/data --slides '' --out " + d + "/inf", d);
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("slides=0"), std::string::npos);
    EXPECT_FALSE(fs::exists(d + "/inf/slide_scores.csv"));
}

}  // namespace
