#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fwrd;

namespace {

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

TEST(Raster, FloatRoundTripIsBitExactIncludingNan) {
    std::mt19937_64 rng(1);
    Heatmap h{5, 7, std::vector<float>(35)};
    std::normal_distribution<float> g;
    for (auto& v : h.values) v = g(rng);
    h.values[3] = std::numeric_limits<float>::quiet_NaN();
    h.values[4] = -0.0f;
    h.values[5] = std::numeric_limits<float>::denorm_min();
    const auto back = heatmap_from_raster(decode_raster(encode_raster(to_raster(h))));
    EXPECT_EQ(back.height, 5u);
    EXPECT_EQ(back.width, 7u);
    EXPECT_TRUE(same_bits(back.values, h.values));
}

TEST(Raster, ImageRoundTripThroughFile) {
    SlideParams p;
    p.size = 64;
    p.min_lesion_radius = 4;
    const auto s = generate_slide(2, p);
    const auto dir = fixture::temp_dir("raster");
    write_image(dir + "/a.rdhm", s.image);
    EXPECT_EQ(read_image(dir + "/a.rdhm"), s.image);
    const auto r = read_raster(dir + "/a.rdhm");
    EXPECT_EQ(r.type, RasterType::u8);
    EXPECT_EQ(r.channels, 3u);
}

TEST(Raster, HeaderLayout) {
    Raster r;
    r.type = RasterType::f32;
    r.height = 1;
    r.width = 2;
    r.channels = 1;
    r.f32 = {1.0f, 2.0f};
    const auto bytes = encode_raster(r);
    ASSERT_EQ(bytes.size(), 4u + 2u + 1u + 12u + 8u);
    EXPECT_EQ(bytes.substr(0, 4), "RDHM");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[5], 0);
    EXPECT_EQ(bytes[6], 1);
    EXPECT_EQ(bytes[7], 1);  // height, little-endian
    EXPECT_EQ(bytes[11], 2);
}

TEST(Raster, CorruptInputsRejected) {
    auto bytes = encode_raster(to_raster(ImageU8(2, 2, 1, 7)));
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_raster(bad), RasterError);
    bad = bytes;
    bad[4] = 9;
    try {
        decode_raster(bad);
        FAIL();
    } catch (const RasterError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
    EXPECT_THROW(decode_raster(bytes.substr(0, bytes.size() - 1)), RasterError);
    EXPECT_THROW(decode_raster(bytes + "x"), RasterError);
    EXPECT_THROW(read_raster("/nonexistent/x.rdhm"), RasterError);
}

TEST(Config, RoundTripPreservesEveryField) {
    auto cfg = fixture::micro_config(17);
    cfg.loss.alpha = 0.0909090909090909;
    cfg.loss.gamma = 1.5;
    cfg.train.adam.lr = 3e-4;
    cfg.threshold_mode = ThresholdMode::fixed;
    cfg.fixed_threshold = 1.25;
    cfg.out_dir = "runs/x";
    const auto back = parse_config(serialize_config(cfg));
    EXPECT_TRUE(back == cfg);
    EXPECT_EQ(back.loss.alpha, cfg.loss.alpha);
    EXPECT_EQ(serialize_config(back), serialize_config(cfg));
}

TEST(Config, PartialFileKeepsDefaultsAndUnknownKeysFail) {
    const auto cfg = parse_config("[loss]\ngamma = 3\n[run]\nseed = 4\n");
    EXPECT_EQ(cfg.loss.gamma, 3.0);
    EXPECT_EQ(cfg.seed, 4u);
    EXPECT_EQ(cfg.loss.alpha, LossConfig{}.alpha);
    EXPECT_THROW(parse_config("[loss]\ngama = 3\n"), ConfigError);
    EXPECT_THROW(parse_config("[loss]\ngamma = fast\n"), ConfigError);
    EXPECT_THROW(parse_config("[encoder]\nchannels = 8,16\n"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent.ini"), ConfigError);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
    const auto cfg = fixture::micro_config(3);
    Model m(Teacher<float>(cfg.encoder, teacher_seed(cfg), cfg.teacher.classes), NormStats{{0.1, 0.2, 0.3}, {1, 2, 3}},
            model_seed(cfg));
    m.visit([](const std::string&, Tensor<float>& t, bool) {
        for (auto& v : t.vec()) v += 0.125f;
    });
    const auto ck = make_model_checkpoint(m, cfg, 7, 0.8125, 1.5);
    const auto dir = fixture::temp_dir("ckpt");
    save_checkpoint(dir + "/m.ckpt", ck);
    const auto loaded = load_checkpoint(dir + "/m.ckpt");
    EXPECT_EQ(loaded.epoch, 7u);
    EXPECT_EQ(loaded.val_accuracy, 0.8125);
    EXPECT_EQ(loaded.val_threshold, 1.5);
    EXPECT_TRUE(loaded.config == cfg);
    Model r = restore_model(loaded);
    std::vector<std::vector<float>> a, b;
    m.visit([&](const std::string&, Tensor<float>& t, bool) { a.push_back(t.vec()); });
    r.visit([&](const std::string&, Tensor<float>& t, bool) { b.push_back(t.vec()); });
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_bits(a[i], b[i])) << i;
    EXPECT_EQ(r.norm().std, (std::vector<double>{1, 2, 3}));
    EXPECT_TRUE(r.teacher().frozen());
    EXPECT_EQ(encode_checkpoint(make_model_checkpoint(r, cfg, 7, 0.8125, 1.5)), encode_checkpoint(ck));
}

TEST(Checkpoint, VersionMismatchKindAndCorruptionRejected) {
    const auto cfg = fixture::micro_config();
    Model m(Teacher<float>(cfg.encoder, 1, cfg.teacher.classes), NormStats{}, 2);
    auto bytes = encode_checkpoint(make_model_checkpoint(m, cfg, 0, 0.0, 0.0));
    auto bad = bytes;
    bad[4] = 2;
    try {
        decode_checkpoint(bad);
        FAIL();
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos);
    }
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    EXPECT_THROW(decode_checkpoint(bytes + "z"), CheckpointError);
    EXPECT_THROW(decode_checkpoint("RDCX"), CheckpointError);

    PretrainedTeacher<float> t{Teacher<float>(cfg.encoder, 1, cfg.teacher.classes), NormStats{}, 1, 0.5};
    const auto tck = make_teacher_checkpoint(t, cfg);
    EXPECT_THROW(restore_model(tck), CheckpointError);
    EXPECT_NO_THROW(restore_teacher(tck));
    auto wrong = fixture::micro_config();
    wrong.encoder.channels = {8, 16, 48};
    auto ck = decode_checkpoint(bytes);
    ck.config = wrong;
    EXPECT_THROW(restore_model(ck), CheckpointError);
}

TEST(DatasetIo, WriteReadPreservesPatchesAndMasks) {
    const auto ds = build_dataset(fixture::micro_config(6).dataset_spec());
    const auto dir = fixture::temp_dir("dsio");
    write_dataset(ds, dir);
    const auto back = read_dataset(dir);
    ASSERT_EQ(back.slides.size(), ds.slides.size());
    for (Split s : {Split::train, Split::val, Split::test}) {
        ASSERT_EQ(back.patches(s).size(), ds.patches(s).size());
        for (std::size_t i = 0; i < ds.patches(s).size(); ++i) {
            const auto& a = ds.patches(s)[i];
            const auto& b = back.patches(s)[i];
            EXPECT_EQ(a.image, b.image);
            EXPECT_EQ(a.mask, b.mask);
            EXPECT_EQ(a.label, b.label);
            EXPECT_EQ(a.slide_id, b.slide_id);
        }
    }
    for (std::size_t i = 0; i < ds.slides.size(); ++i) {
        EXPECT_EQ(back.slides[i].lesion_mask, ds.slides[i].lesion_mask);
        EXPECT_EQ(back.slide_split[i], ds.slide_split[i]);
    }
}

TEST(Csv, NumbersRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 12345678.9})
        EXPECT_EQ(parse_double_field(fmt_double(v)), v);
    EXPECT_TRUE(std::isnan(parse_double_field(fmt_double(std::nan("")))));
    EXPECT_THROW(parse_double_field("1.5x"), IoError);
    EXPECT_EQ(split_fields("a,b,", ','), (std::vector<std::string>{"a", "b", ""}));
}

}  // namespace
