#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fwrd;

namespace {

EncoderConfig default_encoder() { return EncoderConfig{}; }

TEST(Encoder, ConfigValidation) {
    EncoderConfig c;
    EXPECT_NO_THROW(c.validate());
    c.channels = {16, 16, 32};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = EncoderConfig{};
    c.input_size = 60;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Teacher, FeatureShapes) {
    Teacher<float> t(default_encoder(), 1);
    Tensor<float> x({1, 3, 64, 64}, 0.1f);
    const auto f = t.features(x);
    EXPECT_EQ(f[0].shape(), (Shape{1, 16, 32, 32}));
    EXPECT_EQ(f[1].shape(), (Shape{1, 32, 16, 16}));
    EXPECT_EQ(f[2].shape(), (Shape{1, 64, 8, 8}));
    EXPECT_THROW(t.features(Tensor<float>({1, 3, 32, 32})), ShapeError);
}

TEST(Teacher, IdenticalPatchesGiveIdenticalRowsAndRepeatCallsAreBitIdentical) {
    Teacher<float> t(default_encoder(), 2);
    std::mt19937_64 rng(1);
    const auto one = oracle::random_tensor<float>({1, 3, 64, 64}, rng);
    Tensor<float> two({2, 3, 64, 64});
    std::copy(one.data(), one.data() + one.numel(), two.data());
    std::copy(one.data(), one.data() + one.numel(), two.data() + one.numel());
    const auto f = t.features(two);
    for (std::size_t s = 0; s < kNumScales; ++s) {
        const std::size_t half = f[s].numel() / 2;
        EXPECT_TRUE(std::equal(f[s].data(), f[s].data() + half, f[s].data() + half));
    }
    EXPECT_EQ(t.features(one)[2].vec(), t.features(one)[2].vec());
}

TEST(Model, MirrorShapesAndBottleneckCode) {
    Model m(Teacher<float>(default_encoder(), 1), NormStats{}, 2);
    std::mt19937_64 rng(3);
    const auto f = m.teacher_forward(oracle::random_tensor<float>({1, 3, 64, 64}, rng));
    const auto psi = m.bottleneck_forward(f, Mode::eval);
    EXPECT_EQ(psi.shape(), (Shape{1, 64, 8, 8}));
    const auto fp = m.student_forward(psi, Mode::eval);
    for (std::size_t s = 0; s < kNumScales; ++s) EXPECT_EQ(fp[s].shape(), f[s].shape());
}

TEST(Model, ZeroFeaturesGiveFiniteCode) {
    Model m(Teacher<float>(default_encoder(), 1), NormStats{}, 2);
    MultiScaleFeatures<float> f{Var<float>(Tensor<float>({1, 16, 32, 32})), Var<float>(Tensor<float>({1, 32, 16, 16})),
                                Var<float>(Tensor<float>({1, 64, 8, 8}))};
    EXPECT_TRUE(m.bottleneck_forward(f, Mode::eval).value().all_finite());
}

TEST(Model, GradientReachesStudentAndBottleneckOnly) {
    const auto cfg = fixture::micro_config();
    Model m(Teacher<float>(cfg.encoder, 1), NormStats{}, 2);
    std::mt19937_64 rng(4);
    const auto f = m.teacher_forward(oracle::random_tensor<float>({4, 3, 32, 32}, rng));
    const auto fp = m.reconstruct(f, Mode::train);
    std::vector<Var<float>> maps;
    for (std::size_t s = 0; s < kNumScales; ++s) maps.push_back(clamped_similarity(f[s], fp[s], cfg.loss));
    backward(focal_distill_loss(maps, {1, 0, 1, 1}, cfg.loss));
    for (const auto& p : m.trainable_parameters()) {
        ASSERT_TRUE(p.has_grad()) << p.name();
        EXPECT_TRUE(p.grad().all_finite()) << p.name();
    }
    float bottleneck_max = 0.f;
    for (const auto& p : m.trainable_parameters())
        if (p.name().rfind("bottleneck.", 0) == 0)
            for (float g : p.grad().vec()) bottleneck_max = std::max(bottleneck_max, std::abs(g));
    EXPECT_GT(bottleneck_max, 0.f);
    for (const auto& p : m.teacher_parameters()) EXPECT_FALSE(p.has_grad()) << p.name();
}

TEST(Model, TeacherFrozenAcrossHundredTrainingSteps) {
    const auto cfg = fixture::micro_config();
    Model m(Teacher<float>(cfg.encoder, 1), NormStats{}, 2);
    const auto before = checksum(m.teacher_parameters());
    Adam<float> opt(m.trainable_parameters(), cfg.train.adam);
    std::mt19937_64 rng(5);
    for (int step = 0; step < 100; ++step) {
        const auto f = m.teacher_forward(oracle::random_tensor<float>({2, 3, 32, 32}, rng));
        std::array<Tensor<float>, kNumScales> feats{f[0].value(), f[1].value(), f[2].value()};
        train_step(m, opt, feats, {1, step % 2}, cfg.loss);
    }
    EXPECT_EQ(checksum(m.teacher_parameters()), before);
    EXPECT_TRUE(m.teacher().frozen());
}

TEST(Model, UntrainedStudentCosineNearZero) {
    const auto slide = generate_slide(7, SlideParams{});
    std::vector<const ImageU8*> patches;
    std::vector<ImageU8> crops;
    for (std::size_t i = 0; i < 8; ++i) crops.push_back(slide.image.crop(100 * i, 50 * i, 64, 64));
    for (const auto& c : crops) patches.push_back(&c);
    const auto x = to_tensor<float>(patches, NormStats{});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Model m(Teacher<float>(default_encoder(), 100 + seed), NormStats{}, 200 + seed);
        const auto f = m.teacher_forward(x);
        const auto sims = raw_similarity(f, m.reconstruct(f, Mode::eval));
        double mean = 0.0;
        std::size_t n = 0;
        for (const auto& s : sims)
            for (float v : s.vec()) {
                mean += v;
                ++n;
            }
        EXPECT_LT(std::abs(mean / static_cast<double>(n)), 0.3) << seed;
    }
}

TEST(Pretrain, TwoTextureClassesHeldOutAccuracy) {
    auto [images, labels] = make_texture_dataset(200, 2, 64, 77);
    std::vector<ImageU8> train_x, test_x;
    std::vector<int> train_y, test_y;
    for (std::size_t i = 0; i < images.size(); ++i) {
        // every fourth image of each class is held out
        if ((i / 2) % 4 == 3) {
            test_x.push_back(images[i]);
            test_y.push_back(labels[i]);
        } else {
            train_x.push_back(images[i]);
            train_y.push_back(labels[i]);
        }
    }
    auto t = pretrain_teacher<float>(train_x, train_y, default_encoder(), 3);
    const auto pred = teacher_predict(t.teacher, t.norm, test_x);
    EXPECT_GE(accuracy(pred, test_y), 0.95);
    EXPECT_TRUE(t.teacher.frozen());
    for (const auto& p : t.teacher.parameters(true)) EXPECT_FALSE(p.requires_grad());
}

TEST(Pretrain, DeterministicGivenSeed) {
    auto [images, labels] = make_texture_dataset(12, 3, 32, 5);
    EncoderConfig ec = fixture::micro_config().encoder;
    PretrainConfig pc;
    pc.epochs = 2;
    auto a = pretrain_teacher<float>(images, labels, ec, 9, pc);
    auto b = pretrain_teacher<float>(images, labels, ec, 9, pc);
    EXPECT_EQ(checksum(a.teacher.parameters(true)), checksum(b.teacher.parameters(true)));
    auto c = pretrain_teacher<float>(images, labels, ec, 10, pc);
    EXPECT_NE(checksum(a.teacher.parameters(true)), checksum(c.teacher.parameters(true)));
}

TEST(Pretrain, SingleClassRejected) {
    auto [images, labels] = make_texture_dataset(4, 2, 32, 5);
    std::fill(labels.begin(), labels.end(), 0);
    EXPECT_THROW(pretrain_teacher<float>(images, labels, fixture::micro_config().encoder, 1), std::invalid_argument);
}

TEST(Anomaly, MapsAndFusion) {
    Tensor<float> s({1, 1, 1, 2}, std::vector<float>{0.2f, 0.9f});
    const auto a = anomaly_maps<float>({s});
    EXPECT_FLOAT_EQ(a[0][0], 0.8f);
    EXPECT_FLOAT_EQ(a[0][1], 0.1f);
    std::vector<AnomalyMap<float>> consts{Tensor<float>({1, 1, 8, 8}, 0.5f), Tensor<float>({1, 1, 4, 4}, 0.25f),
                                          Tensor<float>({1, 1, 2, 2}, 1.0f)};
    for (float v : std::vector<float>(fuse_maps(consts, 16).vec())) EXPECT_FLOAT_EQ(v, 1.75f);
    const Tensor<float> same({1, 1, 16, 16}, 0.3f);
    EXPECT_EQ(fuse_maps<float>({same}, 16).vec(), same.vec());
}

TEST(Anomaly, BilinearAlignCorners) {
    Tensor<double> m({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1});
    const auto u = upsample_bilinear(m, 4, 4);
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 1; x < 4; ++x) EXPECT_GT(u.at(0, 0, y, x), u.at(0, 0, y, x - 1));
        EXPECT_EQ(u.at(0, 0, y, 0), 0.0);
        EXPECT_EQ(u.at(0, 0, y, 3), 1.0);
    }
}

TEST(Anomaly, PatchScore) {
    EXPECT_EQ(patch_score(Tensor<float>({1, 1, 4, 4})).sum, 0.0);
    const auto s = patch_score(Tensor<float>({1, 1, 64, 64}, 0.5f));
    EXPECT_EQ(s.sum, 2048.0);
    EXPECT_EQ(s.mean, 0.5);
    Tensor<float> t({1, 1, 4, 4}, 0.1f);
    const double base = patch_score(t).sum;
    t.at(0, 0, 2, 1) += 0.01f;
    EXPECT_GT(patch_score(t).sum, base);
}

TEST(Training, NormalOnlyRaisesMeanSimilarity) {
    auto cfg = fixture::micro_config(3);
    cfg.dataset.n_tumor_train = 0;
    cfg.dataset.n_normal_train = 48;
    cfg.loss.alpha = 1.0;
    cfg.train.epochs = 6;
    const Dataset ds = build_dataset(cfg.dataset_spec());
    const auto teacher = pretrain_default_teacher(cfg);
    Model m(teacher.teacher, teacher.norm, model_seed(cfg));
    const FeatureCache train = cache_teacher_features(m, ds.train);
    Adam<float> opt(m.trainable_parameters(), cfg.train.adam);
    auto mean_similarity = [&] {
        const auto ps = score_cached(m, train, false);
        double acc = 0.0;
        for (double v : ps.mean) acc += v;
        return static_cast<double>(kNumScales) - acc / static_cast<double>(ps.mean.size());
    };
    std::vector<double> per_epoch{mean_similarity()};
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
        for (std::size_t b = 0; b + 8 <= idx.size(); b += 8) {
            std::vector<std::size_t> batch(idx.begin() + static_cast<long>(b), idx.begin() + static_cast<long>(b + 8));
            std::vector<int> labels;
            for (auto i : batch) labels.push_back(train.labels[i]);
            train_step(m, opt, train.gather(batch), labels, cfg.loss);
        }
        per_epoch.push_back(mean_similarity());
    }
    // overall rise, and no epoch falls below the starting point
    EXPECT_GT(per_epoch.back(), per_epoch.front() + 0.1);
    for (double v : per_epoch) EXPECT_GE(v, per_epoch.front());
}

TEST(Training, ZeroTumorLossEqualsNormalsOnlyBranch) {
    std::mt19937_64 rng(6);
    std::vector<Var<double>> maps;
    std::vector<std::vector<std::vector<double>>> raw(3);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    for (std::size_t s = 0; s < 3; ++s) {
        Tensor<double> t({4, 1, 2, 2});
        for (auto& v : t.vec()) v = u(rng);
        for (std::size_t n = 0; n < 4; ++n) raw[s].emplace_back(t.plane(n, 0), t.plane(n, 0) + 4);
        maps.emplace_back(t);
    }
    const std::vector<int> labels(4, 1);
    const double got = focal_distill_loss(maps, labels, LossConfig{ratio_alpha(0, 500), 2.0, 1e-4}).value()[0];
    EXPECT_NEAR(got, oracle::focal_loss_oracle(raw, labels, 1.0, 2.0), 1e-12);
}

}  // namespace
