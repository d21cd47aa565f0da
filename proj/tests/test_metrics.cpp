#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace fwrd;

namespace {

std::vector<ScoredItem> items_of(const std::vector<double>& s, const std::vector<int>& t) {
    std::vector<ScoredItem> out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], t[i]});
    return out;
}

TEST(Accuracy, Fixtures) {
    EXPECT_EQ(accuracy(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1}), 1.0);
    EXPECT_EQ(accuracy(std::vector<int>{1, 0}, std::vector<int>{0, 1}), 0.0);
    std::vector<int> p(10, 1), t(10, 1);
    t[0] = t[1] = t[2] = 0;
    EXPECT_DOUBLE_EQ(accuracy(p, t), 0.7);
    EXPECT_THROW(accuracy(std::vector<int>{1}, std::vector<int>{1, 0}), std::invalid_argument);
}

TEST(Auroc, Fixtures) {
    EXPECT_EQ(auroc(items_of({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})), 1.0);
    EXPECT_EQ(auroc(items_of({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1})), 0.5);
    EXPECT_THROW(auroc(items_of({0.1, 0.2}, {1, 1})), std::invalid_argument);
}

TEST(Auroc, MatchesBruteForceOnRandomFixtures) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<int> n_d(2, 60), lvl(0, 9);
        const int n = n_d(rng);
        std::vector<double> s;
        std::vector<int> t;
        for (int i = 0; i < n; ++i) {
            s.push_back(lvl(rng) / 10.0);  // coarse levels force ties
            t.push_back(i < 1 ? 0 : i < 2 ? 1 : static_cast<int>(rng() % 2));
        }
        EXPECT_NEAR(auroc(items_of(s, t)), oracle::brute_auroc(s, t), 1e-12);
    }
}

TEST(Auroc, InvariantUnderMonotoneTransformAndFlip) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    std::vector<double> s, e;
    std::vector<int> t, f;
    for (int i = 0; i < 50; ++i) {
        s.push_back(g(rng));
        e.push_back(std::exp(3.0 * s.back()));
        t.push_back(i % 3 == 0);
        f.push_back(!t.back());
    }
    EXPECT_DOUBLE_EQ(auroc(items_of(s, t)), auroc(items_of(e, t)));
    EXPECT_NEAR(auroc(items_of(s, f)), 1.0 - auroc(items_of(s, t)), 1e-12);
}

TEST(PixelAuroc, FixturesAndOracle) {
    std::mt19937_64 rng(3);
    std::vector<std::uint8_t> mask(64);
    std::vector<float> heat(64);
    for (std::size_t i = 0; i < 64; ++i) mask[i] = static_cast<std::uint8_t>(rng() % 4 == 0);
    mask[0] = 1;
    mask[1] = 0;
    for (std::size_t i = 0; i < 64; ++i) heat[i] = mask[i];
    EXPECT_EQ(pixel_auroc({std::span<const float>(heat)}, {std::span<const std::uint8_t>(mask)}), 1.0);
    std::fill(heat.begin(), heat.end(), 0.3f);
    EXPECT_EQ(pixel_auroc({std::span<const float>(heat)}, {std::span<const std::uint8_t>(mask)}), 0.5);
    std::uniform_real_distribution<float> u;
    for (auto& h : heat) h = u(rng);
    std::vector<double> s(heat.begin(), heat.end());
    std::vector<int> t(mask.begin(), mask.end());
    EXPECT_NEAR(pixel_auroc({std::span<const float>(heat)}, {std::span<const std::uint8_t>(mask)}),
                oracle::brute_auroc(s, t), 1e-12);
}

TEST(PixelAuroc, NoDataExcludedAndSingleClassRejected) {
    std::vector<float> heat{0.9f, std::numeric_limits<float>::quiet_NaN(), 0.1f};
    std::vector<std::uint8_t> mask{1, 0, 0};
    EXPECT_EQ(pixel_auroc({std::span<const float>(heat)}, {std::span<const std::uint8_t>(mask)}), 1.0);
    std::vector<float> h2{0.9f, std::numeric_limits<float>::quiet_NaN()};
    std::vector<std::uint8_t> m2{1, 0};
    EXPECT_THROW(pixel_auroc({std::span<const float>(h2)}, {std::span<const std::uint8_t>(m2)}),
                 std::invalid_argument);
}

TEST(Miou, Fixtures) {
    std::vector<std::uint8_t> truth(16, 0);
    for (int i : {0, 1, 4, 5}) truth[i] = 1;  // top-left 2x2 of a 4x4 image
    EXPECT_EQ(miou_2class(truth, truth), 1.0);
    std::vector<std::uint8_t> comp(16);
    for (int i = 0; i < 16; ++i) comp[i] = !truth[i];
    EXPECT_EQ(miou_2class(comp, truth), 0.0);
    std::vector<std::uint8_t> half(16, 0);
    half[0] = half[1] = 1;
    // anomaly: 2 / 4; normal: 12 / 14
    EXPECT_DOUBLE_EQ(miou_2class(half, truth), (0.5 + 12.0 / 14.0) / 2.0);
    EXPECT_DOUBLE_EQ(miou_2class(half, truth), oracle::set_count_miou(half, truth));
    EXPECT_THROW(miou_2class(std::vector<std::uint8_t>(3), truth), std::invalid_argument);
}

TEST(Miou, RandomFixturesAndComplementSymmetry) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint8_t> p(16), t(16), pc(16), tc(16);
        for (int i = 0; i < 16; ++i) {
            p[i] = rng() % 2;
            t[i] = rng() % 2;
            pc[i] = !p[i];
            tc[i] = !t[i];
        }
        EXPECT_DOUBLE_EQ(miou_2class(p, t), oracle::set_count_miou(p, t));
        EXPECT_DOUBLE_EQ(miou_2class(p, t), miou_2class(pc, tc));
    }
}

TEST(Lesions, EightConnectivity) {
    ImageU8 m(5, 5, 1);
    m.at(0, 0) = m.at(1, 1) = 1;  // diagonal neighbours: one lesion
    m.at(4, 4) = 1;
    const auto ls = label_lesions(m);
    EXPECT_EQ(ls.count, 2u);
    EXPECT_EQ(ls.at(0, 0), ls.at(1, 1));
    EXPECT_NE(ls.at(0, 0), ls.at(4, 4));
    EXPECT_EQ(ls.at(2, 2), 0u);
}

TEST(Froc, HandComputedTwoSlideFixture) {
    const auto fx = oracle::froc_fixture();
    const auto r = froc(fx.slides);
    ASSERT_EQ(r.curve.size(), fx.expected.size());
    for (std::size_t i = 0; i < fx.expected.size(); ++i) {
        EXPECT_EQ(r.curve[i].threshold, fx.expected[i].threshold) << i;
        EXPECT_EQ(r.curve[i].avg_fp, fx.expected[i].avg_fp) << i;
        EXPECT_EQ(r.curve[i].sensitivity, fx.expected[i].sensitivity) << i;
    }
    // targets 0.25 and 0.5 reach 1/3 and 2/3; 1, 2, 4, 8 all reach 2/3
    EXPECT_DOUBLE_EQ(r.avg_sensitivity, (1.0 / 3.0 + 5.0 * 2.0 / 3.0) / 6.0);
}

TEST(Froc, SimpleCases) {
    ImageU8 m(4, 4, 1);
    m.at(1, 1) = 1;
    const auto one = froc({{{{1, 1, 0.9}}, label_lesions(m)}});
    EXPECT_EQ(one.curve[1].sensitivity, 1.0);
    EXPECT_EQ(one.curve[1].avg_fp, 0.0);
    const auto miss = froc({{{{3, 3, 0.9}, {0, 0, 0.2}}, label_lesions(m)}});
    for (const auto& p : miss.curve) EXPECT_EQ(p.sensitivity, 0.0);
    EXPECT_THROW(froc({{{{0, 0, 0.5}}, label_lesions(ImageU8(4, 4, 1))}}), std::invalid_argument);
}

TEST(Froc, SensitivityNonDecreasingInAllowedFps) {
    std::mt19937_64 rng(8);
    ImageU8 m(32, 32, 1);
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 10; ++x) m.at(y, x) = 1;
    for (int y = 20; y < 24; ++y)
        for (int x = 18; x < 30; ++x) m.at(y, x) = 1;
    std::vector<Candidate> cands;
    std::uniform_int_distribution<std::size_t> pos(0, 31);
    for (int i = 0; i < 20; ++i) cands.push_back({pos(rng), pos(rng), static_cast<double>(rng() % 1000) / 1000.0});
    const auto r = froc({{cands, label_lesions(m)}}, {0.25, 0.5, 1, 2, 4, 8, 16});
    for (std::size_t i = 1; i < r.sensitivity_at.size(); ++i) EXPECT_GE(r.sensitivity_at[i], r.sensitivity_at[i - 1]);
}

TEST(Candidates, NonMaximumSuppression) {
    Heatmap h{8, 8, std::vector<float>(64, 0.f)};
    h.values[1 * 8 + 1] = 5.f;
    h.values[1 * 8 + 2] = 4.f;  // suppressed by the peak next to it
    h.values[6 * 8 + 6] = 3.f;
    h.values[7 * 8 + 7] = std::numeric_limits<float>::quiet_NaN();
    const auto c = extract_candidates(h, 2.0, 2);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0].x, 1u);
    EXPECT_EQ(c[0].score, 5.0);
    EXPECT_EQ(c[1].x, 6u);
    EXPECT_EQ(c[1].y, 6u);
}

TEST(Calibration, QuantileGridAndTieRule) {
    std::vector<double> v;
    for (int i = 0; i <= 100; ++i) v.push_back(i);
    const auto q = quantile_grid(v);
    ASSERT_EQ(q.size(), 101u);
    for (int i = 0; i <= 100; ++i) EXPECT_EQ(q[i], i);
    // perfectly separable: many thresholds tie at accuracy 1, the lowest wins
    const std::vector<double> scores{0.1, 0.2, 0.3, 0.9, 1.0, 1.1};
    const std::vector<int> truth{0, 0, 0, 1, 1, 1};
    const auto c = calibrate_threshold(scores, truth);
    EXPECT_EQ(c.accuracy, 1.0);
    EXPECT_EQ(c.threshold, 0.3);
}

TEST(Detect, StrictThreshold) {
    EXPECT_TRUE(detect(3.0, 2.0));
    EXPECT_FALSE(detect(2.0, 2.0));
    EXPECT_FALSE(detect(1e300, std::numeric_limits<double>::max()));
}

}  // namespace
