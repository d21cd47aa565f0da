#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace fwrd;

namespace {

Var<double> map_of(const std::vector<double>& values, std::size_t n = 1) {
    const std::size_t hw = values.size() / n;
    return Var<double>(Tensor<double>({n, 1, 1, hw}, values));
}

double loss_value(const std::vector<Var<double>>& maps, const std::vector<int>& labels, const LossConfig& cfg) {
    return focal_distill_loss(maps, labels, cfg).value()[0];
}

TEST(Cosine, SelfSimilarityAndAntipodal) {
    std::mt19937_64 rng(2);
    Var<double> f(oracle::random_tensor<double>({2, 4, 3, 3}, rng));
    for (double v : std::vector<double>(cosine_similarity_map(f, f).value().vec())) EXPECT_NEAR(v, 1.0, 1e-12);
    Var<double> neg(f.value());
    for (auto& v : neg.mutable_value().vec()) v = -v;
    for (double v : std::vector<double>(cosine_similarity_map(f, neg).value().vec())) EXPECT_NEAR(v, -1.0, 1e-12);
    LossConfig cfg;
    for (double v : std::vector<double>(clamped_similarity(f, f, cfg).value().vec())) EXPECT_DOUBLE_EQ(v, 1.0 - cfg.eps_s);
    for (double v : std::vector<double>(clamped_similarity(f, neg, cfg).value().vec())) EXPECT_DOUBLE_EQ(v, cfg.eps_s);
}

TEST(Cosine, TwoChannelFixture) {
    Var<double> a(Tensor<double>({1, 2, 1, 1}, std::vector<double>{1, 0}));
    Var<double> b(Tensor<double>({1, 2, 1, 1}, std::vector<double>{1, 1}));
    EXPECT_NEAR(cosine_similarity_map(a, b).value()[0], 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Cosine, ZeroVectorGivesZeroNotNan) {
    Var<double> a(Tensor<double>({1, 3, 1, 1}));
    Var<double> b(Tensor<double>({1, 3, 1, 1}, 1.0));
    EXPECT_EQ(cosine_similarity_map(a, b).value()[0], 0.0);
}

TEST(Cosine, ShapeMismatchRejected) {
    Var<double> a(Tensor<double>({1, 3, 2, 2})), b(Tensor<double>({1, 3, 2, 1}));
    EXPECT_THROW(cosine_similarity_map(a, b), ShapeError);
}

TEST(FocalLoss, ScalarFixtures) {
    const LossConfig cfg{0.1, 2.0, 1e-4};
    EXPECT_NEAR(loss_value({map_of({0.5})}, {1}, cfg), 0.1 * 0.25 * std::log(2.0), 1e-15);
    EXPECT_NEAR(loss_value({map_of({0.5})}, {1}, cfg), 0.017329, 5e-7);
    EXPECT_NEAR(loss_value({map_of({0.5})}, {0}, cfg), 0.9 * 0.25 * std::log(2.0), 1e-15);
    EXPECT_NEAR(loss_value({map_of({0.5})}, {0}, cfg), 0.155958, 5e-7);
}

TEST(FocalLoss, MatchesScalarOracleOnGrid) {
    for (double alpha : {0.1, 0.5})
        for (double gamma : {0.0, 2.0})
            for (int y : {0, 1})
                for (int i = 1; i < 100; ++i) {
                    const double s = i / 100.0;
                    const LossConfig cfg{alpha, gamma, 1e-4};
                    EXPECT_NEAR(loss_value({map_of({s})}, {y}, cfg), oracle::focal_pixel(s, y, alpha, gamma), 1e-9);
                }
}

TEST(FocalLoss, ReductionMeanPixelsSumScalesMeanBatch) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    const std::vector<int> labels{1, 0, 1};
    std::vector<std::vector<std::vector<double>>> raw(3);
    std::vector<Var<double>> maps;
    for (std::size_t s = 0; s < 3; ++s) {
        const std::size_t hw = 16 >> (2 * s);
        std::vector<double> flat;
        for (std::size_t n = 0; n < labels.size(); ++n) {
            raw[s].emplace_back();
            for (std::size_t i = 0; i < hw; ++i) {
                raw[s][n].push_back(u(rng));
                flat.push_back(raw[s][n].back());
            }
        }
        maps.push_back(map_of(flat, labels.size()));
    }
    const LossConfig cfg{0.3, 2.0, 1e-4};
    EXPECT_NEAR(loss_value(maps, labels, cfg), oracle::focal_loss_oracle(raw, labels, 0.3, 2.0), 1e-12);
}

TEST(FocalLoss, GammaZeroHalfAlphaIsHalfCrossEntropy) {
    const LossConfig cfg{0.5, 0.0, 1e-4};
    const std::vector<double> s{0.2, 0.7, 0.9, 0.4};
    double ce = 0.0;
    for (double v : s) ce += -std::log(1.0 - v);
    EXPECT_NEAR(loss_value({map_of(s)}, {0}, cfg), 0.5 * ce / 4.0, 1e-14);
}

TEST(FocalLoss, CaseSymmetryExhaustive) {
    for (double alpha : {0.1, 0.3, 0.5, 0.9})
        for (double gamma : {0.0, 1.0, 2.0, 3.5})
            for (int i = 1; i < 1000; ++i) {
                const double s = i / 1000.0;
                const double a = loss_value({map_of({s})}, {0}, {alpha, gamma, 1e-4});
                const double b = loss_value({map_of({1.0 - s})}, {1}, {1.0 - alpha, gamma, 1e-4});
                ASSERT_EQ(a, b) << s;
            }
}

TEST(FocalLoss, MonotoneInSimilarity) {
    for (double gamma : {0.0, 2.0}) {
        const LossConfig cfg{0.2, gamma, 1e-4};
        double prev1 = std::numeric_limits<double>::infinity(), prev0 = -1.0;
        for (int i = 1; i < 1000; ++i) {
            const double s = i / 1000.0;
            const double l1 = focal_term(s, 1, cfg), l0 = focal_term(s, 0, cfg);
            ASSERT_LT(l1, prev1);
            ASSERT_GT(l0, prev0);
            prev1 = l1;
            prev0 = l0;
        }
    }
}

TEST(FocalLoss, FocusingRatioGrowsWithGamma) {
    for (int i = 1; i < 50; ++i) {
        const double s = i / 100.0, sp = s + 0.4;
        double prev = 0.0;
        for (double gamma : {0.0, 1.0, 2.0, 3.0}) {
            const LossConfig cfg{0.5, gamma, 1e-4};
            const double ratio = focal_term(s, 1, cfg) / focal_term(sp, 1, cfg);
            EXPECT_GT(ratio, prev);
            prev = ratio;
        }
    }
}

TEST(FocalLoss, NonnegativeAndNearZeroAtOptimum) {
    const LossConfig cfg{0.1, 2.0, 1e-4};
    std::vector<Var<double>> maps(3, map_of({1.0 - 1e-4, 1.0 - 1e-4}));
    const double l = loss_value(maps, {1}, cfg);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 3e-3);
}

TEST(FocalLoss, RejectsUnclampedAndBadLabels) {
    const LossConfig cfg;
    EXPECT_THROW(loss_value({map_of({1.0})}, {1}, cfg), std::domain_error);
    EXPECT_THROW(loss_value({map_of({-0.2})}, {1}, cfg), std::domain_error);
    EXPECT_THROW(loss_value({map_of({0.5})}, {2}, cfg), std::invalid_argument);
    EXPECT_THROW(loss_value({map_of({0.5})}, {1, 0}, cfg), ShapeError);
    EXPECT_THROW(loss_value({map_of({0.5})}, {1}, {0.0, 2.0, 1e-4}), std::invalid_argument);
    EXPECT_THROW(loss_value({map_of({0.5})}, {1}, {0.5, -1.0, 1e-4}), std::invalid_argument);
}

TEST(FocalLoss, AlphaOneIsPureNormalBranch) {
    const LossConfig cfg{1.0, 2.0, 1e-4};
    EXPECT_EQ(loss_value({map_of({0.3})}, {0}, cfg), 0.0);
    EXPECT_GT(loss_value({map_of({0.3})}, {1}, cfg), 0.0);
}

}  // namespace
