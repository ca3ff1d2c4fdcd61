#include "trace_forge/advantage_engine.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trace_forge/errors.hpp"

namespace trace_forge {
namespace {

GroupRewards column(std::vector<double> values) {
    std::vector<std::vector<double>> rows;
    for (double v : values) rows.push_back({v});
    return GroupRewards{Matrix::from_rows(rows), std::vector<double>(values.size(), 0.0)};
}

TEST(GroupAdvantage, Examples) {
    const auto constant = group_advantage(column({1, 1, 1}));
    for (std::size_t g = 0; g < 3; ++g) EXPECT_EQ(constant(g, 0), 0.0);

    const auto a = group_advantage(column({1, 0, 0}), 1e-8);
    EXPECT_NEAR(a(0, 0), 1.41421, 1e-4);
    EXPECT_NEAR(a(1, 0), -0.70711, 1e-4);
    EXPECT_NEAR(a(2, 0), -0.70711, 1e-4);

    const auto b = group_advantage(column({1, 0}), 0.0);
    EXPECT_DOUBLE_EQ(b(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(b(1, 0), -1.0);

    EXPECT_THROW(group_advantage(column({1})), GroupTooSmall);
}

TEST(IntraAdvantage, Examples) {
    GroupRewards r{Matrix::from_rows({{1, 1, 0, 1}}), {0}};
    const auto a = intra_advantage(r);
    EXPECT_NEAR(a(0, 0), 1.66667, 1e-5);
    EXPECT_DOUBLE_EQ(a(0, 1), 1.5);
    EXPECT_DOUBLE_EQ(a(0, 2), 0.0);
    EXPECT_DOUBLE_EQ(a(0, 3), 1.0);

    GroupRewards single{Matrix::from_rows({{1}}), {0}};
    EXPECT_DOUBLE_EQ(intra_advantage(single)(0, 0), 1.0);

    GroupRewards gated{Matrix::from_rows({{0, 1, 1, 1}}), {0}};
    EXPECT_DOUBLE_EQ(intra_advantage(gated)(0, 0), 0.0);
}

TEST(Combine, Examples) {
    const Matrix g = Matrix::from_rows({{1.41421}});
    const Matrix i = Matrix::from_rows({{1.66667}});
    EXPECT_NEAR(combine(g, i, 0.3)(0, 0), 1.91421, 1e-5);
    EXPECT_EQ(combine(g, i, 0.0), g);
    EXPECT_DOUBLE_EQ(kDefaultLambda, 0.3);
    EXPECT_THROW(combine(g, Matrix(2, 1)), ShapeMismatch);
}

TEST(FinalAdvantage, Examples) {
    for (double v : final_advantage({1, 1, 1, 1, 1})) EXPECT_EQ(v, 0.0);
    const auto a = final_advantage({1, 1, 0, 0, 0});
    EXPECT_NEAR(a[0], 1.22474, 1e-4);
    EXPECT_NEAR(a[1], 1.22474, 1e-4);
    for (int k = 2; k < 5; ++k) EXPECT_NEAR(a[k], -0.81650, 1e-4);
    const auto b = final_advantage({0, 1}, 0.0);
    EXPECT_DOUBLE_EQ(b[0], -1.0);
    EXPECT_DOUBLE_EQ(b[1], 1.0);
    EXPECT_THROW(final_advantage({1}), GroupTooSmall);
}

TEST(Surrogate, Examples) {
    GroupRewards r{Matrix::from_rows({{1, 0}, {1, 1}}), {1, 0}};
    const auto adv = compute_advantages(r);
    PolicyLogProbs lp;
    lp.logp_new = lp.logp_old = lp.logp_ref = Matrix(2, 2, -0.5);
    const auto zero = [&] {
        AdvantageMatrix z = adv;
        z.combined = Matrix(2, 2);
        z.final = {0, 0};
        return surrogate_losses(z, lp);
    }();
    EXPECT_EQ(zero.l_step, 0.0);
    EXPECT_EQ(zero.l_final, 0.0);
    EXPECT_EQ(zero.kl, 0.0);

    AdvantageMatrix one;
    one.combined = Matrix::from_rows({{2.0}});
    one.final = {0.0};
    PolicyLogProbs single;
    single.logp_new = single.logp_old = single.logp_ref = Matrix::from_rows({{-1.0}});
    EXPECT_DOUBLE_EQ(surrogate_losses(one, single).l_step, -2.0);

    PolicyLogProbs bad = lp;
    bad.logp_new(0, 0) = std::nan("");
    EXPECT_THROW(surrogate_losses(adv, bad), NonFinite);
    PolicyLogProbs wrong = lp;
    wrong.logp_old = Matrix(2, 3);
    EXPECT_THROW(surrogate_losses(adv, wrong), ShapeMismatch);
}

TEST(Surrogate, KlEstimatorAndExact) {
    AdvantageMatrix adv;
    adv.combined = Matrix(2, 1);
    adv.final = {0, 0};
    PolicyLogProbs lp;
    lp.logp_new = Matrix::from_rows({{-0.1}, {-0.2}});
    lp.logp_old = lp.logp_new;
    lp.logp_ref = Matrix::from_rows({{-0.3}, {-0.6}});
    EXPECT_NEAR(surrogate_losses(adv, lp).kl, (0.2 + 0.4) / 2, 1e-15);
    lp.exact_kl = 0.125;
    const auto out = surrogate_losses(adv, lp);
    EXPECT_DOUBLE_EQ(out.kl, 0.125);
    EXPECT_DOUBLE_EQ(out.total, out.l_step + out.l_final + out.kl);
}

TEST(AdvantageProperties, ColumnMeanZeroScaleInvarianceAndBounds) {
    std::mt19937_64 rng(21);
    for (int iter = 0; iter < 2000; ++iter) {
        const std::size_t G = 2 + rng() % 7;
        const std::size_t n = 1 + rng() % 10;
        Matrix step(G, n);
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t i = 0; i < n; ++i) step(g, i) = static_cast<double>(rng() % 2);
        }
        GroupRewards r{step, std::vector<double>(G, 0.0)};
        const auto grp = group_advantage(r);
        const auto intra = intra_advantage(r);
        const double c = 0.5 + static_cast<double>(rng() % 100) / 10.0;
        Matrix scaled = step;
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t i = 0; i < n; ++i) scaled(g, i) *= c;
        }
        const auto a0 = group_advantage(r, 0.0);
        const auto a1 = group_advantage(GroupRewards{scaled, r.final}, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t g = 0; g < G; ++g) {
                sum += grp(g, i);
                EXPECT_NEAR(a0(g, i), a1(g, i), 1e-9);
                EXPECT_GE(intra(g, i), 0.0);
                EXPECT_LE(intra(g, i), 2.0);
            }
            EXPECT_NEAR(sum, 0.0, 1e-9);
        }
    }
}

TEST(AdvantageProperties, RaggedGroupsPadWithZeros) {
    const auto r = GroupRewards::from_ragged({{1, 1, 1}, {1}}, {1, 0});
    EXPECT_EQ(r.n(), 3u);
    EXPECT_EQ(r.step.row(1), (std::vector<double>{1, 0, 0}));
    EXPECT_THROW(GroupRewards::from_ragged({{1}}, {1, 0}), ShapeMismatch);
}

}  // namespace
}  // namespace trace_forge
