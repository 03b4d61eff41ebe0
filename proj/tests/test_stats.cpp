#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "worldprobe/permutation.hpp"
#include "worldprobe/stats.hpp"

using namespace worldprobe;

namespace {

StatReport make_report(double r2, double se) {
    StatReport r;
    r.r2 = r2;
    r.se = se;
    for (int level : {90, 95, 99}) {
        const double z = z_for_level(level);
        r.ci[level] = {r2 - z * se, r2 + z * se};
    }
    return r;
}

}  // namespace

TEST(R2Score, PerfectAndMeanPredictors) {
    Eigen::MatrixXd y(4, 2);
    y << 1, 2, 3, 4, 5, 6, 7, 8;
    EXPECT_DOUBLE_EQ(r2_score(y, y), 1.0);
    Eigen::MatrixXd mean_pred = y.colwise().mean().replicate(4, 1);
    EXPECT_NEAR(r2_score(y, mean_pred), 0.0, 1e-15);
}

TEST(R2Score, HandComputedValue) {
    // y = [0,1,2], yhat = 0: SSE = 5, SST = 2 -> 1 - 5/2 = -1.5
    Eigen::MatrixXd y(3, 1), p(3, 1);
    y << 0, 1, 2;
    p << 0, 0, 0;
    EXPECT_DOUBLE_EQ(r2_score(y, p), -1.5);
}

TEST(R2Score, ZeroVarianceIsNaN) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 2, 3.0);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(5, 2);
    EXPECT_TRUE(std::isnan(r2_score(y, p)));
}

TEST(R2Score, PerDimensionAverageVariant) {
    // two outputs with very different variances: the variance-weighted score
    // follows the big one, the per-dimension average treats them equally
    Eigen::MatrixXd y(4, 2), p(4, 2);
    y.col(0) << -10, 10, -10, 10;
    y.col(1) << -0.1, 0.1, -0.1, 0.1;
    p.col(0) = y.col(0);          // perfect on the large dimension
    p.col(1) = -y.col(1);         // sign-flipped on the small one: R2 = -3
    EXPECT_NEAR(r2_score_per_dim_mean(y, p), (1.0 + -3.0) / 2.0, 1e-12);
    EXPECT_GT(r2_score(y, p), 0.99);  // dominated by the large dimension
}

TEST(R2Score, InvariantUnderOutputPermutation) {
    Rng rng(3);
    Eigen::MatrixXd y(50, 3), p(50, 3);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y(i) = rng.normal();
        p(i) = rng.normal();
    }
    Eigen::MatrixXd yp(50, 3), pp(50, 3);
    const int perm[3] = {2, 0, 1};
    for (int j = 0; j < 3; ++j) {
        yp.col(j) = y.col(perm[j]);
        pp.col(j) = p.col(perm[j]);
    }
    EXPECT_NEAR(r2_score(y, p), r2_score(yp, pp), 1e-12);
}

TEST(BlockLength, SpecValues) {
    EXPECT_EQ(bootstrap_block_length(8), 2);
    EXPECT_EQ(bootstrap_block_length(27), 3);
    EXPECT_EQ(bootstrap_block_length(1000), 10);
    EXPECT_EQ(bootstrap_block_length(4), 2);
    EXPECT_EQ(bootstrap_block_length(999), 9);
}

TEST(NormalQuantile, StandardValues) {
    EXPECT_NEAR(z_for_level(90), 1.6448536269514722, 1e-7);
    EXPECT_NEAR(z_for_level(95), 1.959963984540054, 1e-7);
    EXPECT_NEAR(z_for_level(99), 2.5758293035489004, 1e-7);
    EXPECT_THROW(normal_quantile(0.0), std::invalid_argument);
}

TEST(BlockBootstrap, DeterministicAndCentered) {
    Rng rng(5);
    Eigen::MatrixXd y(200, 2), p(200, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y(i) = rng.normal();
        p(i) = 0.5 * y(i) + 0.5 * rng.normal();
    }
    const auto a = block_bootstrap(y, p, 100, {90, 95, 99}, 11);
    const auto b = block_bootstrap(y, p, 100, {90, 95, 99}, 11);
    EXPECT_EQ(a.se, b.se);
    EXPECT_EQ(a.block_length, 5);  // floor(200^(1/3)) = 5
    EXPECT_GT(a.se, 0.0);
    EXPECT_DOUBLE_EQ(a.r2, r2_score(y, p));
    // centered CI
    const auto [lo, hi] = a.ci.at(95);
    EXPECT_NEAR((lo + hi) / 2.0, a.r2, 1e-12);
    EXPECT_NEAR(hi - a.r2, z_for_level(95) * a.se, 1e-12);
}

TEST(BlockBootstrap, RejectsTinyInput) {
    Eigen::MatrixXd y(3, 1), p(3, 1);
    y << 1, 2, 3;
    p << 1, 2, 3;
    EXPECT_THROW(block_bootstrap(y, p), std::invalid_argument);
}

TEST(CompareOneWay, SymmetricCaseIsCoinFlip) {
    const auto a = make_report(0.3, 0.05);
    const auto b = make_report(0.3, 0.05);
    const auto cmp = compare_one_way(a, b);
    EXPECT_DOUBLE_EQ(cmp.z, 0.0);
    EXPECT_DOUBLE_EQ(cmp.p_one_sided, 0.5);
    EXPECT_FALSE(cmp.significant);
    EXPECT_TRUE(cmp.ci_overlap);
}

TEST(CompareOneWay, DisjointIntervalsAreSignificant) {
    const auto adv = make_report(0.45, 0.02);   // 95% CI ~ (0.41, 0.49)
    const auto base = make_report(0.15, 0.02);  // 95% CI ~ (0.11, 0.19)
    const auto cmp = compare_one_way(adv, base);
    EXPECT_FALSE(cmp.ci_overlap);
    EXPECT_TRUE(cmp.significant);
    EXPECT_GT(cmp.z, 6.0);
    EXPECT_THROW(compare_one_way(make_report(0.1, 0.0), make_report(0.2, 0.0)),
                 std::invalid_argument);
}

TEST(CompareTwoSided, WinnerNeedsDisjointIntervals) {
    const auto linear = make_report(0.50, 0.01);
    const auto mlp = make_report(0.40, 0.01);
    const auto cmp = compare_two_sided(linear, mlp);
    EXPECT_EQ(cmp.per_level.at(95), Verdict::LinearWins);
    EXPECT_EQ(cmp.absolute, Verdict::LinearWins);

    const auto close = compare_two_sided(make_report(0.48, 0.05), make_report(0.50, 0.05));
    EXPECT_EQ(close.per_level.at(95), Verdict::Tie);
    EXPECT_EQ(close.absolute, Verdict::MlpWins);  // raw comparison still picks a side
}

TEST(CompareTwoSided, Antisymmetric) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = make_report(rng.normal(0.3, 0.2), 0.01 + 0.05 * rng.uniform());
        const auto b = make_report(rng.normal(0.3, 0.2), 0.01 + 0.05 * rng.uniform());
        const auto ab = compare_two_sided(a, b);
        const auto ba = compare_two_sided(b, a);
        for (int level : {90, 95, 99}) {
            const auto va = ab.per_level.at(level), vb = ba.per_level.at(level);
            if (va == Verdict::Tie) {
                EXPECT_EQ(vb, Verdict::Tie);
            } else {
                EXPECT_NE(vb, Verdict::Tie);
                EXPECT_NE(va, vb);
            }
        }
    }
}

TEST(AggregateOverallP, ClosedFormCases) {
    EXPECT_NEAR(aggregate_overall_p({0.01}).p, 0.01, 1e-12);
    EXPECT_NEAR(aggregate_overall_p({1.0, 1.0, 1.0}).p, 1.0, 1e-12);
    // 123 tests at the add-one floor 1/101
    const std::vector<double> ps(123, 1.0 / 101.0);
    const auto combined = aggregate_overall_p(ps);
    EXPECT_LT(combined.p, 1e-4);
    EXPECT_EQ(combined.dof, 246);
    EXPECT_NEAR(combined.bonferroni, std::min(1.0, 123.0 / 101.0), 1e-12);
    EXPECT_THROW(aggregate_overall_p({}), std::invalid_argument);
    EXPECT_THROW(aggregate_overall_p({0.0}), std::invalid_argument);
    EXPECT_THROW(aggregate_overall_p({1.1}), std::invalid_argument);
}

TEST(PermutationTest, AddOneFormula) {
    Rng rng(21);
    Eigen::MatrixXd x(40, 3), y(40, 2);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.normal();
    PermutationRecipe recipe;
    recipe.hyper = {1e-2, 1e-8, 0.0};
    recipe.epochs = 30;

    // observed beats everything -> p = 1/(n_perm + 1)
    const auto best = permutation_test(x.topRows(30), y.topRows(30), x.bottomRows(10),
                                       y.bottomRows(10), recipe, 1e9, 100, 5);
    EXPECT_NEAR(best.p, 1.0 / 101.0, 1e-15);

    // recompute the count independently from the returned replicate list
    const auto mid = permutation_test(x.topRows(30), y.topRows(30), x.bottomRows(10),
                                      y.bottomRows(10), recipe, -0.05, 100, 5);
    int count = 0;
    for (double r2 : mid.permuted_r2)
        if (r2 >= -0.05) ++count;
    EXPECT_NEAR(mid.p, (1.0 + count) / 101.0, 1e-15);
    EXPECT_EQ(best.permuted_r2, mid.permuted_r2);  // same seed, same replicates
}

TEST(PermutationTest, RoughlyUniformUnderNull) {
    // quick smoke; the acceptance suite runs the full 200-run calibration
    double sum = 0.0;
    const int runs = 15;
    for (int rep = 0; rep < runs; ++rep) {
        Rng rng(100 + rep);
        Eigen::MatrixXd x(60, 4), y(60, 2);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.normal();
        PermutationRecipe recipe;
        recipe.hyper = {1e-2, 1e-8, 0.0};
        recipe.epochs = 40;
        FitControl ctl;
        ctl.epochs = recipe.epochs;
        ctl.seed = derive_seed(900 + rep, "obs-fit");
        const auto probe = fit_linear(x.topRows(42), y.topRows(42), recipe.hyper, ctl);
        const double observed = r2_score(y.bottomRows(9), probe.predict(x.bottomRows(9)));
        const auto outcome = permutation_test(x.topRows(42), y.topRows(42), x.bottomRows(9),
                                              y.bottomRows(9), recipe, observed, 39, 700 + rep);
        sum += outcome.p;
    }
    EXPECT_NEAR(sum / runs, 0.5, 0.25);
}
