#include <gtest/gtest.h>

#include <cmath>

#include "worldprobe/koopman.hpp"
#include "worldprobe/synth.hpp"

using namespace worldprobe;

namespace {

// exact rotation block for frequency k at angle theta, in the analytic layout
Eigen::MatrixXd rotation_block(double theta) {
    Eigen::MatrixXd b(2, 2);
    b << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return b;
}

}  // namespace

TEST(Basis, FourierIsOrthonormalUnderUniformMeasure) {
    const auto basis = ObservableBasis::fourier_torus(2);
    EXPECT_EQ(basis.size, 5);
    const Eigen::Index n = 200000;
    std::vector<double> xs(n);
    for (Eigen::Index i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = (i + 0.5) / n;
    const Eigen::MatrixXd psi = basis.evaluate_all(xs);
    const Eigen::MatrixXd gram = psi * psi.transpose() / static_cast<double>(n);
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Edmd, IdentityDynamicsGiveIdentityOperator) {
    const auto basis = ObservableBasis::fourier_torus(2);
    Rng rng(3);
    std::vector<double> xs(500);
    for (auto& x : xs) x = rng.uniform();
    const auto est = edmd_fit(xs, xs, basis);
    EXPECT_LT((est.a - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_FALSE(est.rank_deficient);
}

TEST(Edmd, TorusRotationIsExactBlockRotation) {
    const TorusRotation torus{0.25};
    const auto basis = ObservableBasis::fourier_torus(1);
    const auto xs = trajectory(torus, 0.137, 2001);
    std::vector<double> x(xs.begin(), xs.end() - 1), y(xs.begin() + 1, xs.end());
    const auto est = edmd_fit(x, y, basis);

    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
    expected(0, 0) = 1.0;
    expected.block(1, 1, 2, 2) = rotation_block(2.0 * M_PI * 0.25);
    EXPECT_LT((est.a - expected).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((est.a - analytic_koopman_matrix(torus, basis)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Edmd, ContractionOnMonomialBasis) {
    const LinearContraction1D sys{0.8};
    const auto basis = ObservableBasis::monomial(1);
    const auto xs = trajectory(sys, 1.0, 51);
    std::vector<double> x(xs.begin(), xs.end() - 1), y(xs.begin() + 1, xs.end());
    const auto est = edmd_fit(x, y, basis);
    ASSERT_EQ(est.a.rows(), 1);
    EXPECT_NEAR(est.a(0, 0), 0.8, 1e-8);
}

TEST(Edmd, RankDeficientGramIsFlaggedNotFatal) {
    // duplicated observable makes the Gram matrix singular
    const auto basis = ObservableBasis::custom(2, [](double x) {
        Eigen::VectorXd v(2);
        v << x, x;
        return v;
    });
    Rng rng(5);
    std::vector<double> xs(100), ys(100);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.uniform();
        ys[i] = 0.5 * xs[i];
    }
    const auto est = edmd_fit(xs, ys, basis);
    EXPECT_TRUE(est.rank_deficient);
    EXPECT_TRUE(est.a.allFinite());
}

TEST(KStep, ZeroStepsIsIdentity) {
    KoopmanEstimate est;
    est.a = rotation_block(0.3);
    const Eigen::VectorXd c = Eigen::Vector2d(0.7, -0.2);
    EXPECT_TRUE(k_step(est, c, 0).isApprox(c, 0.0));
    EXPECT_THROW(k_step(est, c, -1), std::invalid_argument);
}

TEST(KStep, HalfTurnSquaredIsFullTurn) {
    // a single alpha = 0.5 orbit visits only two points, so the pairs are
    // sampled uniformly instead (the caller supplies y_i = F(x_i))
    const TorusRotation torus{0.5};
    const auto basis = ObservableBasis::fourier_torus(1);
    Rng rng(2);
    std::vector<double> x(2000), y(2000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform();
        y[i] = torus.step(x[i]);
    }
    const auto est = edmd_fit(x, y, basis);
    const Eigen::MatrixXd a2 = est.a * est.a;
    EXPECT_LT((a2 - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(KStep, SemigroupMatchesDirectKStepFit) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    const auto basis = ObservableBasis::fourier_torus(1);
    const int k = 3;
    const auto xs = trajectory(torus, 0.37, 1000 + k);
    std::vector<double> x1(xs.begin(), xs.end() - k), yk(xs.begin() + k, xs.end());
    std::vector<double> y1(xs.begin() + 1, xs.begin() + 1 + static_cast<long>(x1.size()));
    const auto one_step = edmd_fit(x1, y1, basis);
    const auto k_direct = edmd_fit(x1, yk, basis, k);

    Eigen::VectorXd c(3);
    c << 0.2, 0.9, -0.4;
    const auto via_power = k_step(one_step, c, k);
    const auto via_direct = k_step(k_direct, c, 1);
    EXPECT_LT((via_power - via_direct).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Project, RecoversSpanMembersAndConstants) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    const auto basis = ObservableBasis::fourier_torus(1);
    const auto xs = trajectory(torus, 0.05, 20000);
    const Eigen::MatrixXd psi = basis.evaluate_all(xs);

    // g already in span: residual below 1e-8
    const auto g = [](double x) { return 0.3 + std::cos(2.0 * M_PI * x); };
    Eigen::VectorXd values(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
        values(static_cast<Eigen::Index>(i)) = g(xs[i]);
    const Eigen::VectorXd c = project(values, psi);
    const Eigen::VectorXd resid = values - psi.transpose() * c;
    EXPECT_LT(std::sqrt(resid.squaredNorm() / values.size()), 1e-8);

    // constant observable lands on the constant basis element
    const Eigen::VectorXd c_const = project(Eigen::VectorXd::Constant(values.size(), 2.5), psi);
    EXPECT_NEAR(c_const(0), 2.5, 1e-8);
    EXPECT_LT(c_const.tail(2).cwiseAbs().maxCoeff(), 1e-6);

    // frequency outside the span projects to (nearly) nothing
    for (std::size_t i = 0; i < xs.size(); ++i)
        values(static_cast<Eigen::Index>(i)) = std::cos(4.0 * M_PI * xs[i]);
    const Eigen::VectorXd c_out = project(values, psi);
    EXPECT_LT(c_out.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Project, ParsevalOnLargeSamples) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    const auto basis = ObservableBasis::fourier_torus(1);
    const auto xs = trajectory(torus, 0.11, 100000);
    const Eigen::MatrixXd psi = basis.evaluate_all(xs);
    const auto g = [](double x) {
        return 0.4 + 0.8 * std::cos(2.0 * M_PI * x) - 0.3 * std::sin(2.0 * M_PI * x) +
               0.5 * std::cos(6.0 * M_PI * x);
    };
    Eigen::VectorXd values(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
        values(static_cast<Eigen::Index>(i)) = g(xs[i]);
    const Eigen::VectorXd c = project(values, psi);
    const Eigen::VectorXd proj = psi.transpose() * c;
    const double n = static_cast<double>(values.size());
    const double norm_g = values.squaredNorm() / n;
    const double norm_proj = proj.squaredNorm() / n;
    const double norm_resid = (values - proj).squaredNorm() / n;
    EXPECT_NEAR(norm_proj + norm_resid, norm_g, 1e-6);
}

TEST(Edmd, RotationEstimateIsNearlyUnitary) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    const auto basis = ObservableBasis::fourier_torus(2);
    const auto xs = trajectory(torus, 0.19, 20001);
    std::vector<double> x(xs.begin(), xs.end() - 1), y(xs.begin() + 1, xs.end());
    const auto est = edmd_fit(x, y, basis);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(est.a);
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
        EXPECT_NEAR(svd.singularValues()(i), 1.0, 1e-4);
}

TEST(ErrorDecomposition, InSpanObservableLeavesOnlyEstimation) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    const auto basis = ObservableBasis::fourier_torus(1);
    ErrorDecompositionConfig cfg;
    cfg.horizon = 1;
    cfg.seed = 0;
    const auto g = [](double x) { return std::cos(2.0 * M_PI * x); };
    const auto row = error_decomposition_cell(torus, basis, g, 1000, cfg);
    // rotation preserves each fourier pair: no basis error, no truncation
    EXPECT_LT(row.term2, 1e-10);
    EXPECT_LT(row.term3, 1e-6);
    EXPECT_NEAR(row.total, row.term1, 1e-6);
    EXPECT_LE(row.total, row.term1 + row.term2 + row.term3 + 1e-9);
}

TEST(ErrorDecomposition, OutOfSpanObservableIsAllTruncation) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    const auto basis = ObservableBasis::fourier_torus(1);
    ErrorDecompositionConfig cfg;
    cfg.horizon = 1;
    const auto g = [](double x) { return std::cos(4.0 * M_PI * x); };
    double prev_term3 = -1.0;
    for (Eigen::Index m : {1000, 10000}) {
        const auto row = error_decomposition_cell(torus, basis, g, m, cfg);
        // ||cos 4 pi x|| = sqrt(1/2) under the uniform measure
        EXPECT_NEAR(row.term3, std::sqrt(0.5), 5e-3);
        EXPECT_LE(row.total, row.term1 + row.term2 + row.term3 + 1e-9);
        if (prev_term3 > 0) {
            EXPECT_NEAR(row.term3, prev_term3, 5e-3);
        }
        prev_term3 = row.term3;
    }
}

TEST(ErrorDecomposition, TruncatedBasisEstimationErrorDecays) {
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    ErrorDecompositionConfig cfg;
    cfg.horizon = 1;
    cfg.seed = 0;
    const auto g = [](double x) { return std::cos(2.0 * M_PI * x); };
    const auto rows = error_decomposition_sweep(torus, BasisKind::FourierCosine, {1},
                                                {100, 1000, 10000}, g, cfg);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_GT(rows[0].term1, 1e-6);
    EXPECT_LE(rows[1].term1, rows[0].term1 * 1.1);
    EXPECT_LE(rows[2].term1, rows[1].term1 * 1.1);
    // the dropped sine partner shows up as a constant finite-basis error
    for (const auto& row : rows) {
        EXPECT_GT(row.term2, 0.1);
        EXPECT_LE(row.total, row.term1 + row.term2 + row.term3 + 1e-9);
    }
}

TEST(ErrorDecomposition, TotalErrorShrinksAlongTheDiagonalSweep) {
    // g needs frequencies 2 and 3: growing the fourier basis along the
    // diagonal captures them one by one, so the total error collapses
    const TorusRotation torus{std::sqrt(2.0) - 1.0};
    ErrorDecompositionConfig cfg;
    cfg.horizon = 1;
    cfg.seed = 0;
    const auto g = [](double x) {
        return std::cos(4.0 * M_PI * x) + 0.5 * std::cos(6.0 * M_PI * x);
    };
    std::vector<double> totals;
    const int ms_for_n[] = {0, 1000, 10000, 100000};
    for (int m = 1; m <= 3; ++m) {
        const auto basis = ObservableBasis::fourier_torus(m);
        const auto row = error_decomposition_cell(torus, basis, g,
                                                  static_cast<Eigen::Index>(ms_for_n[m]), cfg);
        EXPECT_LE(row.total, row.term1 + row.term2 + row.term3 + 1e-9);
        totals.push_back(row.total);
    }
    // ||(I - Pi)g|| drops from sqrt(1.25/2) to sqrt(0.125) to ~0
    EXPECT_NEAR(totals[0], std::sqrt(1.25 / 2.0), 5e-3);
    EXPECT_NEAR(totals[1], std::sqrt(0.125), 5e-3);
    EXPECT_LT(totals[2], 1e-6);
    EXPECT_GT(totals[0], totals[1]);
    EXPECT_GT(totals[1], totals[2]);
}

TEST(ErrorDecomposition, RefusesBasesWithoutAnalyticTruth) {
    const TorusRotation torus{0.25};
    const auto basis = ObservableBasis::monomial(2);
    ErrorDecompositionConfig cfg;
    EXPECT_THROW(
        error_decomposition_cell(torus, basis, [](double x) { return x; }, 100, cfg),
        std::invalid_argument);
}

TEST(ActivationEdmd, FitsLinearEvolutionOfActivationFeatures) {
    SynthSystemSpec spec;
    spec.kind = SynthKind::LinearContraction;
    spec.state_dim = 3;
    spec.activation_dim = 6;
    spec.patch_count = 2;
    spec.drift_scale = 0.9;
    spec.obs_noise = 0.01;
    spec.act_noise = 0.0;
    const auto ds = generate_dataset(spec, 3, 60);
    const auto result = activation_edmd(ds, 15, 1);
    // linear activations of a linear system evolve linearly
    EXPECT_GT(result.r2, 0.99);
    EXPECT_THROW(activation_edmd(ds, 99, 1), std::invalid_argument);
}
