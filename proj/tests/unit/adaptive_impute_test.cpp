#include "cofactor/adaptive_impute.hpp"
#include "cofactor/cosbm.hpp"
#include "cofactor/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cofactor;

namespace {

struct Problem {
    PartialAdjacency data;
    Matrix values;
    Matrix mask;
};

Problem simulated(Index n, Index k, double delta, std::uint64_t seed, Index ell) {
    SimConfig cfg;
    cfg.n = n;
    cfg.k = k;
    cfg.delta = delta;
    cfg.seed = seed;
    const CoSbmSample s = sample_cosbm(cfg);
    PartialAdjacency a = clip(mask_chronological(s.adjacency), ell);
    Matrix values = a.to_dense();
    Matrix mask = a.observed_mask();
    return {std::move(a), std::move(values), std::move(mask)};
}

double max_rel_alpha_gap(const std::vector<double>& got, const std::vector<double>& want, std::size_t count) {
    double worst = 0.0;
    for (std::size_t t = 0; t < count; ++t) worst = std::max(worst, std::abs(got[t] - want[t]) / std::abs(want[t]));
    return worst;
}

}  // namespace

TEST(FitConfig, Validation) {
    FitConfig cfg;
    cfg.k = 1;
    EXPECT_THROW(cfg.validate(10), InputError);
    cfg.k = 10;
    EXPECT_THROW(cfg.validate(10), InputError);
    cfg.k = 3;
    cfg.epsilon = 0.0;
    EXPECT_THROW(cfg.validate(10), InputError);
    cfg.epsilon = 1e-6;
    cfg.max_iters = 0;
    EXPECT_THROW(cfg.validate(10), InputError);
    cfg.max_iters = 5;
    cfg.fixed_alpha = -1.0;
    EXPECT_THROW(cfg.validate(10), InputError);
    cfg.fixed_alpha.reset();
    EXPECT_NO_THROW(cfg.validate(10));
}

TEST(DebiasedGram, MatchesDenseConstruction) {
    const Problem p = simulated(20, 2, 6.0, 2, 0);
    const double p_hat = p.mask.sum() / 400.0;
    for (bool outer : {false, true}) {
        Matrix want = outer ? Matrix(p.values * p.values.transpose()) : Matrix(p.values.transpose() * p.values);
        want.diagonal() *= p_hat;
        const DebiasedGram g(p.data, p_hat, outer);
        Matrix got(20, 20);
        Vector e = Vector::Zero(20);
        Vector y(20);
        for (Index j = 0; j < 20; ++j) {
            e.setZero();
            e[j] = 1.0;
            g.apply(e, y);
            got.col(j) = y;
        }
        EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_NEAR(g.trace(), want.trace(), 1e-10);
    }
}

TEST(AdaptiveInitialize, MatchesDenseGramConstruction) {
    const Problem p = simulated(60, 3, 15.0, 3, 0);
    InitReport report;
    SvdOptions opt;
    opt.tol = 1e-12;
    const LowRankFactors z = adaptive_initialize(p.data, 3, opt, &report);
    const auto ref = oracle::dense_adaptive_initialize(p.values, p.mask, 3);
    EXPECT_NEAR(report.p_hat, p.mask.sum() / 3600.0, 1e-15);
    for (Index i = 0; i < 3; ++i) EXPECT_NEAR(z.d[i], ref.d[i], 1e-8 * ref.d[0]);
    EXPECT_LE(sin_theta(z.U, ref.U), 1e-7);
    EXPECT_LE(sin_theta(z.V, ref.V), 1e-7);
    EXPECT_LE((z.to_dense() - ref.U * ref.d.asDiagonal() * ref.V.transpose()).norm(), 1e-6 * ref.d.norm());
}

TEST(AdaptiveInitialize, FullyObservedGivesSvdSubspaces) {
    std::mt19937_64 rng(31);
    const Index n = 30;
    const LowRankFactors truth = oracle::random_factors(n, 3, rng);
    const Matrix a = truth.U.cwiseAbs() * truth.d.asDiagonal() * truth.V.cwiseAbs().transpose();
    std::vector<Cell> cells;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) cells.push_back({i, j, a(i, j)});
    }
    const auto data = PartialAdjacency::from_cells(n, cells);
    InitReport report;
    const LowRankFactors z = adaptive_initialize(data, 3, {}, &report);
    const auto ref = oracle::dense_svd(a, 3);
    EXPECT_DOUBLE_EQ(report.p_hat, 1.0);
    EXPECT_LE(sin_theta(z.U, ref.U), 1e-7);
    EXPECT_LE(sin_theta(z.V, ref.V), 1e-7);
}

TEST(AdaptiveInitialize, EmptyDataIsDegenerate) {
    const auto data = PartialAdjacency::from_cells(10, {});
    EXPECT_THROW(adaptive_initialize(data, 2), DegenerateError);
    FitConfig cfg;
    EXPECT_THROW(adaptive_impute(data, cfg), DegenerateError);
}

TEST(AdaptiveImpute, FullyObservedLowRankIsFixedPoint) {
    std::mt19937_64 rng(32);
    const Index n = 40;
    const LowRankFactors truth = oracle::random_factors(n, 3, rng);
    const Matrix a = truth.U.cwiseAbs() * truth.d.asDiagonal() * truth.V.cwiseAbs().transpose();
    std::vector<Cell> cells;
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) cells.push_back({i, j, a(i, j)});
    }
    const auto data = PartialAdjacency::from_cells(n, cells);
    FitConfig cfg;
    cfg.k = 3;
    const FitResult fit = adaptive_impute(data, cfg);
    EXPECT_TRUE(fit.report.converged);
    EXPECT_LE(fit.report.iterations(), 2);
    for (double al : fit.report.alpha) EXPECT_LE(std::abs(al), 1e-8 * a.squaredNorm());
    EXPECT_LE((fit.factors.to_dense() - a).norm(), 1e-6 * a.norm());
}

TEST(AdaptiveImpute, MatchesDenseReference) {
    const Problem p = simulated(120, 3, 30.0, 7, 12);
    FitConfig cfg;
    cfg.k = 3;
    cfg.epsilon = 1e-9;
    cfg.max_iters = 60;
    cfg.svd.tol = 1e-11;
    const FitResult fit = adaptive_impute(p.data, cfg);
    const auto ref = oracle::dense_adaptive_impute(p.values, p.mask, 3, cfg.epsilon, cfg.max_iters);
    const std::size_t common = std::min(fit.report.alpha.size(), ref.alpha.size());
    ASSERT_GT(common, 0u);
    EXPECT_LE(max_rel_alpha_gap(fit.report.alpha, ref.alpha, common), 1e-8);
    EXPECT_LE(sin_theta(fit.factors.U, ref.U), 1e-6);
    EXPECT_LE(sin_theta(fit.factors.V, ref.V), 1e-6);
}

TEST(AdaptiveImpute, FixedAlphaMatchesSoftImputeReference) {
    const Problem p = simulated(100, 3, 25.0, 9, 10);
    const double lambda = 4.0;
    FitConfig cfg;
    cfg.k = 3;
    cfg.init = Initializer::svd;
    cfg.fixed_alpha = lambda;
    cfg.epsilon = 1e-9;
    cfg.max_iters = 40;
    cfg.svd.tol = 1e-11;
    const FitResult fit = adaptive_impute(p.data, cfg);
    const auto ref = oracle::dense_adaptive_impute(p.values, p.mask, 3, cfg.epsilon, cfg.max_iters, lambda);
    for (double al : fit.report.alpha) EXPECT_EQ(al, lambda);
    EXPECT_LE(sin_theta(fit.factors.U, ref.U), 1e-6);
    EXPECT_LE(sin_theta(fit.factors.V, ref.V), 1e-6);
    for (Index i = 0; i < 3; ++i) EXPECT_NEAR(fit.factors.d[i], ref.d[i], 1e-6 * ref.d[0]);
}

TEST(AdaptiveImpute, ReportInvariantsAndShrinkage) {
    const Problem p = simulated(150, 2, 20.0, 11, 15);
    FitConfig cfg;
    cfg.k = 2;
    const FitResult fit = adaptive_impute(p.data, cfg);
    const auto& r = fit.report;
    const auto t = static_cast<std::size_t>(r.iterations());
    EXPECT_EQ(r.alpha.size(), t);
    EXPECT_EQ(r.singular_values.size(), t);
    EXPECT_EQ(r.shrunk_values.size(), t);
    EXPECT_EQ(r.seconds.size(), t);
    if (r.converged) {
        EXPECT_LT(r.relative_change.back(), cfg.epsilon);
    }
    for (std::size_t s = 0; s < t; ++s) {
        for (Index i = 0; i < 2; ++i) EXPECT_LE(r.shrunk_values[s][i], r.singular_values[s][i]);
        EXPECT_GE(r.alpha[s], -1e-8);
    }
    fit.factors.validate();
    const auto j = r.to_json();
    EXPECT_EQ(j.at("iterations"), r.iterations());
    EXPECT_EQ(j.at("alpha").size(), t);
}

TEST(AdaptiveImpute, Deterministic) {
    const Problem p = simulated(120, 3, 20.0, 12, 12);
    FitConfig cfg;
    cfg.k = 3;
    const FitResult a = adaptive_impute(p.data, cfg);
    const FitResult b = adaptive_impute(p.data, cfg);
    EXPECT_EQ(a.report.iterations(), b.report.iterations());
    EXPECT_LE((a.factors.to_dense() - b.factors.to_dense()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AdaptiveImpute, MaxItersReportsNotConverged) {
    const Problem p = simulated(100, 2, 20.0, 13, 10);
    FitConfig cfg;
    cfg.k = 2;
    cfg.max_iters = 2;
    cfg.epsilon = 1e-15;
    const FitResult fit = adaptive_impute(p.data, cfg);
    EXPECT_FALSE(fit.report.converged);
    EXPECT_EQ(fit.report.status, FitStatus::max_iters);
    EXPECT_EQ(fit.report.iterations(), 2);
}

TEST(AdaptiveImpute, AllValuesShrunkIsDegenerate) {
    const Problem p = simulated(80, 2, 10.0, 14, 8);
    FitConfig cfg;
    cfg.k = 2;
    cfg.init = Initializer::svd;
    cfg.fixed_alpha = 1e12;
    try {
        adaptive_impute(p.data, cfg);
        FAIL() << "expected DegenerateFitError";
    } catch (const DegenerateFitError& e) {
        EXPECT_EQ(e.report().status, FitStatus::degenerate);
        EXPECT_EQ(e.report().clamped, 2);
        EXPECT_EQ(e.report().iterations(), 1);
    }
}
