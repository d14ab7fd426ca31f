#include "cofactor/cosbm.hpp"
#include "cofactor/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cofactor;

namespace {

SimConfig config(Index n, Index k, double delta, std::uint64_t seed) {
    SimConfig cfg;
    cfg.n = n;
    cfg.k = k;
    cfg.delta = delta;
    cfg.seed = seed;
    return cfg;
}

Matrix dense(const Eigen::SparseMatrix<double>& s) { return Matrix(s); }

}  // namespace

TEST(SimConfig, TwoBlockPattern) {
    const Matrix b = base_mixing(config(100, 2, 20.0, 1));
    Matrix want(2, 2);
    want << 0.8, 0.4, 0.4, 0.8;
    EXPECT_LE((b - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SimConfig, PatternHasFullRank) {
    for (Index k : {2, 3, 5, 10}) EXPECT_EQ(numerical_rank(base_mixing(config(100, k, 20.0, 1)), 1e-10), k) << k;
}

TEST(SimConfig, RejectsInvalidConfigs) {
    SimConfig cfg = config(100, 2, 20.0, 1);
    cfg.k = 50;
    cfg.b_inactive = 0.05;
    EXPECT_THROW(cfg.validate(), InputError);
    EXPECT_THROW(sample_cosbm(cfg), InputError);
    EXPECT_THROW(config(1, 1, 20.0, 1).validate(), InputError);
    EXPECT_THROW(config(10, 11, 20.0, 1).validate(), InputError);
    EXPECT_THROW(config(10, 2, -1.0, 1).validate(), InputError);
    cfg = config(10, 2, 5.0, 1);
    cfg.clip_fraction = 0.6;
    EXPECT_THROW(cfg.validate(), InputError);
}

TEST(SampleCosbm, TruthInvariants) {
    const CoSbmSample s = sample_cosbm(config(300, 4, 30.0, 3));
    const CoSbmTruth& t = s.truth;
    for (Index i = 0; i < 300; ++i) {
        EXPECT_GE(t.theta_out[i], 1.0);
        EXPECT_GE(t.theta_in[i], 1.0);
        EXPECT_LT(t.z_labels[static_cast<std::size_t>(i)], 4);
        EXPECT_LT(t.y_labels[static_cast<std::size_t>(i)], 4);
    }
    EXPECT_EQ(numerical_rank(t.B, 1e-10), 4);
    const Matrix e = t.expected_dense();
    EXPECT_EQ(numerical_rank(e, 1e-8), 4);
    EXPECT_LE((e - t.Z() * t.B * t.Y().transpose()).cwiseAbs().maxCoeff(), 1e-10 * e.maxCoeff());
    const double off_diag = e.sum() - e.diagonal().sum();
    EXPECT_NEAR(off_diag / 300.0, 30.0, 1e-9);
}

TEST(SampleCosbm, ZeroDiagonalIntegerWeights) {
    const CoSbmSample s = sample_cosbm(config(200, 2, 40.0, 4));
    for (Index c = 0; c < s.adjacency.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(s.adjacency, c); it; ++it) {
            EXPECT_NE(it.row(), it.col());
            EXPECT_EQ(it.value(), std::round(it.value()));
            EXPECT_GE(it.value(), 1.0);
        }
    }
}

TEST(SampleCosbm, MeanDegreeCalibration) {
    const int seeds = 50;
    for (Index n : {200, 500}) {
        for (Index k : {2, 5}) {
            for (double delta : {20.0, 80.0}) {
                double total = 0.0;
                for (int s = 0; s < seeds; ++s) {
                    const CoSbmSample draw = sample_cosbm(config(n, k, delta, 1000 + static_cast<std::uint64_t>(s)));
                    total += draw.adjacency.sum() / static_cast<double>(n);
                }
                const double mean = total / seeds;
                const double se = std::sqrt(delta / static_cast<double>(n) / seeds);
                EXPECT_LE(std::abs(mean - delta), 3.0 * se) << n << " " << k << " " << delta;
            }
        }
    }
}

TEST(SampleCosbm, SameSeedSameNetwork) {
    const CoSbmSample a = sample_cosbm(config(150, 3, 25.0, 8));
    const CoSbmSample b = sample_cosbm(config(150, 3, 25.0, 8));
    const CoSbmSample c = sample_cosbm(config(150, 3, 25.0, 9));
    EXPECT_EQ(dense(a.adjacency), dense(b.adjacency));
    EXPECT_EQ(a.truth.z_labels, b.truth.z_labels);
    EXPECT_NE(dense(a.adjacency), dense(c.adjacency));
}

TEST(ReplicateConfig, DistinctStreams) {
    const SimConfig base = config(50, 2, 10.0, 7);
    EXPECT_EQ(replicate_config(base, 3).seed, replicate_config(base, 3).seed);
    EXPECT_NE(replicate_config(base, 3).seed, replicate_config(base, 4).seed);
    EXPECT_NE(replicate_config(base, 0).seed, base.seed);
}

TEST(MaskChronological, CountIdentity) {
    const CoSbmSample s = sample_cosbm(config(200, 3, 30.0, 10));
    const PartialAdjacency a = mask_chronological(s.adjacency);
    Index above = 0;
    for (Index c = 0; c < s.adjacency.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(s.adjacency, c); it; ++it) above += it.row() < it.col();
    }
    EXPECT_EQ(a.nnz(), above);
    Matrix upper = dense(s.adjacency);
    upper.triangularView<Eigen::Lower>().setZero();
    EXPECT_EQ(a.to_dense(), upper);
    EXPECT_FALSE(a.is_observed(5, 2));
    EXPECT_TRUE(a.is_observed(2, 5));
    EXPECT_TRUE(a.is_observed(4, 4));
}

TEST(MaskChronological, SymmetricInputRoundTrip) {
    std::mt19937_64 rng(11);
    std::bernoulli_distribution coin(0.3);
    Matrix m = Matrix::Zero(30, 30);
    for (Index i = 0; i < 30; ++i) {
        for (Index j = i + 1; j < 30; ++j) {
            if (coin(rng)) m(i, j) = m(j, i) = 1.0 + static_cast<double>((i + j) % 3);
        }
    }
    const PartialAdjacency a = mask_chronological(to_sparse(m));
    for (const Cell& c : a.nonzeros()) EXPECT_LT(c.row, c.col);
    EXPECT_EQ(dense(symmetrize_missing(a)), m);
}

TEST(Estimators, SymmetrizedEqualsOracleOnSymmetricTruth) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    Matrix m = Matrix::Zero(40, 40);
    for (Index i = 0; i < 40; ++i) {
        for (Index j = i + 1; j < 40; ++j) m(i, j) = m(j, i) = unif(rng);
    }
    const LowRankFactors sym = estimator_symmetrized(mask_chronological(to_sparse(m)), 3);
    const LowRankFactors orc = estimator_oracle(to_sparse(m), 3);
    EXPECT_LE((sym.to_dense() - orc.to_dense()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Estimators, ZeroImputedMatchesDenseSvdOfUpperTriangle) {
    const CoSbmSample s = sample_cosbm(config(80, 2, 20.0, 13));
    const PartialAdjacency a = mask_chronological(s.adjacency);
    SvdOptions opt;
    opt.tol = 1e-12;
    const LowRankFactors f = estimator_zero_imputed(a, 2, opt);
    const auto ref = oracle::dense_svd(a.to_dense(), 2);
    for (Index i = 0; i < 2; ++i) EXPECT_NEAR(f.d[i], ref.d[i], 1e-9 * ref.d[0]);
    EXPECT_LE(sin_theta(f.U, ref.U), 1e-8);
    EXPECT_LE(sin_theta(f.V, ref.V), 1e-8);
}

TEST(Estimators, OracleRecoversExactRankK) {
    const CoSbmSample s = sample_cosbm(config(120, 3, 30.0, 14));
    SvdOptions opt;
    opt.tol = 1e-12;
    const LowRankFactors f = estimator_oracle(to_sparse(s.truth.expected_dense()), 3, opt);
    EXPECT_LE(sin_theta(f.U, orthonormalize(s.truth.Z())), 1e-8);
    EXPECT_LE(sin_theta(f.V, orthonormalize(s.truth.Y())), 1e-8);
}

TEST(CouponCheck, TooFewRowsNeverCover) {
    EXPECT_EQ(coupon_check(config(200, 5, 20.0, 1), 4, 50), 0.0);
}

TEST(CouponCheck, SingleBlockAlwaysCovers) {
    for (Index ell : {1, 3, 20}) EXPECT_EQ(coupon_check(config(100, 1, 20.0, 2), ell, 30), 1.0);
}

TEST(CouponCheck, MatchesInclusionExclusion) {
    const Index k = 4;
    const Index ell = 10;
    const int reps = 600;
    const double p = oracle::coupon_probability(k, ell) * oracle::coupon_probability(k, ell + 1);
    const double got = coupon_check(config(200, k, 20.0, 3), ell, reps);
    EXPECT_NEAR(got, p, 4.0 * std::sqrt(p * (1.0 - p) / reps));
}

TEST(CouponCheck, RejectsBadArguments) {
    EXPECT_THROW(coupon_check(config(100, 2, 20.0, 1), 0, 5), InputError);
    EXPECT_THROW(coupon_check(config(100, 2, 20.0, 1), 51, 5), InputError);
    EXPECT_THROW(coupon_check(config(100, 2, 20.0, 1), 5, 0), InputError);
}

TEST(TwoBlockCounterexample, PermutedVersionIsIdentifiable) {
    const Index n = 200;
    const Matrix seg = two_block_counterexample(n, 1.0, 0.2);
    EXPECT_EQ(numerical_rank(seg, 1e-10), 2);
    for (Index ell : {1, 10, 50, 99}) EXPECT_EQ(identifiability_rank(seg, ell), 1);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        hits += identifiability_rank(two_block_counterexample(n, 1.0, 0.2, seed), 10) == 2;
    }
    EXPECT_GE(hits, 19);
    EXPECT_THROW(two_block_counterexample(7, 1.0, 0.2), InputError);
}

TEST(SampleCosbm, SymmetricNodesShareLabelsAndPropensities) {
    SimConfig cfg = config(200, 2, 20.0, 15);
    const CoSbmSample indep = sample_cosbm(cfg);
    cfg.symmetric_nodes = true;
    const CoSbmSample sym = sample_cosbm(cfg);
    EXPECT_EQ(sym.truth.y_labels, sym.truth.z_labels);
    EXPECT_EQ(sym.truth.theta_in, sym.truth.theta_out);
    EXPECT_EQ(sym.truth.z_labels, indep.truth.z_labels);
    EXPECT_NE(indep.truth.y_labels, indep.truth.z_labels);
    const Matrix e = sym.truth.expected_dense();
    EXPECT_LE((e - e.transpose()).cwiseAbs().maxCoeff(), 1e-12 * e.maxCoeff());
}
