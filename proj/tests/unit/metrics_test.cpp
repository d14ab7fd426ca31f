#include "cofactor/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cofactor;

namespace {

Matrix signed_permutation(Index k, std::mt19937_64& rng) {
    std::vector<Index> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::bernoulli_distribution coin(0.5);
    Matrix q = Matrix::Zero(k, k);
    for (Index a = 0; a < k; ++a) q(perm[static_cast<std::size_t>(a)], a) = coin(rng) ? -1.0 : 1.0;
    return q;
}

/// Positively skewed, heavy-tailed loadings.
Matrix leptokurtic(Index n, Index k, std::mt19937_64& rng) {
    std::exponential_distribution<double> ex(1.0);
    Matrix z(n, k);
    for (Index c = 0; c < k; ++c) {
        for (Index r = 0; r < n; ++r) z(r, c) = std::pow(ex(rng), 2.0);
    }
    return z;
}

}  // namespace

TEST(SinTheta, SameSubspaceIsZero) {
    std::mt19937_64 rng(51);
    const Matrix u = oracle::random_orthonormal(30, 4, rng);
    const Matrix r = oracle::random_orthonormal(4, 4, rng);
    EXPECT_NEAR(sin_theta(u, u * r), 0.0, 1e-7);
}

TEST(SinTheta, OrthogonalComplementIsRootK) {
    const Matrix eye = Matrix::Identity(10, 10);
    EXPECT_NEAR(sin_theta(eye.leftCols(3), eye.middleCols(3, 3)), std::sqrt(3.0), 1e-14);
}

TEST(SinTheta, MatchesProjectorOracleAndProperties) {
    std::mt19937_64 rng(52);
    for (int rep = 0; rep < 100; ++rep) {
        const Index k = 1 + rep % 5;
        const Matrix u = oracle::random_orthonormal(20, k, rng);
        const Matrix v = oracle::random_orthonormal(20, k, rng);
        const double s = sin_theta(u, v);
        EXPECT_NEAR(s, oracle::projector_sin_theta(u, v), 1e-10);
        EXPECT_NEAR(s, sin_theta(v, u), 1e-12);
        EXPECT_NEAR(s, sin_theta(u * oracle::random_orthonormal(k, k, rng), v), 1e-10);
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, std::sqrt(static_cast<double>(k)) + 1e-12);
    }
    EXPECT_THROW(sin_theta(Matrix::Zero(5, 2), Matrix::Zero(5, 3)), DimensionError);
}

TEST(SubspaceLoss, SumOfSides) {
    std::mt19937_64 rng(53);
    const Matrix eye = Matrix::Identity(12, 12);
    const Matrix u = eye.leftCols(3);
    EXPECT_NEAR(subspace_loss(u, u, u, u), 0.0, 1e-14);
    EXPECT_NEAR(subspace_loss(u, u, u, eye.rightCols(3)), std::sqrt(3.0), 1e-14);
    const Matrix a = oracle::random_orthonormal(12, 3, rng);
    const Matrix b = oracle::random_orthonormal(12, 3, rng);
    EXPECT_DOUBLE_EQ(subspace_loss(a, b, b, a), sin_theta(a, b) + sin_theta(b, a));
}

TEST(SubspaceLoss, RestrictsToIdentifiedRows) {
    std::mt19937_64 rng(54);
    const Matrix u = oracle::random_orthonormal(40, 3, rng);
    Matrix u_hat = u;
    u_hat.bottomRows(4) = oracle::random_orthonormal(4, 3, rng);
    const Matrix v = oracle::random_orthonormal(40, 3, rng);
    Matrix v_hat = v;
    v_hat.topRows(4).setConstant(7.0);
    EXPECT_NEAR(subspace_loss(u, u_hat, v, v_hat, {0, 36}, {4, 40}), 0.0, 1e-7);
    EXPECT_GT(subspace_loss(u, orthonormalize(u_hat), v, orthonormalize(v_hat)), 0.01);
}

TEST(Hungarian, MatchesExhaustiveSearch) {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> unif(0.0, 10.0);
    for (int rep = 0; rep < 50; ++rep) {
        const Index k = 1 + rep % 6;
        Matrix cost(k, k);
        for (Index i = 0; i < k; ++i) {
            for (Index j = 0; j < k; ++j) cost(i, j) = unif(rng);
        }
        const auto assign = hungarian(cost);
        double got = 0.0;
        for (Index i = 0; i < k; ++i) got += cost(i, assign[static_cast<std::size_t>(i)]);
        std::vector<Index> perm(static_cast<std::size_t>(k));
        std::iota(perm.begin(), perm.end(), Index{0});
        double best = std::numeric_limits<double>::infinity();
        do {
            double c = 0.0;
            for (Index i = 0; i < k; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
            best = std::min(best, c);
        } while (std::next_permutation(perm.begin(), perm.end()));
        EXPECT_NEAR(got, best, 1e-12);
    }
}

TEST(AlignFactors, RecoversSignedPermutation) {
    std::mt19937_64 rng(56);
    for (int rep = 0; rep < 20; ++rep) {
        const Index k = 2 + rep % 4;
        const Matrix z = leptokurtic(200, k, rng);
        const Matrix q = signed_permutation(k, rng);
        const AlignmentResult res = align_factors(z, z * q);
        EXPECT_LE((res.P - q.transpose()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_NEAR(res.cost, 0.0, 1e-20);
        EXPECT_LE((res.P.transpose() * res.P - Matrix::Identity(k, k)).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(AlignFactors, IdenticalInputsGiveIdentity) {
    std::mt19937_64 rng(57);
    const Matrix z = leptokurtic(100, 3, rng);
    const AlignmentResult res = align_factors(z, z);
    EXPECT_EQ(res.P, Matrix::Identity(3, 3));
    EXPECT_EQ(res.cost, 0.0);
}

TEST(AlignFactors, AgreesWithBruteForceForTwoFactors) {
    std::mt19937_64 rng(58);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (int rep = 0; rep < 100; ++rep) {
        const Matrix z = leptokurtic(150, 2, rng);
        Matrix e(150, 2);
        for (Index c = 0; c < 2; ++c) {
            for (Index r = 0; r < 150; ++r) e(r, c) = noise(rng);
        }
        const Matrix z_hat = (z + e) * signed_permutation(2, rng);
        EXPECT_NEAR(align_factors(z, z_hat).cost, oracle::brute_force_signed_cost(z, z_hat), 1e-10);
    }
}

TEST(AlignFactors, CostInvariantToPrePermutation) {
    std::mt19937_64 rng(59);
    const Matrix z = leptokurtic(120, 4, rng);
    const Matrix z_hat = z + 0.1 * leptokurtic(120, 4, rng);
    const double base = align_factors(z, z_hat).cost;
    for (int rep = 0; rep < 10; ++rep) {
        EXPECT_NEAR(align_factors(z, z_hat * signed_permutation(4, rng)).cost, base, 1e-10);
    }
}

TEST(FactorRmse, ZeroForSignedPermutations) {
    std::mt19937_64 rng(60);
    const Matrix z = leptokurtic(80, 3, rng);
    const Matrix y = leptokurtic(80, 3, rng);
    EXPECT_NEAR(factor_rmse(z, z * signed_permutation(3, rng), y, y * signed_permutation(3, rng)), 0.0, 1e-12);
}

TEST(FactorRmse, SingleElementPerturbation) {
    std::mt19937_64 rng(61);
    const Index n = 50;
    const Index k = 2;
    const Matrix z = leptokurtic(n, k, rng);
    const Matrix y = leptokurtic(n, k, rng);
    Matrix z_hat = z;
    const double d = 0.25;
    z_hat(7, 1) += d;
    EXPECT_NEAR(factor_rmse(z, z_hat, y, y), d / std::sqrt(static_cast<double>(n * k)), 1e-12);
}

TEST(FactorRmse, NoiseLevelLimit) {
    std::mt19937_64 rng(62);
    const Index n = 10000;
    const Index k = 3;
    const double s = 0.2;
    std::normal_distribution<double> g(0.0, s);
    const Matrix z = leptokurtic(n, k, rng);
    const Matrix y = leptokurtic(n, k, rng);
    Matrix zh = z;
    Matrix yh = y;
    for (Index c = 0; c < k; ++c) {
        for (Index r = 0; r < n; ++r) {
            zh(r, c) += g(rng);
            yh(r, c) += g(rng);
        }
    }
    EXPECT_NEAR(factor_rmse(z, zh, y, yh), s * std::sqrt(2.0), 0.05 * s * std::sqrt(2.0));
}

TEST(FactorRmse, MatchesBruteForceOracle) {
    std::mt19937_64 rng(63);
    std::normal_distribution<double> noise(0.0, 0.2);
    for (int rep = 0; rep < 100; ++rep) {
        const Index n = 60;
        const Matrix z = leptokurtic(n, 2, rng);
        const Matrix y = leptokurtic(n, 2, rng);
        Matrix zh = z * signed_permutation(2, rng);
        Matrix yh = y * signed_permutation(2, rng);
        for (Index r = 0; r < n; ++r) {
            zh(r, 0) += noise(rng);
            yh(r, 1) += noise(rng);
        }
        const IndexRange rz{0, n - 6};
        const IndexRange ry{6, n};
        const double cz = oracle::brute_force_signed_cost(z.topRows(n - 6), zh.topRows(n - 6));
        const double cy = oracle::brute_force_signed_cost(y.bottomRows(n - 6), yh.bottomRows(n - 6));
        const double want = std::sqrt((cz + cy) / (static_cast<double>(n - 6) * 2.0));
        EXPECT_NEAR(factor_rmse(z, zh, y, yh, rz, ry), want, 1e-10);
    }
}

TEST(FactorRmse, ShapeChecks) {
    EXPECT_THROW(factor_rmse(Matrix::Zero(5, 2), Matrix::Zero(5, 3), Matrix::Zero(5, 2), Matrix::Zero(5, 2)),
                 DimensionError);
    EXPECT_THROW(factor_rmse(Matrix::Zero(5, 2), Matrix::Zero(5, 2), Matrix::Zero(5, 2), Matrix::Zero(5, 2), {0, 6},
                             {0, 5}),
                 DimensionError);
}
