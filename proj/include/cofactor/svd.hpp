#pragma once

#include "cofactor/linear_operator.hpp"
#include "cofactor/low_rank.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace cofactor {

struct SvdOptions {
    /// Residual tolerance relative to the largest Ritz value.
    double tol = 1e-8;
    int max_restarts = 1000;
    /// Krylov subspace dimension; 0 selects max(2k + 10, 20).
    Index krylov_dim = 0;
    std::uint64_t seed = 0x5eed;
    /// Optional start vector (length = operator columns). Random when empty.
    std::optional<Vector> start;
};

/// Diagnostics from one Krylov solve.
struct SvdInfo {
    int restarts = 0;
    Index matvecs = 0;
    Vector residuals;
};

class SvdConvergenceError : public ConvergenceError {
public:
    SvdConvergenceError(const std::string& what, Vector residuals)
        : ConvergenceError(what), residuals_(std::move(residuals)) {}
    [[nodiscard]] const Vector& residuals() const noexcept { return residuals_; }

private:
    Vector residuals_;
};

struct EigenPairs {
    Vector values;   // nonincreasing
    Matrix vectors;  // n x k, orthonormal
};

namespace detail {

inline Index default_krylov_dim(Index k, Index limit, Index requested) {
    Index kd = requested > 0 ? requested : std::max<Index>(2 * k + 10, 20);
    kd = std::max(kd, k + 1);
    return std::min(kd, limit);
}

inline Vector random_unit(Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = g(rng);
    return v / v.norm();
}

/// Orthogonalize v against the first `cols` columns of `basis` (two Gram-Schmidt
/// passes). Returns the accumulated projection coefficients.
inline Vector reorthogonalize(const Matrix& basis, Index cols, Eigen::Ref<Vector> v) {
    Vector coef = Vector::Zero(cols);
    if (cols == 0) return coef;
    for (int pass = 0; pass < 2; ++pass) {
        const Vector c = basis.leftCols(cols).transpose() * v;
        v.noalias() -= basis.leftCols(cols) * c;
        coef += c;
    }
    return coef;
}

/// Replace `v` with a random unit vector orthogonal to the basis, or zero when
/// the basis already spans the space. Returns false in the latter case.
inline bool random_orthogonal(const Matrix& basis, Index cols, Eigen::Ref<Vector> v, std::mt19937_64& rng) {
    const Index n = v.size();
    if (cols >= n) {
        v.setZero();
        return false;
    }
    for (int attempt = 0; attempt < 5; ++attempt) {
        v = random_unit(n, rng);
        reorthogonalize(basis, cols, v);
        const double nv = v.norm();
        if (nv > 1e-8) {
            v /= nv;
            return true;
        }
    }
    v.setZero();
    return false;
}

}  // namespace detail

/// Top-k singular triplets of a linear operator by Golub-Kahan-Lanczos
/// bidiagonalization with full reorthogonalization and thick restarts.
///
/// Converged when every residual ||A^T u_i - s_i v_i|| <= tol * s_1 (A v_i = s_i u_i
/// holds exactly in the Krylov basis). Output columns are sign-canonical: the
/// largest-magnitude entry of each u_i is positive.
template <LinearOperator Op>
LowRankFactors truncated_svd(const Op& op, Index k, const SvdOptions& opt = {}, SvdInfo* info = nullptr) {
    const Index m = op.rows();
    const Index n = op.cols();
    if (k < 1 || k > std::min(m, n)) {
        throw DimensionError("truncated_svd: rank " + std::to_string(k) + " outside [1, " +
                             std::to_string(std::min(m, n)) + "]");
    }
    const Index kd = detail::default_krylov_dim(k, std::min(m, n), opt.krylov_dim);
    const Index keep = std::min<Index>(k + (kd - k) / 2, kd - 1);

    std::mt19937_64 rng(opt.seed);
    Matrix P = Matrix::Zero(m, kd);
    Matrix Q = Matrix::Zero(n, kd + 1);
    Matrix B = Matrix::Zero(kd, kd);
    Vector work_m(m);
    Vector work_n(n);

    if (opt.start && opt.start->size() == n && opt.start->norm() > 0.0) {
        Q.col(0) = *opt.start / opt.start->norm();
    } else {
        if (opt.start && opt.start->size() != n) throw DimensionError("truncated_svd: start vector length");
        Q.col(0) = detail::random_unit(n, rng);
    }

    double anorm = 0.0;
    Index matvecs = 0;
    Index locked = 0;
    Vector residuals = Vector::Constant(k, std::numeric_limits<double>::infinity());
    Eigen::JacobiSVD<Matrix> small;

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        double beta = 0.0;
        for (Index j = locked; j < kd; ++j) {
            op.apply(Q.col(j), work_m);
            ++matvecs;
            const double pre = work_m.norm();
            anorm = std::max(anorm, pre);
            const Vector c = detail::reorthogonalize(P, j, work_m);
            B.col(j).head(j) = c;
            double alpha = work_m.norm();
            if (alpha <= 1e-13 * anorm || alpha == 0.0) {
                alpha = 0.0;
                detail::random_orthogonal(P, j, work_m, rng);
            } else {
                work_m /= alpha;
            }
            B(j, j) = alpha;
            P.col(j) = work_m;

            op.apply_adjoint(P.col(j), work_n);
            ++matvecs;
            anorm = std::max(anorm, work_n.norm());
            detail::reorthogonalize(Q, j + 1, work_n);
            beta = work_n.norm();
            if (beta <= 1e-13 * anorm || beta == 0.0) {
                beta = 0.0;
                detail::random_orthogonal(Q, j + 1, work_n, rng);
            } else {
                work_n /= beta;
            }
            Q.col(j + 1) = work_n;
        }

        small.compute(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vector& sigma = small.singularValues();
        const Matrix& X = small.matrixU();
        const Matrix& Y = small.matrixV();
        for (Index i = 0; i < k; ++i) residuals[i] = std::abs(beta * X(kd - 1, i));
        const double scale = sigma[0];
        const bool done = (residuals.array() <= opt.tol * scale).all();

        if (done || restart == opt.max_restarts) {
            if (info) {
                info->restarts = restart;
                info->matvecs = matvecs;
                info->residuals = residuals;
            }
            if (!done) {
                throw SvdConvergenceError("truncated_svd: no convergence after " + std::to_string(restart) +
                                              " restarts (max residual " +
                                              std::to_string(residuals.maxCoeff() / std::max(scale, 1e-300)) +
                                              " relative)",
                                          residuals);
            }
            Matrix U = P * X.leftCols(k);
            Matrix V = Q.leftCols(kd) * Y.leftCols(k);
            const Matrix I = Matrix::Identity(k, k);
            if ((U.transpose() * U - I).cwiseAbs().maxCoeff() > 1e-12) U = orthonormalize(U);
            if ((V.transpose() * V - I).cwiseAbs().maxCoeff() > 1e-12) V = orthonormalize(V);
            canonicalize_signs(U, V);
            return {std::move(U), sigma.head(k), std::move(V)};
        }

        // Thick restart: keep the leading Ritz vectors and continue from the residual direction.
        const Matrix P_keep = P * X.leftCols(keep);
        const Matrix Q_keep = Q.leftCols(kd) * Y.leftCols(keep);
        const Vector q_next = Q.col(kd);
        P.leftCols(keep) = P_keep;
        Q.leftCols(keep) = Q_keep;
        Q.col(keep) = q_next;
        B.setZero();
        for (Index i = 0; i < keep; ++i) B(i, i) = sigma[i];
        locked = keep;
    }
    throw ConvergenceError("truncated_svd: unreachable");
}

/// Top-k eigenpairs (largest algebraic eigenvalues) of a symmetric operator by
/// Lanczos with full reorthogonalization and thick restarts.
template <SymmetricOperator Op>
EigenPairs symmetric_eigs(const Op& op, Index k, const SvdOptions& opt = {}, SvdInfo* info = nullptr) {
    const Index n = op.rows();
    if (k < 1 || k > n) {
        throw DimensionError("symmetric_eigs: count " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    }
    const Index kd = detail::default_krylov_dim(k, n, opt.krylov_dim);
    const Index keep = std::min<Index>(k + (kd - k) / 2, kd - 1);

    std::mt19937_64 rng(opt.seed);
    Matrix Q = Matrix::Zero(n, kd + 1);
    Matrix T = Matrix::Zero(kd, kd);
    Vector w(n);

    if (opt.start && opt.start->size() == n && opt.start->norm() > 0.0) {
        Q.col(0) = *opt.start / opt.start->norm();
    } else {
        if (opt.start && opt.start->size() != n) throw DimensionError("symmetric_eigs: start vector length");
        Q.col(0) = detail::random_unit(n, rng);
    }

    double anorm = 0.0;
    Index matvecs = 0;
    Index locked = 0;
    Vector residuals = Vector::Constant(k, std::numeric_limits<double>::infinity());
    Eigen::SelfAdjointEigenSolver<Matrix> small;

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        double beta = 0.0;
        for (Index j = locked; j < kd; ++j) {
            op.apply(Q.col(j), w);
            ++matvecs;
            anorm = std::max(anorm, w.norm());
            const Vector h = detail::reorthogonalize(Q, j + 1, w);
            T.col(j).head(j + 1) = h;
            beta = w.norm();
            if (beta <= 1e-13 * anorm || beta == 0.0) {
                beta = 0.0;
                detail::random_orthogonal(Q, j + 1, w, rng);
            } else {
                w /= beta;
            }
            Q.col(j + 1) = w;
        }

        const Matrix Tsym = T.triangularView<Eigen::Upper>().toDenseMatrix() +
                            T.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().transpose();
        small.compute(Tsym);
        // Ascending order from the solver; reverse to nonincreasing.
        const Vector theta = small.eigenvalues().reverse();
        const Matrix Y = small.eigenvectors().rowwise().reverse();
        for (Index i = 0; i < k; ++i) residuals[i] = std::abs(beta * Y(kd - 1, i));
        const double scale = theta.cwiseAbs().maxCoeff();
        const bool done = (residuals.array() <= opt.tol * scale).all();

        if (done || restart == opt.max_restarts) {
            if (info) {
                info->restarts = restart;
                info->matvecs = matvecs;
                info->residuals = residuals;
            }
            if (!done) {
                throw SvdConvergenceError("symmetric_eigs: no convergence after " + std::to_string(restart) +
                                              " restarts",
                                          residuals);
            }
            Matrix X = Q.leftCols(kd) * Y.leftCols(k);
            if ((X.transpose() * X - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-12) X = orthonormalize(X);
            Matrix unused = X;
            canonicalize_signs(X, unused);
            return {theta.head(k), std::move(X)};
        }

        const Matrix Q_keep = Q.leftCols(kd) * Y.leftCols(keep);
        const Vector q_next = Q.col(kd);
        Q.leftCols(keep) = Q_keep;
        Q.col(keep) = q_next;
        T.setZero();
        for (Index i = 0; i < keep; ++i) T(i, i) = theta[i];
        locked = keep;
    }
    throw ConvergenceError("symmetric_eigs: unreachable");
}

}  // namespace cofactor
