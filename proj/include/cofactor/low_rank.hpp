#pragma once

#include "cofactor/types.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <string>

namespace cofactor {

/// Rank-k factorization U diag(d) V^T with column-orthonormal U, V and
/// nonnegative, nonincreasing d.
struct LowRankFactors {
    Matrix U;
    Vector d;
    Matrix V;

    LowRankFactors() = default;
    LowRankFactors(Matrix u, Vector dd, Matrix v) : U(std::move(u)), d(std::move(dd)), V(std::move(v)) {}

    /// Zero factors of the given shape: rank-k bases with zero weights.
    static LowRankFactors zeros(Index n, Index k) {
        return {Matrix::Identity(n, k), Vector::Zero(k), Matrix::Identity(n, k)};
    }

    [[nodiscard]] Index rows() const noexcept { return U.rows(); }
    [[nodiscard]] Index cols() const noexcept { return V.rows(); }
    [[nodiscard]] Index rank() const noexcept { return d.size(); }

    /// ||U diag(d) V^T||_F^2
    [[nodiscard]] double frob_sq() const { return d.squaredNorm(); }

    [[nodiscard]] Matrix to_dense() const { return U * d.asDiagonal() * V.transpose(); }

    [[nodiscard]] double entry(Index i, Index j) const {
        return (U.row(i).transpose().array() * d.array() * V.row(j).transpose().array()).sum();
    }

    /// Throws DimensionError or InputError when the invariants fail.
    void validate(double orth_tol = 1e-8) const {
        if (U.cols() != d.size() || V.cols() != d.size()) {
            throw DimensionError("factor ranks disagree");
        }
        if (!U.allFinite() || !V.allFinite() || !d.allFinite()) throw InputError("factors contain non-finite values");
        const Index k = d.size();
        if (k == 0) return;
        const Matrix I = Matrix::Identity(k, k);
        if ((U.transpose() * U - I).cwiseAbs().maxCoeff() > orth_tol) throw InputError("U is not column-orthonormal");
        if ((V.transpose() * V - I).cwiseAbs().maxCoeff() > orth_tol) throw InputError("V is not column-orthonormal");
        for (Index i = 0; i < k; ++i) {
            if (d[i] < 0.0) throw InputError("negative singular value");
            if (i > 0 && d[i] > d[i - 1]) throw InputError("singular values not sorted");
        }
    }
};

/// Make the largest-magnitude entry of each column of `primary` positive,
/// flipping the paired column of `secondary` alongside.
inline void canonicalize_signs(Matrix& primary, Matrix& secondary) {
    for (Index c = 0; c < primary.cols(); ++c) {
        Index arg = 0;
        primary.col(c).cwiseAbs().maxCoeff(&arg);
        if (primary(arg, c) < 0.0) {
            primary.col(c) *= -1.0;
            secondary.col(c) *= -1.0;
        }
    }
}

/// Thin QR orthonormalization with a positive-diagonal R, so already
/// orthonormal input is returned unchanged up to roundoff.
inline Matrix orthonormalize(const Eigen::Ref<const Matrix>& m) {
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
    const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
    for (Index c = 0; c < m.cols(); ++c) {
        if (r(c, c) < 0.0) q.col(c) *= -1.0;
    }
    return q;
}

/// Squared Frobenius distance between two factorizations without forming either:
/// ||A||^2 + ||B||^2 - 2 tr(D_a U_a^T U_b D_b V_b^T V_a). O(n k^2).
inline double frob_sq_distance(const LowRankFactors& a, const LowRankFactors& b) {
    const Matrix left = a.U.transpose() * b.U;   // ka x kb
    const Matrix right = b.V.transpose() * a.V;  // kb x ka
    const double cross = (a.d.asDiagonal() * left * b.d.asDiagonal() * right).trace();
    return std::max(0.0, a.frob_sq() + b.frob_sq() - 2.0 * cross);
}

}  // namespace cofactor
