#pragma once

#include "cofactor/low_rank.hpp"
#include "cofactor/varimax.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <limits>
#include <vector>

namespace cofactor {

/// ||sin Theta(U, U_hat)||_F = ||(I - U U^T) U_hat||_F for orthonormal U and U_hat.
inline double sin_theta(const Matrix& u, const Matrix& u_hat) {
    if (u.rows() != u_hat.rows() || u.cols() != u_hat.cols()) throw DimensionError("sin_theta: shape mismatch");
    return (u_hat - u * (u.transpose() * u_hat)).norm();
}

/// Rows in `rows` of `m`, re-orthonormalized.
inline Matrix restrict_orthonormal(const Matrix& m, IndexRange rows) {
    if (rows.begin < 0 || rows.end > m.rows()) throw DimensionError("restrict_orthonormal: range exceeds rows");
    return orthonormalize(m.middleRows(rows.begin, rows.size()));
}

/// sin Theta(U, U_hat) + sin Theta(V, V_hat), each over its identified rows.
inline double subspace_loss(const Matrix& u, const Matrix& u_hat, const Matrix& v, const Matrix& v_hat,
                            IndexRange rows_u, IndexRange rows_v) {
    return sin_theta(restrict_orthonormal(u, rows_u), restrict_orthonormal(u_hat, rows_u)) +
           sin_theta(restrict_orthonormal(v, rows_v), restrict_orthonormal(v_hat, rows_v));
}

inline double subspace_loss(const Matrix& u, const Matrix& u_hat, const Matrix& v, const Matrix& v_hat) {
    return sin_theta(u, u_hat) + sin_theta(v, v_hat);
}

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(k^3)). Returns assignment[row] = column.
inline std::vector<Index> hungarian(const Matrix& cost) {
    const Index k = cost.rows();
    if (cost.cols() != k) throw DimensionError("hungarian: cost matrix must be square");
    if (!cost.allFinite()) throw InputError("hungarian: non-finite cost");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is a virtual sentinel.
    std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
    std::vector<Index> match(k + 1, 0), way(k + 1, 0);
    for (Index i = 1; i <= k; ++i) {
        match[0] = i;
        Index j0 = 0;
        std::vector<double> minv(k + 1, inf);
        std::vector<bool> used(k + 1, false);
        do {
            used[j0] = true;
            const Index i0 = match[j0];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= k; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= k; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const Index j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Index> assignment(k, -1);
    for (Index j = 1; j <= k; ++j) assignment[match[j] - 1] = j - 1;
    return assignment;
}

struct AlignmentResult {
    Matrix P;                       ///< signed permutation with Z ~ Z_hat P
    double cost = 0.0;              ///< ||Z - Z_hat P||_F^2
    std::vector<bool> flipped;      ///< columns of Z_hat negated by the skew pass
    std::vector<bool> flipped_ref;  ///< columns of Z negated by the skew pass
};

/// Signed permutation aligning Z_hat to Z: force positive skew on the columns of
/// both, then match columns by squared distance with the Hungarian method.
/// An upper bound on min over signed permutations, exact when the skew signs
/// agree with the optimum.
inline AlignmentResult align_factors(const Matrix& z, const Matrix& z_hat) {
    if (z.rows() != z_hat.rows() || z.cols() != z_hat.cols()) throw DimensionError("align_factors: shape mismatch");
    const Index k = z.cols();
    AlignmentResult out;
    out.flipped.assign(static_cast<std::size_t>(k), false);
    out.flipped_ref.assign(static_cast<std::size_t>(k), false);
    Vector s_hat = Vector::Ones(k);
    Vector s_ref = Vector::Ones(k);
    for (Index c = 0; c < k; ++c) {
        if (skewness(z_hat.col(c)) < 0.0) {
            s_hat[c] = -1.0;
            out.flipped[static_cast<std::size_t>(c)] = true;
        }
        if (skewness(z.col(c)) < 0.0) {
            s_ref[c] = -1.0;
            out.flipped_ref[static_cast<std::size_t>(c)] = true;
        }
    }
    const Matrix zs = z * s_ref.asDiagonal();
    const Matrix zh = z_hat * s_hat.asDiagonal();
    Matrix cost(k, k);
    for (Index a = 0; a < k; ++a) {
        for (Index b = 0; b < k; ++b) cost(a, b) = (zs.col(a) - zh.col(b)).squaredNorm();
    }
    const std::vector<Index> assign = hungarian(cost);
    out.P = Matrix::Zero(k, k);
    for (Index a = 0; a < k; ++a) {
        const Index b = assign[static_cast<std::size_t>(a)];
        out.P(b, a) = s_hat[b] * s_ref[a];
    }
    out.cost = (z - z_hat * out.P).squaredNorm();
    return out;
}

/// sqrt((||Z - Z_hat P_Z||^2 + ||Y - Y_hat P_Y||^2) / (n k)) over identified rows,
/// with n the mean identified row count of the two sides.
inline double factor_rmse(const Matrix& z, const Matrix& z_hat, const Matrix& y, const Matrix& y_hat,
                          IndexRange rows_z, IndexRange rows_y) {
    if (z.rows() != z_hat.rows() || y.rows() != y_hat.rows() || z.cols() != z_hat.cols() ||
        y.cols() != y_hat.cols() || z.cols() != y.cols()) {
        throw DimensionError("factor_rmse: shape mismatch");
    }
    if (rows_z.begin < 0 || rows_z.end > z.rows() || rows_y.begin < 0 || rows_y.end > y.rows()) {
        throw DimensionError("factor_rmse: range exceeds rows");
    }
    const Matrix zr = z.middleRows(rows_z.begin, rows_z.size());
    const Matrix zhr = z_hat.middleRows(rows_z.begin, rows_z.size());
    const Matrix yr = y.middleRows(rows_y.begin, rows_y.size());
    const Matrix yhr = y_hat.middleRows(rows_y.begin, rows_y.size());
    const double cz = align_factors(zr, zhr).cost;
    const double cy = align_factors(yr, yhr).cost;
    const double rows = 0.5 * static_cast<double>(rows_z.size() + rows_y.size());
    return std::sqrt((cz + cy) / (rows * static_cast<double>(z.cols())));
}

inline double factor_rmse(const Matrix& z, const Matrix& z_hat, const Matrix& y, const Matrix& y_hat) {
    return factor_rmse(z, z_hat, y, y_hat, {0, z.rows()}, {0, y.rows()});
}

}  // namespace cofactor
