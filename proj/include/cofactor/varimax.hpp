#pragma once

#include "cofactor/low_rank.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace cofactor {

/// v(R, U) = sum_l (1/n) sum_i ([UR]_il^4 - ((1/n) sum_j [UR]_jl^2)^2)
inline double varimax_criterion(const Matrix& loadings) {
    const double n = static_cast<double>(loadings.rows());
    double v = 0.0;
    for (Index l = 0; l < loadings.cols(); ++l) {
        const auto sq = loadings.col(l).array().square();
        const double m2 = sq.sum() / n;
        v += sq.square().sum() / n - m2 * m2;
    }
    return v;
}

inline double varimax_criterion(const Matrix& r, const Matrix& u) { return varimax_criterion(Matrix(u * r)); }

struct VarimaxOptions {
    int max_sweeps = 1000;
    double tol = 1e-10;
};

struct VarimaxResult {
    Matrix rotation;
    double criterion = 0.0;
    int sweeps = 0;
};

namespace detail {

/// Angle maximizing the pairwise criterion of columns (x, y) after
/// x' = c x + s y, y' = -s x + c y.
inline double varimax_pair_angle(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
    const double n = static_cast<double>(x.size());
    const Eigen::ArrayXd u = x.array().square() - y.array().square();
    const Eigen::ArrayXd v = 2.0 * x.array() * y.array();
    const double A = u.sum();
    const double B = v.sum();
    const double C = (u.square() - v.square()).sum();
    const double D = 2.0 * (u * v).sum();
    return 0.25 * std::atan2(D - 2.0 * A * B / n, C - (A * A - B * B) / n);
}

}  // namespace detail

/// Orthogonal R locally maximizing v(R, U) by pairwise plane-rotation sweeps
/// starting from the identity.
inline VarimaxResult varimax_rotation(const Matrix& u, const VarimaxOptions& opt = {}) {
    const Index k = u.cols();
    VarimaxResult out{Matrix::Identity(k, k), varimax_criterion(u), 0};
    if (k < 2) return out;

    Matrix L = u;
    double current = out.criterion;
    for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        out.sweeps = sweep;
        for (Index p = 0; p + 1 < k; ++p) {
            for (Index q = p + 1; q < k; ++q) {
                const double phi = detail::varimax_pair_angle(L.col(p), L.col(q));
                const double c = std::cos(phi);
                const double s = std::sin(phi);
                if (std::abs(s) < 1e-15) continue;
                const Vector lp = L.col(p);
                const Vector lq = L.col(q);
                L.col(p) = c * lp + s * lq;
                L.col(q) = -s * lp + c * lq;
                const Vector rp = out.rotation.col(p);
                const Vector rq = out.rotation.col(q);
                out.rotation.col(p) = c * rp + s * rq;
                out.rotation.col(q) = -s * rp + c * rq;
            }
        }
        const double next = varimax_criterion(L);
        const double gain = next - current;
        current = next;
        if (gain <= opt.tol * std::max(std::abs(current), 1e-300)) break;
    }
    out.rotation = orthonormalize(out.rotation);
    out.criterion = varimax_criterion(Matrix(u * out.rotation));
    return out;
}

/// Standardized third central moment; 0 for a constant column.
inline double skewness(const Eigen::Ref<const Vector>& x) {
    const double n = static_cast<double>(x.size());
    if (n == 0) return 0.0;
    const Eigen::ArrayXd c = x.array() - x.mean();
    const double m2 = c.square().sum() / n;
    if (m2 <= 0.0) return 0.0;
    const double m3 = c.cube().sum() / n;
    return m3 / std::pow(m2, 1.5);
}

/// Varimax co-factors Z = sqrt(n) U R_U, Y = sqrt(n) V R_V, B = R_U^T D R_V / n,
/// with columns of Z and Y sign-flipped to nonnegative skew.
struct CoFactorModel {
    Matrix Z_hat;
    Matrix Y_hat;
    Matrix B_hat;
    IndexRange identified_rows_z;
    IndexRange identified_rows_y;
    std::vector<bool> flipped_z;
    std::vector<bool> flipped_y;
    Matrix rotation_u;
    Matrix rotation_v;

    [[nodiscard]] Index size() const noexcept { return Z_hat.rows(); }
    [[nodiscard]] Index rank() const noexcept { return Z_hat.cols(); }
    [[nodiscard]] Matrix reconstruct() const { return Z_hat * B_hat * Y_hat.transpose(); }
};

/// Negate columns of negative skew in place; `b` rows (side z) or columns (side y)
/// follow so that Z B Y^T is preserved. Returns the flip mask.
inline std::vector<bool> apply_skew_signs(Matrix& loadings, Matrix& b, bool rows_of_b) {
    std::vector<bool> flipped(static_cast<std::size_t>(loadings.cols()), false);
    for (Index c = 0; c < loadings.cols(); ++c) {
        if (skewness(loadings.col(c)) < 0.0) {
            loadings.col(c) *= -1.0;
            if (rows_of_b) {
                b.row(c) *= -1.0;
            } else {
                b.col(c) *= -1.0;
            }
            flipped[static_cast<std::size_t>(c)] = true;
        }
    }
    return flipped;
}

inline CoFactorModel build_cofactors(const LowRankFactors& fit, IndexRange rows_z, IndexRange rows_y,
                                     const VarimaxOptions& opt = {}) {
    if (fit.U.cols() != fit.rank() || fit.V.cols() != fit.rank() || fit.U.rows() != fit.V.rows()) {
        throw DimensionError("build_cofactors: factor shapes disagree");
    }
    const Index n = fit.rows();
    if (rows_z.begin < 0 || rows_z.end > n || rows_y.begin < 0 || rows_y.end > n) {
        throw DimensionError("build_cofactors: identified ranges exceed n");
    }
    const double root_n = std::sqrt(static_cast<double>(n));
    CoFactorModel m;
    m.rotation_u = varimax_rotation(fit.U, opt).rotation;
    m.rotation_v = varimax_rotation(fit.V, opt).rotation;
    m.Z_hat = root_n * fit.U * m.rotation_u;
    m.Y_hat = root_n * fit.V * m.rotation_v;
    m.B_hat = m.rotation_u.transpose() * fit.d.asDiagonal() * m.rotation_v / static_cast<double>(n);
    m.flipped_z = apply_skew_signs(m.Z_hat, m.B_hat, true);
    m.flipped_y = apply_skew_signs(m.Y_hat, m.B_hat, false);
    m.identified_rows_z = rows_z;
    m.identified_rows_y = rows_y;
    return m;
}

inline CoFactorModel build_cofactors(const LowRankFactors& fit, const VarimaxOptions& opt = {}) {
    return build_cofactors(fit, {0, fit.rows()}, {0, fit.rows()}, opt);
}

/// A_ij ~ Z_i B Y_j^T for an identified outgoing row i and incoming row j.
inline double impute_forward(const CoFactorModel& m, Index i, Index j) {
    if (!m.identified_rows_z.contains(i)) {
        throw UnidentifiedError("impute_forward: node " + std::to_string(i) + " has no identified outgoing factors");
    }
    if (!m.identified_rows_y.contains(j)) {
        throw UnidentifiedError("impute_forward: node " + std::to_string(j) + " has no identified incoming factors");
    }
    return m.Z_hat.row(i).dot(m.B_hat * m.Y_hat.row(j).transpose());
}

/// For each node j, sum of A_ij over identified i older than j (index i > j).
/// NaN where j itself is unidentified on the incoming side.
inline Vector imputed_indegree(const CoFactorModel& m) {
    const Index n = m.size();
    const Index k = m.rank();
    Vector out = Vector::Constant(n, std::numeric_limits<double>::quiet_NaN());
    Eigen::RowVectorXd suffix = Eigen::RowVectorXd::Zero(k);
    for (Index j = n - 1; j >= 0; --j) {
        if (m.identified_rows_y.contains(j)) out[j] = (suffix * m.B_hat).dot(m.Y_hat.row(j));
        if (m.identified_rows_z.contains(j)) suffix += m.Z_hat.row(j);
    }
    return out;
}

}  // namespace cofactor
