#pragma once

#include "cofactor/low_rank.hpp"
#include "cofactor/partial_adjacency.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace cofactor {

/// Per-caller scratch space for ImpliedMatrix products. Contents never carry
/// meaning across calls.
struct WorkBuffers {
    Matrix w;        // k x n: column j holds (D V^T)_{.j} x_j (or U_{j.}^T y_j for the adjoint)
    Matrix w_tilde;  // k x n: suffix sums of w (prefix sums for the adjoint)
    Vector proj;     // k

    void ensure(Index k, Index n) {
        if (w.rows() != k || w.cols() != n) {
            w.resize(k, n);
            w_tilde.resize(k, n);
        }
        if (proj.size() != k) proj.resize(k);
    }
};

/// The completed matrix P_Omega(A) + P_Omega^perp(Z) held implicitly as
///
///     P_{nonzeros}(A) - P_L(Z) - P_U(Z) + Z
///
/// where U is the strict upper triangle and L every other observed cell (observed
/// lower-triangle cells and, when observed, the diagonal). Products cost
/// O(nnz + |L| k + n k) and never touch the O(n^2) observed zeros.
class ImpliedMatrix {
public:
    ImpliedMatrix(const PartialAdjacency& data, const LowRankFactors& z) : data_(&data) { rebind(z); }

    /// Point at new factors; recomputes the cached values of Z on L.
    void rebind(const LowRankFactors& z) {
        if (z.rows() != data_->size() || z.cols() != data_->size()) {
            throw DimensionError("ImpliedMatrix: factor dimensions do not match the data");
        }
        if (z.U.cols() != z.rank() || z.V.cols() != z.rank()) throw DimensionError("ImpliedMatrix: factor ranks");
        z_ = &z;
        ut_ = z.U.transpose();
        dvt_ = z.d.asDiagonal() * z.V.transpose();

        const auto& lower = data_->lower_observed();
        lower_z_.resize(lower.size());
        CompensatedSum lsq;
        for (std::size_t t = 0; t < lower.size(); ++t) {
            const auto [i, j] = lower[t];
            lower_z_[t] = ut_.col(i).dot(dvt_.col(j));
            lsq.add(lower_z_[t] * lower_z_[t]);
        }
        if (data_->observed_diagonal()) {
            diag_z_ = (ut_.array() * dvt_.array()).colwise().sum().transpose();
            for (Index i = 0; i < diag_z_.size(); ++i) lsq.add(diag_z_[i] * diag_z_[i]);
        } else {
            diag_z_.resize(0);
        }
        lower_frob_sq_ = lsq.value();
        ++generation_;
    }

    [[nodiscard]] Index rows() const noexcept { return data_->size(); }
    [[nodiscard]] Index cols() const noexcept { return data_->size(); }
    [[nodiscard]] Index rank() const noexcept { return ut_.rows(); }
    [[nodiscard]] const PartialAdjacency& data() const noexcept { return *data_; }
    [[nodiscard]] const LowRankFactors& factors() const noexcept { return *z_; }
    [[nodiscard]] std::uint64_t generation() const noexcept { return generation_; }
    /// U^T (k x n) and D V^T (k x n) of the bound factors.
    [[nodiscard]] const Matrix& u_transpose() const noexcept { return ut_; }
    [[nodiscard]] const Matrix& dv_transpose() const noexcept { return dvt_; }

    /// ||P_L(Z)||_F^2 over every observed cell outside the strict upper triangle.
    [[nodiscard]] double lower_frob_sq() const noexcept { return lower_frob_sq_; }

    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        WorkBuffers buf;
        apply(x, y, buf);
    }

    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        WorkBuffers buf;
        apply_adjoint(x, y, buf);
    }

    /// y = A~ x
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y, WorkBuffers& buf) const {
        check_vector(x, y);
        const Index n = rows();
        const Index k = rank();
        buf.ensure(k, n);

        data_->multiply(x, y);

        const auto& lower = data_->lower_observed();
        for (std::size_t t = 0; t < lower.size(); ++t) y[lower[t].first] -= lower_z_[t] * x[lower[t].second];
        if (diag_z_.size() > 0) y.array() -= diag_z_.array() * x.array();

        // P_U(Z) x: suffix sums of W over j > i, dotted with U_{i.}
        buf.w.noalias() = dvt_ * x.asDiagonal();
        suffix_sums(buf.w, buf.w_tilde);
        y.array() -= (ut_.array() * buf.w_tilde.array()).colwise().sum().transpose();

        // Z x = U (D V^T x)
        buf.proj.noalias() = dvt_ * x;
        y.noalias() += ut_.transpose() * buf.proj;
    }

    /// y = A~^T x
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y, WorkBuffers& buf) const {
        check_vector(x, y);
        const Index n = rows();
        const Index k = rank();
        buf.ensure(k, n);

        data_->multiply_transpose(x, y);

        const auto& lower = data_->lower_observed();
        for (std::size_t t = 0; t < lower.size(); ++t) y[lower[t].second] -= lower_z_[t] * x[lower[t].first];
        if (diag_z_.size() > 0) y.array() -= diag_z_.array() * x.array();

        // P_U(Z)^T x: prefix sums of U_{i.}^T x_i over i < j, dotted with (D V^T)_{.j}
        buf.w.noalias() = ut_ * x.asDiagonal();
        prefix_sums(buf.w, buf.w_tilde);
        y.array() -= (dvt_.array() * buf.w_tilde.array()).colwise().sum().transpose();

        buf.proj.noalias() = ut_ * x;
        y.noalias() += dvt_.transpose() * buf.proj;
    }

private:
    void check_vector(const Eigen::Ref<const Vector>& x, const Eigen::Ref<Vector>& y) const {
        if (x.size() != rows() || y.size() != rows()) throw DimensionError("ImpliedMatrix: vector length mismatch");
        if (!x.allFinite()) throw InputError("ImpliedMatrix: non-finite input vector");
    }

    /// out_{.i} = sum_{j > i} w_{.j}, compensated.
    static void suffix_sums(const Matrix& w, Matrix& out) {
        const Index k = w.rows();
        Vector sum = Vector::Zero(k);
        Vector comp = Vector::Zero(k);
        for (Index i = w.cols() - 1; i >= 0; --i) {
            out.col(i) = sum + comp;
            accumulate(sum, comp, w.col(i));
        }
    }

    /// out_{.j} = sum_{i < j} w_{.i}, compensated.
    static void prefix_sums(const Matrix& w, Matrix& out) {
        const Index k = w.rows();
        Vector sum = Vector::Zero(k);
        Vector comp = Vector::Zero(k);
        for (Index j = 0; j < w.cols(); ++j) {
            out.col(j) = sum + comp;
            accumulate(sum, comp, w.col(j));
        }
    }

    static void accumulate(Vector& sum, Vector& comp, const Eigen::Ref<const Vector>& x) {
        for (Index r = 0; r < sum.size(); ++r) {
            const double t = sum[r] + x[r];
            if (std::abs(sum[r]) >= std::abs(x[r])) {
                comp[r] += (sum[r] - t) + x[r];
            } else {
                comp[r] += (x[r] - t) + sum[r];
            }
            sum[r] = t;
        }
    }

    const PartialAdjacency* data_;
    const LowRankFactors* z_ = nullptr;
    Matrix ut_;
    Matrix dvt_;
    std::vector<double> lower_z_;
    Vector diag_z_;
    double lower_frob_sq_ = 0.0;
    std::uint64_t generation_ = 0;
};

namespace detail {

/// sum_i u_i^T S_i u_i with S_i = sum_{j > i} dv_j dv_j^T, where u_i and dv_j are
/// columns of the k x n inputs.
inline double upper_frob_sq(const Matrix& ut, const Matrix& dvt) {
    const Index k = ut.rows();
    const Index n = ut.cols();
    Matrix S = Matrix::Zero(k, k);
    Matrix S_comp = Matrix::Zero(k, k);
    CompensatedSum total;
    for (Index i = n - 1; i >= 0; --i) {
        total.add(ut.col(i).dot((S + S_comp) * ut.col(i)));
        for (Index q = 0; q < k; ++q) {
            for (Index r = 0; r < k; ++r) {
                const double x = dvt(r, i) * dvt(q, i);
                double& s = S(r, q);
                const double t = s + x;
                if (std::abs(s) >= std::abs(x)) {
                    S_comp(r, q) += (s - t) + x;
                } else {
                    S_comp(r, q) += (x - t) + s;
                }
                s = t;
            }
        }
    }
    return total.value();
}

}  // namespace detail

/// ||P_U(Z)||_F^2 over the strict upper triangle in O(n k^2) flops, accumulating
/// the suffix sums sum_{j > i} (DV^T)_{rj} (DV^T)_{qj} right to left.
inline double frob_sq_upper(const LowRankFactors& z) {
    const Matrix ut = z.U.transpose();
    const Matrix dvt = z.d.asDiagonal() * z.V.transpose();
    return detail::upper_frob_sq(ut, dvt);
}

inline double frob_sq_upper(const ImpliedMatrix& m) {
    return detail::upper_frob_sq(m.u_transpose(), m.dv_transpose());
}

/// Mean of the trailing squared singular values of the completed matrix,
///
///     (||P(A)||^2 + ||Z||^2 - ||P_L(Z)||^2 - ||P_U(Z)||^2 - sum_i s_i^2) / (n - k),
///
/// given the k leading squared singular values s_i^2. Costs O(nnz + |L| k + n k^2).
inline double alpha(const ImpliedMatrix& m, std::span<const double> top_sq_singvals) {
    const auto n = m.rows();
    const auto k = static_cast<Index>(top_sq_singvals.size());
    if (n <= k) throw InputError("alpha: requires n > k");
    CompensatedSum s;
    s.add(m.data().frob_sq());
    s.add(m.factors().frob_sq());
    s.add(-m.lower_frob_sq());
    s.add(-frob_sq_upper(m));
    for (double v : top_sq_singvals) s.add(-v);
    return s.value() / static_cast<double>(n - k);
}

inline double alpha(const ImpliedMatrix& m, const Vector& top_sq_singvals) {
    return alpha(m, std::span<const double>(top_sq_singvals.data(), static_cast<std::size_t>(top_sq_singvals.size())));
}

/// Elementwise materialization of the completed matrix. Test oracle; refuses n above `cap`.
inline Matrix dense_oracle(const ImpliedMatrix& m, Index cap = 500) {
    const Index n = m.rows();
    if (n > cap) throw InputError("dense_oracle: n = " + std::to_string(n) + " exceeds cap " + std::to_string(cap));
    const Matrix z = m.factors().to_dense();
    const Matrix mask = m.data().observed_mask();
    const Matrix a = m.data().to_dense();
    return (mask.array() * a.array() + (1.0 - mask.array()) * z.array()).matrix();
}

}  // namespace cofactor
