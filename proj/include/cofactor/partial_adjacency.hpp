#pragma once

#include "cofactor/types.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseCore>

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cofactor {

/// One stored entry of a partially observed matrix (0-based indices).
struct Cell {
    Index row = 0;
    Index col = 0;
    double value = 0.0;
};

using CellIndex = std::pair<Index, Index>;

/// A partially observed n x n adjacency matrix under the chronological
/// observation mechanism.
///
/// Nodes are indexed so that index 0 is the most recent document. The strict
/// upper triangle is always observed. Lower-triangle cells are missing unless
/// they hold a nonzero entry (same-time citations) or are listed as explicit
/// observed zeros. Diagonal cells are observed zeros unless
/// `observed_diagonal` is false.
///
/// Instances are immutable once constructed: the factory validates the input
/// and freezes both row-major and column-major copies of the nonzeros.
class PartialAdjacency {
public:
    PartialAdjacency() = default;

    static PartialAdjacency from_cells(Index n, std::vector<Cell> nonzeros,
                                       std::vector<CellIndex> lower_zeros = {},
                                       bool observed_diagonal = true,
                                       std::vector<std::string> node_ids = {}) {
        if (n < 0) throw InputError("node count must be nonnegative");
        if (!node_ids.empty() && static_cast<Index>(node_ids.size()) != n) {
            throw InputError("node id list length does not match n");
        }

        PartialAdjacency a;
        a.n_ = n;
        a.observed_diagonal_ = observed_diagonal;
        a.node_ids_ = std::move(node_ids);

        auto in_range = [n](Index i) { return i >= 0 && i < n; };
        std::erase_if(nonzeros, [](const Cell& c) { return c.value == 0.0; });
        for (const auto& c : nonzeros) {
            if (!in_range(c.row) || !in_range(c.col)) {
                throw InputError("entry (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                                 ") outside [0, n)");
            }
            if (!std::isfinite(c.value) || c.value < 0.0) {
                throw InputError("stored values must be finite and nonnegative");
            }
            if (c.row == c.col && !observed_diagonal) {
                throw InputError("nonzero on an unobserved diagonal");
            }
        }
        std::sort(nonzeros.begin(), nonzeros.end(), [](const Cell& x, const Cell& y) {
            return std::tie(x.row, x.col) < std::tie(y.row, y.col);
        });
        for (std::size_t t = 1; t < nonzeros.size(); ++t) {
            if (nonzeros[t].row == nonzeros[t - 1].row && nonzeros[t].col == nonzeros[t - 1].col) {
                throw InputError("duplicate entry (" + std::to_string(nonzeros[t].row) + ", " +
                                 std::to_string(nonzeros[t].col) + ")");
            }
        }

        for (const auto& [i, j] : lower_zeros) {
            if (!in_range(i) || !in_range(j)) throw InputError("lower cell outside [0, n)");
            if (i <= j) throw InputError("explicit observed zeros must lie strictly below the diagonal");
        }
        std::sort(lower_zeros.begin(), lower_zeros.end());
        lower_zeros.erase(std::unique(lower_zeros.begin(), lower_zeros.end()), lower_zeros.end());
        for (const auto& c : nonzeros) {
            if (c.row > c.col &&
                std::binary_search(lower_zeros.begin(), lower_zeros.end(), CellIndex{c.row, c.col})) {
                throw InputError("cell (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                                 ") listed both as nonzero and as observed zero");
            }
        }
        a.lower_zeros_ = std::move(lower_zeros);
        a.freeze(nonzeros);
        return a;
    }

    [[nodiscard]] Index size() const noexcept { return n_; }
    [[nodiscard]] Index nnz() const noexcept { return static_cast<Index>(values_.size()); }
    [[nodiscard]] bool observed_diagonal() const noexcept { return observed_diagonal_; }

    /// Nonzeros in row-major order.
    [[nodiscard]] std::span<const Index> row_ptr() const noexcept { return row_ptr_; }
    [[nodiscard]] std::span<const Index> col_idx() const noexcept { return col_idx_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    /// Nonzeros in column-major order.
    [[nodiscard]] std::span<const Index> col_ptr() const noexcept { return col_ptr_; }
    [[nodiscard]] std::span<const Index> row_idx() const noexcept { return row_idx_; }
    [[nodiscard]] std::span<const double> col_values() const noexcept { return col_values_; }

    [[nodiscard]] std::vector<Cell> nonzeros() const {
        std::vector<Cell> out;
        out.reserve(values_.size());
        for (Index i = 0; i < n_; ++i) {
            for (Index t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) out.push_back({i, col_idx_[t], values_[t]});
        }
        return out;
    }

    /// Explicit observed zeros strictly below the diagonal.
    [[nodiscard]] const std::vector<CellIndex>& lower_zeros() const noexcept { return lower_zeros_; }

    /// Every observed cell strictly below the diagonal: nonzero or explicit zero. Sorted.
    [[nodiscard]] const std::vector<CellIndex>& lower_observed() const noexcept { return lower_observed_; }

    [[nodiscard]] Index lower_nonzero_count() const noexcept { return lower_nonzero_count_; }

    /// |Omega|: strict upper triangle, observed lower cells, and the diagonal when observed.
    [[nodiscard]] double observed_count() const noexcept {
        const double nd = static_cast<double>(n_);
        return nd * (nd - 1.0) / 2.0 + static_cast<double>(lower_observed_.size()) +
               (observed_diagonal_ ? nd : 0.0);
    }

    [[nodiscard]] bool is_observed(Index i, Index j) const {
        if (i < j) return true;
        if (i == j) return observed_diagonal_;
        return std::binary_search(lower_observed_.begin(), lower_observed_.end(), CellIndex{i, j});
    }

    [[nodiscard]] double value(Index i, Index j) const {
        const auto first = col_idx_.begin() + row_ptr_[i];
        const auto last = col_idx_.begin() + row_ptr_[i + 1];
        const auto it = std::lower_bound(first, last, j);
        return (it != last && *it == j) ? values_[static_cast<std::size_t>(it - col_idx_.begin())] : 0.0;
    }

    /// Squared Frobenius norm of the observed nonzeros.
    [[nodiscard]] double frob_sq() const noexcept { return frob_sq_; }

    /// Sum of squares of each column, i.e. diag(A^T A).
    [[nodiscard]] Vector column_sq_sums() const {
        Vector d = Vector::Zero(n_);
        for (Index j = 0; j < n_; ++j) {
            for (Index t = col_ptr_[j]; t < col_ptr_[j + 1]; ++t) d[j] += col_values_[t] * col_values_[t];
        }
        return d;
    }

    /// Sum of squares of each row, i.e. diag(A A^T).
    [[nodiscard]] Vector row_sq_sums() const {
        Vector d = Vector::Zero(n_);
        for (Index i = 0; i < n_; ++i) {
            for (Index t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) d[i] += values_[t] * values_[t];
        }
        return d;
    }

    /// y = P_Omega(A) x
    void multiply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        for (Index i = 0; i < n_; ++i) {
            double s = 0.0;
            for (Index t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) s += values_[t] * x[col_idx_[t]];
            y[i] = s;
        }
    }

    /// y = P_Omega(A)^T x
    void multiply_transpose(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        for (Index j = 0; j < n_; ++j) {
            double s = 0.0;
            for (Index t = col_ptr_[j]; t < col_ptr_[j + 1]; ++t) s += col_values_[t] * x[row_idx_[t]];
            y[j] = s;
        }
    }

    [[nodiscard]] Eigen::SparseMatrix<double> to_sparse() const {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(values_.size());
        for (Index i = 0; i < n_; ++i) {
            for (Index t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) trips.emplace_back(i, col_idx_[t], values_[t]);
        }
        Eigen::SparseMatrix<double> s(n_, n_);
        s.setFromTriplets(trips.begin(), trips.end());
        return s;
    }

    /// Dense copy of P_Omega(A); missing cells hold zero. Diagnostic use only.
    [[nodiscard]] Matrix to_dense() const {
        Matrix m = Matrix::Zero(n_, n_);
        for (Index i = 0; i < n_; ++i) {
            for (Index t = row_ptr_[i]; t < row_ptr_[i + 1]; ++t) m(i, col_idx_[t]) = values_[t];
        }
        return m;
    }

    /// Dense 0/1 indicator of Omega. Diagnostic use only.
    [[nodiscard]] Matrix observed_mask() const {
        Matrix m = Matrix::Zero(n_, n_);
        for (Index i = 0; i < n_; ++i) {
            for (Index j = i + 1; j < n_; ++j) m(i, j) = 1.0;
            if (observed_diagonal_) m(i, i) = 1.0;
        }
        for (const auto& [i, j] : lower_observed_) m(i, j) = 1.0;
        return m;
    }

    /// Number of leading columns zeroed by clipping.
    [[nodiscard]] Index clipped_cols() const noexcept { return clipped_cols_; }
    /// Number of trailing rows zeroed by clipping.
    [[nodiscard]] Index clipped_rows() const noexcept { return clipped_rows_; }
    /// Rows whose outgoing loadings survive clipping.
    [[nodiscard]] IndexRange identified_rows_z() const noexcept { return {0, n_ - clipped_rows_}; }
    /// Rows whose incoming loadings survive clipping.
    [[nodiscard]] IndexRange identified_rows_y() const noexcept { return {clipped_cols_, n_}; }

    [[nodiscard]] const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
    [[nodiscard]] std::string node_id(Index i) const {
        return node_ids_.empty() ? std::to_string(i) : node_ids_[static_cast<std::size_t>(i)];
    }

    friend PartialAdjacency clip(const PartialAdjacency& a, Index ell);

private:
    void freeze(const std::vector<Cell>& sorted) {
        const auto n = static_cast<std::size_t>(n_);
        row_ptr_.assign(n + 1, 0);
        col_ptr_.assign(n + 1, 0);
        col_idx_.resize(sorted.size());
        values_.resize(sorted.size());
        row_idx_.resize(sorted.size());
        col_values_.resize(sorted.size());

        CompensatedSum fs;
        lower_nonzero_count_ = 0;
        std::vector<CellIndex> lower = lower_zeros_;
        for (std::size_t t = 0; t < sorted.size(); ++t) {
            const auto& c = sorted[t];
            ++row_ptr_[static_cast<std::size_t>(c.row) + 1];
            ++col_ptr_[static_cast<std::size_t>(c.col) + 1];
            col_idx_[t] = c.col;
            values_[t] = c.value;
            fs.add(c.value * c.value);
            if (c.row > c.col) {
                ++lower_nonzero_count_;
                lower.emplace_back(c.row, c.col);
            }
        }
        frob_sq_ = fs.value();
        std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
        std::partial_sum(col_ptr_.begin(), col_ptr_.end(), col_ptr_.begin());

        std::vector<Index> fill(col_ptr_.begin(), col_ptr_.end() - 1);
        for (const auto& c : sorted) {
            const auto slot = static_cast<std::size_t>(fill[static_cast<std::size_t>(c.col)]++);
            row_idx_[slot] = c.row;
            col_values_[slot] = c.value;
        }
        std::sort(lower.begin(), lower.end());
        lower_observed_ = std::move(lower);
    }

    Index n_ = 0;
    bool observed_diagonal_ = true;
    std::vector<Index> row_ptr_{0};
    std::vector<Index> col_idx_;
    std::vector<double> values_;
    std::vector<Index> col_ptr_{0};
    std::vector<Index> row_idx_;
    std::vector<double> col_values_;
    std::vector<CellIndex> lower_zeros_;
    std::vector<CellIndex> lower_observed_;
    Index lower_nonzero_count_ = 0;
    double frob_sq_ = 0.0;
    Index clipped_cols_ = 0;
    Index clipped_rows_ = 0;
    std::vector<std::string> node_ids_;
};

/// Zero the first `ell` columns and the last `ell` rows. Removed lower-triangle
/// nonzeros become explicit observed zeros; n is unchanged.
inline PartialAdjacency clip(const PartialAdjacency& a, Index ell) {
    const Index n = a.size();
    if (ell < 0 || ell > n / 2) {
        throw InputError("clip: ell = " + std::to_string(ell) + " outside [0, " + std::to_string(n / 2) + "]");
    }
    std::vector<Cell> kept;
    std::vector<CellIndex> zeros = a.lower_zeros();
    for (const auto& c : a.nonzeros()) {
        if (c.col < ell || c.row >= n - ell) {
            if (c.row > c.col) zeros.emplace_back(c.row, c.col);
        } else {
            kept.push_back(c);
        }
    }
    auto out = PartialAdjacency::from_cells(n, std::move(kept), std::move(zeros), a.observed_diagonal(),
                                            a.node_ids());
    out.clipped_cols_ = std::max(a.clipped_cols_, ell);
    out.clipped_rows_ = std::max(a.clipped_rows_, ell);
    return out;
}

/// Numerical rank of a matrix: singular values above tol times the largest.
inline Index numerical_rank(const Eigen::Ref<const Matrix>& m, double tol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) return 0;
    return static_cast<Index>((s.array() > tol * s[0]).count());
}

/// Rank of the top-right ell x (ell + 1) block of an expected adjacency matrix.
/// Diagnostic for simulations and small corpora; takes a dense matrix.
inline Index identifiability_rank(const Eigen::Ref<const Matrix>& expected, Index ell, double tol = 1e-8) {
    const Index n = expected.rows();
    if (expected.cols() != n) throw DimensionError("identifiability_rank: matrix must be square");
    if (ell < 1 || ell > n / 2) {
        throw InputError("identifiability_rank: ell = " + std::to_string(ell) + " outside [1, " +
                         std::to_string(n / 2) + "]");
    }
    return numerical_rank(expected.block(0, n - ell - 1, ell, ell + 1), tol);
}

/// Reconstruct a low-rank matrix on its identified cells from strict-upper-triangle
/// data by the Nystrom formula x_ij = v M^+ u, with M the top-right ell x ell block,
/// u = rows [0, ell) of column j and v = columns [n - ell, n) of row i.
///
/// Only cells with i < j of `upper` are read. Identified cells are rows [0, n - ell)
/// and columns [ell, n); the result holds NaN elsewhere below the diagonal.
inline Matrix nystrom_reconstruct(const Eigen::Ref<const Matrix>& upper, Index ell, double rcond = 1e-10) {
    const Index n = upper.rows();
    if (upper.cols() != n) throw DimensionError("nystrom_reconstruct: matrix must be square");
    if (ell < 1 || ell > n / 2) throw InputError("nystrom_reconstruct: ell out of range");

    const Matrix m = upper.block(0, n - ell, ell, ell);
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    Vector s_inv = Vector::Zero(s.size());
    for (Index t = 0; t < s.size(); ++t) {
        if (s[t] > rcond * s[0]) s_inv[t] = 1.0 / s[t];
    }
    const Matrix m_pinv = svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();

    Matrix out = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) out(i, j) = upper(i, j);
    }
    const Matrix right = upper.block(0, n - ell, n - ell, ell) * m_pinv;  // rows [0, n-ell) of v M^+
    const Matrix top = upper.block(0, ell, ell, n - ell);                  // u for columns [ell, n)
    for (Index i = 0; i < n - ell; ++i) {
        for (Index j = ell; j < n; ++j) {
            if (i >= j) out(i, j) = right.row(i).dot(top.col(j - ell));
        }
    }
    return out;
}

}  // namespace cofactor
