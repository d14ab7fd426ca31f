#pragma once

#include "cofactor/partial_adjacency.hpp"
#include "cofactor/types.hpp"

#include <Eigen/SparseCore>

#include <concepts>
#include <functional>

namespace cofactor {

/// Anything that can apply itself and its adjoint to a vector.
template <class Op>
concept LinearOperator = requires(const Op& op, const Vector& x, Vector& y) {
    { op.rows() } -> std::convertible_to<Index>;
    { op.cols() } -> std::convertible_to<Index>;
    op.apply(x, y);
    op.apply_adjoint(x, y);
};

/// A square operator that is its own adjoint.
template <class Op>
concept SymmetricOperator = requires(const Op& op, const Vector& x, Vector& y) {
    { op.rows() } -> std::convertible_to<Index>;
    op.apply(x, y);
};

class DenseOperator {
public:
    explicit DenseOperator(const Matrix& m) : m_(m) {}
    [[nodiscard]] Index rows() const { return m_.rows(); }
    [[nodiscard]] Index cols() const { return m_.cols(); }
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const { y.noalias() = m_ * x; }
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        y.noalias() = m_.transpose() * x;
    }

private:
    const Matrix& m_;
};

class SparseOperator {
public:
    explicit SparseOperator(const Eigen::SparseMatrix<double>& m) : m_(m) {}
    [[nodiscard]] Index rows() const { return m_.rows(); }
    [[nodiscard]] Index cols() const { return m_.cols(); }
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const { y.noalias() = m_ * x; }
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        y.noalias() = m_.transpose() * x;
    }

private:
    const Eigen::SparseMatrix<double>& m_;
};

/// P_Omega(A) of a partially observed matrix, i.e. missing cells read as zero.
class ObservedOperator {
public:
    explicit ObservedOperator(const PartialAdjacency& a) : a_(a) {}
    [[nodiscard]] Index rows() const { return a_.size(); }
    [[nodiscard]] Index cols() const { return a_.size(); }
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const { a_.multiply(x, y); }
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        a_.multiply_transpose(x, y);
    }

private:
    const PartialAdjacency& a_;
};

/// Symmetric operator defined by a callable y = S x.
class FunctionOperator {
public:
    using Fn = std::function<void(const Eigen::Ref<const Vector>&, Eigen::Ref<Vector>)>;
    FunctionOperator(Index n, Fn fn) : n_(n), fn_(std::move(fn)) {}
    [[nodiscard]] Index rows() const { return n_; }
    [[nodiscard]] Index cols() const { return n_; }
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const { fn_(x, y); }
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const { fn_(x, y); }

private:
    Index n_;
    Fn fn_;
};

}  // namespace cofactor
