#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cofactor {

using Index = std::ptrdiff_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input: bad ids, forward-in-time edges, bad ranges.
class InputError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Iterative solver failed to meet its tolerance within the iteration budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// The data carries no signal to estimate (all-zero input, all values shrunk to zero).
class DegenerateError : public Error {
public:
    using Error::Error;
};

/// A factor row was requested for a node whose loadings are not identified.
class UnidentifiedError : public Error {
public:
    using Error::Error;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Half-open range [begin, end) of node indices.
struct IndexRange {
    Index begin = 0;
    Index end = 0;

    [[nodiscard]] bool contains(Index i) const noexcept { return i >= begin && i < end; }
    [[nodiscard]] Index size() const noexcept { return end > begin ? end - begin : 0; }
    friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

inline void require_finite(const Eigen::Ref<const Vector>& x, const char* what) {
    if (!x.allFinite()) {
        throw InputError(std::string(what) + ": non-finite entries");
    }
}

}  // namespace cofactor
