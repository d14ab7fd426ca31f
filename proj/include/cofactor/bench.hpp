#pragma once

#include "cofactor/adaptive_impute.hpp"
#include "cofactor/implied_matrix.hpp"
#include "cofactor/svd.hpp"

#include <Eigen/SparseCore>

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <functional>
#include <new>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cofactor {

enum class BenchVariant {
    implicit,         ///< sparse + low-rank operator
    dense,            ///< completed matrix materialized as n x n
    sparse_explicit,  ///< every observed cell stored, zeros included
};

inline const char* to_string(BenchVariant v) {
    switch (v) {
        case BenchVariant::implicit: return "implicit";
        case BenchVariant::dense: return "dense";
        case BenchVariant::sparse_explicit: return "sparse_explicit";
    }
    return "unknown";
}

/// Result of one thresholding step: the SVD of the completed matrix and alpha.
struct IterationOutput {
    LowRankFactors svd;
    double alpha = 0.0;
};

struct BenchProblem {
    PartialAdjacency data;
    LowRankFactors z;
};

/// Random upper-triangular 0/1 data with `per_row` nonzeros per row (fewer near the end) and a
/// rank-k starting point taken from its truncated SVD.
inline BenchProblem make_bench_problem(Index n, Index k, double per_row, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(per_row * static_cast<double>(n)));
    const auto m = static_cast<Index>(std::llround(per_row));
    for (Index i = 0; i + 1 < n; ++i) {
        const Index width = n - 1 - i;
        std::uniform_int_distribution<Index> col(i + 1, n - 1);
        std::vector<Index> picked;
        while (static_cast<Index>(picked.size()) < std::min(m, width)) {
            const Index j = col(rng);
            if (std::find(picked.begin(), picked.end(), j) == picked.end()) picked.push_back(j);
        }
        for (Index j : picked) cells.push_back({i, j, 1.0});
    }
    PartialAdjacency a = PartialAdjacency::from_cells(n, std::move(cells));
    SvdOptions opt;
    opt.seed = seed;
    LowRankFactors z = truncated_svd(ObservedOperator(a), k, opt);
    return {std::move(a), std::move(z)};
}

inline IterationOutput iteration_implicit(const PartialAdjacency& a, const LowRankFactors& z, const SvdOptions& opt) {
    const ImpliedMatrix m(a, z);
    IterationOutput out;
    out.svd = truncated_svd(m, z.rank(), opt);
    out.alpha = alpha(m, Vector(out.svd.d.array().square()));
    return out;
}

/// Materializes P_Omega(A) + P_Omega^perp(Z) densely. O(n^2 k) time, O(n^2) memory.
inline IterationOutput iteration_dense(const PartialAdjacency& a, const LowRankFactors& z, const SvdOptions& opt) {
    const Index n = a.size();
    const Index k = z.rank();
    Matrix full = z.to_dense();
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < j; ++i) full(i, j) = 0.0;
        if (a.observed_diagonal()) full(j, j) = 0.0;
    }
    for (const auto& [i, j] : a.lower_observed()) full(i, j) = 0.0;
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto vals = a.values();
    for (Index i = 0; i < n; ++i) {
        for (Index t = rp[i]; t < rp[i + 1]; ++t) full(i, ci[t]) = vals[t];
    }
    IterationOutput out;
    out.svd = truncated_svd(DenseOperator(full), k, opt);
    out.alpha = (full.squaredNorm() - out.svd.d.squaredNorm()) / static_cast<double>(n - k);
    return out;
}

namespace detail {

/// P_Omega(A) - P_Omega(Z) + Z with both projections stored on the full observed pattern.
class ExplicitZerosOperator {
public:
    ExplicitZerosOperator(const PartialAdjacency& a, const LowRankFactors& z) : z_(z) {
        const Index n = a.size();
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(a.observed_count()));
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < j; ++i) trips.emplace_back(i, j, a.value(i, j) - z.entry(i, j));
            if (a.observed_diagonal()) trips.emplace_back(j, j, -z.entry(j, j));
        }
        for (const auto& [i, j] : a.lower_observed()) trips.emplace_back(i, j, a.value(i, j) - z.entry(i, j));
        s_.resize(n, n);
        s_.setFromTriplets(trips.begin(), trips.end());
    }
    [[nodiscard]] Index rows() const { return s_.rows(); }
    [[nodiscard]] Index cols() const { return s_.cols(); }
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        y.noalias() = s_ * x;
        y.noalias() += z_.U * (z_.d.asDiagonal() * (z_.V.transpose() * x));
    }
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        y.noalias() = s_.transpose() * x;
        y.noalias() += z_.V * (z_.d.asDiagonal() * (z_.U.transpose() * x));
    }
    /// ||P_Omega(A) - P_Omega(Z) + Z||_F^2 expanded over the stored pattern.
    [[nodiscard]] double frob_sq() const {
        CompensatedSum s;
        s.add(z_.frob_sq());
        for (Index c = 0; c < s_.outerSize(); ++c) {
            for (Eigen::SparseMatrix<double>::InnerIterator it(s_, c); it; ++it) {
                const double zij = z_.entry(it.row(), it.col());
                const double aij = it.value() + zij;
                s.add(aij * aij - zij * zij);
            }
        }
        return s.value();
    }

private:
    const LowRankFactors& z_;
    Eigen::SparseMatrix<double> s_;
};

}  // namespace detail

inline IterationOutput iteration_sparse_explicit(const PartialAdjacency& a, const LowRankFactors& z,
                                                 const SvdOptions& opt) {
    const detail::ExplicitZerosOperator op(a, z);
    IterationOutput out;
    out.svd = truncated_svd(op, z.rank(), opt);
    out.alpha = (op.frob_sq() - out.svd.d.squaredNorm()) / static_cast<double>(a.size() - z.rank());
    return out;
}

inline IterationOutput run_iteration(BenchVariant v, const PartialAdjacency& a, const LowRankFactors& z,
                                     const SvdOptions& opt) {
    switch (v) {
        case BenchVariant::implicit: return iteration_implicit(a, z, opt);
        case BenchVariant::dense: return iteration_dense(a, z, opt);
        case BenchVariant::sparse_explicit: return iteration_sparse_explicit(a, z, opt);
    }
    throw InputError("unknown bench variant");
}

/// Bytes a variant needs beyond the shared inputs, to decide whether to attempt it.
inline double variant_bytes(BenchVariant v, Index n, Index k) {
    const double nn = static_cast<double>(n);
    switch (v) {
        case BenchVariant::implicit: return 8.0 * nn * static_cast<double>(4 * k + 50);
        case BenchVariant::dense: return 8.0 * nn * nn;
        case BenchVariant::sparse_explicit: return 16.0 * nn * nn;  // triplets plus compressed storage
    }
    return 0.0;
}

struct BenchRow {
    Index n = 0;
    Index k = 0;
    double per_row = 0.0;
    BenchVariant variant = BenchVariant::implicit;
    double seconds = 0.0;  ///< median single-iteration wall time
    long peak_rss_kb = 0;  ///< 0 when not measured
    bool memory_bound = false;
};

/// Median wall time of `reps` single iterations, all from the same starting point.
inline double time_iteration(BenchVariant v, const BenchProblem& p, int reps, const SvdOptions& opt) {
    std::vector<double> times;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const IterationOutput out = run_iteration(v, p.data, p.z, opt);
        times.push_back(detail::seconds_since(t0));
        if (!std::isfinite(out.alpha)) throw DegenerateError("bench: non-finite alpha");
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
    return times[times.size() / 2];
}

struct ChildMeasurement {
    double value = 0.0;    ///< whatever `fn` returned
    long peak_rss_kb = 0;  ///< child's peak resident set size
};

/// Run `fn` in a forked child, returning its result and peak resident set size.
/// nullopt when the child fails; `out_of_memory` reports allocation failure.
inline std::optional<ChildMeasurement> measure_in_child(const std::function<double()>& fn,
                                                        bool* out_of_memory = nullptr) {
    if (out_of_memory) *out_of_memory = false;
    int fds[2];
    if (::pipe(fds) != 0) return std::nullopt;
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(fds[0]);
        ::close(fds[1]);
        return std::nullopt;
    }
    if (pid == 0) {
        ::close(fds[0]);
        int code = 0;
        try {
            const double v = fn();
            if (::write(fds[1], &v, sizeof v) != static_cast<ssize_t>(sizeof v)) code = 1;
        } catch (const std::bad_alloc&) {
            code = 3;
        } catch (...) {
            code = 1;
        }
        ::close(fds[1]);
        ::_exit(code);
    }
    ::close(fds[1]);
    double v = 0.0;
    const ssize_t got = ::read(fds[0], &v, sizeof v);
    ::close(fds[0]);
    int status = 0;
    struct rusage usage {};
    if (::wait4(pid, &status, 0, &usage) < 0) return std::nullopt;
    if (WIFEXITED(status) && WEXITSTATUS(status) == 3 && out_of_memory) *out_of_memory = true;
    if (WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL && out_of_memory) *out_of_memory = true;
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0 || got != static_cast<ssize_t>(sizeof v)) return std::nullopt;
    return ChildMeasurement{v, usage.ru_maxrss};
}

}  // namespace cofactor
