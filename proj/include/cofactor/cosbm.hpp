#pragma once

#include "cofactor/partial_adjacency.hpp"
#include "cofactor/svd.hpp"

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace cofactor {

struct SimConfig {
    Index n = 1000;
    Index k = 2;
    double delta = 20.0;
    double b_within = 0.8;
    double b_inactive = 0.01;
    double theta_mean = 8.0;  ///< theta = 1 + Exponential(mean theta_mean)
    std::uint64_t seed = 1;
    double clip_fraction = 0.1;
    bool symmetric_nodes = false;  ///< y(i) = z(i) and theta_in = theta_out instead of independent draws

    [[nodiscard]] double b_between() const noexcept {
        return b_within / 2.0 - static_cast<double>(k - 2) * b_inactive;
    }
    [[nodiscard]] Index ell() const noexcept {
        return static_cast<Index>(std::floor(clip_fraction * static_cast<double>(n)));
    }

    void validate() const {
        if (n < 2) throw InputError("SimConfig: n must be at least 2");
        if (k < 1 || k > n) throw InputError("SimConfig: k must lie in [1, n]");
        if (!(delta > 0.0) || !std::isfinite(delta)) throw InputError("SimConfig: delta must be positive");
        if (!(b_within > 0.0) || b_inactive < 0.0) throw InputError("SimConfig: invalid block propensities");
        if (k >= 2 && b_between() < 0.0) {
            throw InputError("SimConfig: b_between = b_within/2 - (k-2) b_inactive is negative for k = " +
                             std::to_string(k));
        }
        if (!(theta_mean > 0.0)) throw InputError("SimConfig: theta_mean must be positive");
        if (clip_fraction < 0.0 || clip_fraction > 0.5) throw InputError("SimConfig: clip_fraction outside [0, 1/2]");
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"n", n},
                {"k", k},
                {"delta", delta},
                {"b_within", b_within},
                {"b_inactive", b_inactive},
                {"b_between", b_between()},
                {"theta_mean", theta_mean},
                {"seed", seed},
                {"clip_fraction", clip_fraction},
                {"symmetric_nodes", symmetric_nodes}};
    }
};

/// Unscaled mixing pattern: b_within on the diagonal, b_between at (i, i+1 mod k),
/// b_inactive elsewhere.
inline Matrix base_mixing(const SimConfig& cfg) {
    const Index k = cfg.k;
    Matrix b = Matrix::Constant(k, k, cfg.b_inactive);
    for (Index i = 0; i < k; ++i) {
        b(i, i) = cfg.b_within;
        if (k > 1) b(i, (i + 1) % k) = cfg.b_between();
    }
    return b;
}

/// Ground truth of a degree-corrected co-blockmodel draw. Labels are 0-based.
struct CoSbmTruth {
    std::vector<Index> z_labels;
    std::vector<Index> y_labels;
    Vector theta_out;
    Vector theta_in;
    Matrix B;            ///< rescaled mixing matrix
    double scale = 1.0;  ///< constant applied to the base pattern

    [[nodiscard]] Index size() const noexcept { return theta_out.size(); }
    [[nodiscard]] Index rank() const noexcept { return B.rows(); }

    /// n x k, row i = theta_out(i) e_{z(i)}
    [[nodiscard]] Matrix Z() const { return membership(z_labels, theta_out); }
    /// n x k, row i = theta_in(i) e_{y(i)}
    [[nodiscard]] Matrix Y() const { return membership(y_labels, theta_in); }

    [[nodiscard]] double expected(Index i, Index j) const {
        return theta_out[i] * B(z_labels[static_cast<std::size_t>(i)], y_labels[static_cast<std::size_t>(j)]) *
               theta_in[j];
    }

    [[nodiscard]] Matrix expected_block(Index r0, Index c0, Index rows, Index cols) const {
        Matrix m(rows, cols);
        for (Index c = 0; c < cols; ++c) {
            for (Index r = 0; r < rows; ++r) m(r, c) = expected(r0 + r, c0 + c);
        }
        return m;
    }

    /// Z B Y^T, including the diagonal.
    [[nodiscard]] Matrix expected_dense() const { return expected_block(0, 0, size(), size()); }

private:
    [[nodiscard]] Matrix membership(const std::vector<Index>& labels, const Vector& theta) const {
        Matrix m = Matrix::Zero(size(), rank());
        for (Index i = 0; i < size(); ++i) m(i, labels[static_cast<std::size_t>(i)]) = theta[i];
        return m;
    }
};

struct CoSbmSample {
    Eigen::SparseMatrix<double> adjacency;  ///< full directed network, zero diagonal
    CoSbmTruth truth;
};

/// Labels and degree parameters; B is rescaled so the expected number of
/// off-diagonal edges divided by n equals delta, conditional on this draw.
inline CoSbmTruth sample_truth(const SimConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const Index n = cfg.n;
    const Index k = cfg.k;
    CoSbmTruth t;
    std::uniform_int_distribution<Index> label(0, k - 1);
    std::exponential_distribution<double> expo(1.0 / cfg.theta_mean);
    t.z_labels.resize(static_cast<std::size_t>(n));
    t.y_labels.resize(static_cast<std::size_t>(n));
    t.theta_out.resize(n);
    t.theta_in.resize(n);
    for (Index i = 0; i < n; ++i) {
        t.z_labels[static_cast<std::size_t>(i)] = label(rng);
        const Index y = label(rng);
        t.y_labels[static_cast<std::size_t>(i)] = cfg.symmetric_nodes ? t.z_labels[static_cast<std::size_t>(i)] : y;
        t.theta_out[i] = 1.0 + expo(rng);
        const double theta_in = 1.0 + expo(rng);
        t.theta_in[i] = cfg.symmetric_nodes ? t.theta_out[i] : theta_in;
    }

    const Matrix base = base_mixing(cfg);
    Vector s_out = Vector::Zero(k);
    Vector s_in = Vector::Zero(k);
    double diag = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Index zi = t.z_labels[static_cast<std::size_t>(i)];
        const Index yi = t.y_labels[static_cast<std::size_t>(i)];
        s_out[zi] += t.theta_out[i];
        s_in[yi] += t.theta_in[i];
        diag += t.theta_out[i] * base(zi, yi) * t.theta_in[i];
    }
    const double total = s_out.dot(base * s_in) - diag;
    t.scale = cfg.delta * static_cast<double>(n) / total;
    t.B = t.scale * base;
    return t;
}

/// Draw A_ij ~ Poisson(theta_out_i B_{z(i) y(j)} theta_in_j) independently for i != j.
///
/// Each row draws a Poisson total per incoming block and splits it over that
/// block's members in proportion to theta_in, discarding hits on the diagonal.
inline Eigen::SparseMatrix<double> sample_edges(const CoSbmTruth& t, std::mt19937_64& rng) {
    const Index n = t.size();
    const Index k = t.rank();
    std::vector<std::vector<Index>> members(static_cast<std::size_t>(k));
    std::vector<std::vector<double>> weights(static_cast<std::size_t>(k));
    Vector s_in = Vector::Zero(k);
    for (Index j = 0; j < n; ++j) {
        const auto b = static_cast<std::size_t>(t.y_labels[static_cast<std::size_t>(j)]);
        members[b].push_back(j);
        weights[b].push_back(t.theta_in[j]);
        s_in[static_cast<Index>(b)] += t.theta_in[j];
    }
    std::vector<std::discrete_distribution<std::size_t>> pick;
    pick.reserve(static_cast<std::size_t>(k));
    for (Index b = 0; b < k; ++b) {
        const auto& w = weights[static_cast<std::size_t>(b)];
        pick.emplace_back(w.begin(), w.end());
    }

    std::vector<Eigen::Triplet<double>> trips;
    for (Index i = 0; i < n; ++i) {
        const Index zi = t.z_labels[static_cast<std::size_t>(i)];
        for (Index b = 0; b < k; ++b) {
            if (members[static_cast<std::size_t>(b)].empty()) continue;
            const double rate = t.theta_out[i] * t.B(zi, b) * s_in[b];
            if (!(rate > 0.0)) continue;
            std::poisson_distribution<long long> pois(rate);
            const long long draws = pois(rng);
            for (long long d = 0; d < draws; ++d) {
                const Index j = members[static_cast<std::size_t>(b)][pick[static_cast<std::size_t>(b)](rng)];
                if (j != i) trips.emplace_back(i, j, 1.0);
            }
        }
    }
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    return a;
}

inline CoSbmSample sample_cosbm(const SimConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    CoSbmSample s;
    s.truth = sample_truth(cfg, rng);
    s.adjacency = sample_edges(s.truth, rng);
    return s;
}

/// Replicate-specific configuration whose generator stream depends on (seed, rep).
inline SimConfig replicate_config(SimConfig cfg, std::uint64_t rep) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    cfg.seed = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    return cfg;
}

/// Upper triangle observed, lower triangle missing, diagonal observed zero.
inline PartialAdjacency mask_chronological(const Eigen::SparseMatrix<double>& full) {
    if (full.rows() != full.cols()) throw DimensionError("mask_chronological: matrix must be square");
    std::vector<Cell> cells;
    for (Index c = 0; c < full.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(full, c); it; ++it) {
            if (it.row() < it.col() && it.value() != 0.0) cells.push_back({it.row(), it.col(), it.value()});
        }
    }
    return PartialAdjacency::from_cells(full.rows(), std::move(cells));
}

inline Eigen::SparseMatrix<double> to_sparse(const Matrix& dense) {
    Eigen::SparseMatrix<double> s = dense.sparseView();
    s.makeCompressed();
    return s;
}

/// Rank-k SVD with every missing cell read as zero.
inline LowRankFactors estimator_zero_imputed(const PartialAdjacency& a, Index k, const SvdOptions& opt = {}) {
    return truncated_svd(ObservedOperator(a), k, opt);
}

/// Missing cells filled with their transposed observed value.
inline Eigen::SparseMatrix<double> symmetrize_missing(const PartialAdjacency& a) {
    const Index n = a.size();
    std::vector<Eigen::Triplet<double>> trips;
    const Eigen::SparseMatrix<double> s = a.to_sparse();
    for (Index c = 0; c < s.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(s, c); it; ++it) {
            const Index i = it.row();
            const Index j = it.col();
            trips.emplace_back(i, j, it.value());
            if (!a.is_observed(j, i)) trips.emplace_back(j, i, it.value());
        }
    }
    Eigen::SparseMatrix<double> out(n, n);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

inline LowRankFactors estimator_symmetrized(const PartialAdjacency& a, Index k, const SvdOptions& opt = {}) {
    const Eigen::SparseMatrix<double> s = symmetrize_missing(a);
    return truncated_svd(SparseOperator(s), k, opt);
}

inline LowRankFactors estimator_oracle(const Eigen::SparseMatrix<double>& full, Index k, const SvdOptions& opt = {}) {
    return truncated_svd(SparseOperator(full), k, opt);
}

/// Fraction of `reps` sampled truths whose ell x (ell + 1) top-right block of the
/// expected matrix has numerical rank k.
inline double coupon_check(const SimConfig& cfg, Index ell, int reps, double tol = 1e-8) {
    cfg.validate();
    if (ell < 1 || 2 * ell > cfg.n) throw InputError("coupon_check: ell outside [1, n/2]");
    if (reps < 1) throw InputError("coupon_check: reps must be positive");
    int hits = 0;
    for (int r = 0; r < reps; ++r) {
        std::mt19937_64 rng(replicate_config(cfg, static_cast<std::uint64_t>(r)).seed);
        const CoSbmTruth t = sample_truth(cfg, rng);
        const Matrix block = t.expected_block(0, cfg.n - ell - 1, ell, ell + 1);
        if (numerical_rank(block, tol) == cfg.k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(reps);
}

/// Rank-two expected matrix [[a J, a J], [b J, a J]] with n/2 blocks. With a
/// permutation seed, rows and columns are shuffled by the same random permutation.
inline Matrix two_block_counterexample(Index n, double a, double b, std::optional<std::uint64_t> permute_seed = {}) {
    if (n < 2 || n % 2 != 0) throw InputError("two_block_counterexample: n must be even and positive");
    const Index h = n / 2;
    Matrix m = Matrix::Constant(n, n, a);
    m.bottomLeftCorner(h, h).setConstant(b);
    if (permute_seed) {
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::mt19937_64 rng(*permute_seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix p(n, n);
        for (Index c = 0; c < n; ++c) {
            for (Index r = 0; r < n; ++r) {
                p(r, c) = m(perm[static_cast<std::size_t>(r)], perm[static_cast<std::size_t>(c)]);
            }
        }
        m = std::move(p);
    }
    return m;
}

}  // namespace cofactor
