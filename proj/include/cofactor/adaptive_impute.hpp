#pragma once

#include "cofactor/implied_matrix.hpp"
#include "cofactor/svd.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cofactor {

enum class Initializer {
    adaptive,  ///< debiased eigen-initializer
    svd,       ///< rank-k SVD of the observed data (softImpute start)
};

struct FitConfig {
    Index k = 2;
    double epsilon = 1e-7;
    int max_iters = 200;
    SvdOptions svd;
    std::uint64_t seed = 1;
    /// When set, every iteration thresholds with this value instead of the adaptive alpha.
    std::optional<double> fixed_alpha;
    Initializer init = Initializer::adaptive;
    /// Start each Krylov solve from the previous right singular vectors.
    bool warm_start = true;

    void validate(Index n) const {
        if (k < 2) throw InputError("k must be at least 2");
        if (k >= n) throw InputError("k = " + std::to_string(k) + " must be smaller than n = " + std::to_string(n));
        if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
        if (max_iters < 1) throw InputError("max_iters must be at least 1");
        if (fixed_alpha && (!std::isfinite(*fixed_alpha) || *fixed_alpha < 0.0)) {
            throw InputError("fixed_alpha must be finite and nonnegative");
        }
    }
};

struct InitReport {
    double p_hat = 0.0;
    double alpha_tilde = 0.0;
    Index clamped = 0;
    double seconds = 0.0;
};

enum class FitStatus { converged, max_iters, degenerate };

inline const char* to_string(FitStatus s) {
    switch (s) {
        case FitStatus::converged: return "converged";
        case FitStatus::max_iters: return "max_iters";
        case FitStatus::degenerate: return "degenerate";
    }
    return "unknown";
}

/// Iteration trace of one fit.
struct FitReport {
    std::vector<double> relative_change;
    std::vector<double> alpha;
    std::vector<Vector> singular_values;  ///< leading singular values of the completed matrix
    std::vector<Vector> shrunk_values;    ///< thresholded values used for the next iterate
    std::vector<double> seconds;
    std::vector<int> svd_restarts;
    Index clamped = 0;  ///< thresholded values clamped at zero, over all iterations
    bool converged = false;
    FitStatus status = FitStatus::max_iters;
    InitReport init;

    [[nodiscard]] int iterations() const noexcept { return static_cast<int>(relative_change.size()); }

    [[nodiscard]] nlohmann::json to_json() const {
        auto vecs = [](const std::vector<Vector>& vs) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& v : vs) out.push_back(std::vector<double>(v.data(), v.data() + v.size()));
            return out;
        };
        return {{"converged", converged},
                {"status", to_string(status)},
                {"iterations", iterations()},
                {"relative_change", relative_change},
                {"alpha", alpha},
                {"singular_values", vecs(singular_values)},
                {"shrunk_values", vecs(shrunk_values)},
                {"seconds", seconds},
                {"svd_restarts", svd_restarts},
                {"clamped", clamped},
                {"init",
                 {{"p_hat", init.p_hat},
                  {"alpha_tilde", init.alpha_tilde},
                  {"clamped", init.clamped},
                  {"seconds", init.seconds}}}};
    }
};

/// Raised when every thresholded singular value collapses to zero; carries the trace so far.
class DegenerateFitError : public DegenerateError {
public:
    DegenerateFitError(const std::string& what, FitReport report)
        : DegenerateError(what), report_(std::move(report)) {}
    [[nodiscard]] const FitReport& report() const noexcept { return report_; }

private:
    FitReport report_;
};

struct FitResult {
    LowRankFactors factors;
    FitReport report;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double sign_or_one(double x) { return x < 0.0 ? -1.0 : 1.0; }

}  // namespace detail

/// A^T A - (1 - p) diag(A^T A), or A A^T - (1 - p) diag(A A^T) when `outer`,
/// with missing cells of A read as zero. Applied matrix-free.
class DebiasedGram {
public:
    DebiasedGram(const PartialAdjacency& a, double p, bool outer)
        : a_(a), outer_(outer), shrink_(1.0 - p), diag_(outer ? a.row_sq_sums() : a.column_sq_sums()) {}
    [[nodiscard]] Index rows() const { return a_.size(); }
    [[nodiscard]] Index cols() const { return a_.size(); }
    void apply(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const {
        Vector tmp(a_.size());
        if (outer_) {
            a_.multiply_transpose(x, tmp);
            a_.multiply(tmp, y);
        } else {
            a_.multiply(x, tmp);
            a_.multiply_transpose(tmp, y);
        }
        y.array() -= shrink_ * diag_.array() * x.array();
    }
    void apply_adjoint(const Eigen::Ref<const Vector>& x, Eigen::Ref<Vector> y) const { apply(x, y); }
    [[nodiscard]] double trace() const { return (1.0 - shrink_) * diag_.sum(); }

private:
    const PartialAdjacency& a_;
    bool outer_;
    double shrink_;
    Vector diag_;
};

/// Debiased starting point for the imputation iteration.
///
/// With p = |Omega| / n^2, the Gram operators A^T A - (1 - p) diag(A^T A) and
/// A A^T - (1 - p) diag(A A^T) are applied matrix-free. Their top-k eigenvectors
/// give V and U; the values are (1/p) sqrt(lambda_i - alpha~) where alpha~ is the
/// mean trailing eigenvalue of the first operator, obtained from its trace.
/// Each U column is sign-matched to V through the singular vectors of A.
inline LowRankFactors adaptive_initialize(const PartialAdjacency& a, Index k, const SvdOptions& opt = {},
                                          InitReport* report = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const Index n = a.size();
    if (k < 1 || k >= n) throw InputError("adaptive_initialize: k must lie in [1, n)");
    if (a.nnz() == 0) throw DegenerateError("adaptive_initialize: no observed nonzeros, nothing to estimate");
    const double p_hat = a.observed_count() / (static_cast<double>(n) * static_cast<double>(n));
    if (!(p_hat > 0.0)) throw DegenerateError("adaptive_initialize: empty observation set");

    const DebiasedGram sigma_v(a, p_hat, false);
    const DebiasedGram sigma_u(a, p_hat, true);
    const EigenPairs ev = symmetric_eigs(sigma_v, k, opt);
    const EigenPairs eu = symmetric_eigs(sigma_u, k, opt);

    const double alpha_tilde = (sigma_v.trace() - ev.values.sum()) / static_cast<double>(n - k);

    Vector lambda(k);
    Index clamped = 0;
    for (Index i = 0; i < k; ++i) {
        const double gap = ev.values[i] - alpha_tilde;
        if (gap < 0.0) ++clamped;
        lambda[i] = std::sqrt(std::max(0.0, gap)) / p_hat;
    }

    const LowRankFactors ref = truncated_svd(ObservedOperator(a), k, opt);
    Matrix U = eu.vectors;
    for (Index i = 0; i < k; ++i) {
        const double s = detail::sign_or_one(ev.vectors.col(i).dot(ref.V.col(i))) *
                         detail::sign_or_one(eu.vectors.col(i).dot(ref.U.col(i)));
        U.col(i) *= s;
    }

    if (report) {
        report->p_hat = p_hat;
        report->alpha_tilde = alpha_tilde;
        report->clamped = clamped;
        report->seconds = detail::seconds_since(t0);
    }
    return {std::move(U), std::move(lambda), ev.vectors};
}

/// Adaptive-threshold matrix completion over the implicit completed matrix.
///
/// Each iteration takes a rank-k SVD of P_Omega(A) + P_Omega^perp(Z), estimates
/// the mean trailing squared singular value alpha without forming the matrix,
/// and shrinks the leading values to sqrt(s_i^2 - alpha). Stops when
/// ||Z_new - Z||^2 / ||Z_new||^2 < epsilon or after max_iters iterations.
inline FitResult adaptive_impute(const PartialAdjacency& a, const FitConfig& cfg) {
    cfg.validate(a.size());
    FitResult result;
    FitReport& report = result.report;

    SvdOptions svd_opt = cfg.svd;
    svd_opt.seed = cfg.seed;
    LowRankFactors z;
    if (cfg.init == Initializer::adaptive) {
        z = adaptive_initialize(a, cfg.k, svd_opt, &report.init);
    } else {
        const auto t0 = std::chrono::steady_clock::now();
        z = truncated_svd(ObservedOperator(a), cfg.k, svd_opt);
        report.init.p_hat = a.observed_count() / (static_cast<double>(a.size()) * static_cast<double>(a.size()));
        report.init.seconds = detail::seconds_since(t0);
    }

    ImpliedMatrix implied(a, z);
    for (int t = 1; t <= cfg.max_iters; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        implied.rebind(z);

        SvdOptions opt = cfg.svd;
        opt.seed = cfg.seed + static_cast<std::uint64_t>(t);
        if (cfg.warm_start && z.frob_sq() > 0.0) opt.start = Vector(z.V.rowwise().sum());
        SvdInfo info;
        LowRankFactors s = truncated_svd(implied, cfg.k, opt, &info);

        const Vector top_sq = s.d.array().square();
        const double a_t = cfg.fixed_alpha ? *cfg.fixed_alpha : alpha(implied, top_sq);
        Vector shrunk(cfg.k);
        for (Index i = 0; i < cfg.k; ++i) {
            const double gap = top_sq[i] - a_t;
            if (gap < 0.0) ++report.clamped;
            shrunk[i] = std::sqrt(std::max(0.0, gap));
        }

        report.alpha.push_back(a_t);
        report.singular_values.push_back(s.d);
        report.shrunk_values.push_back(shrunk);
        report.svd_restarts.push_back(info.restarts);

        LowRankFactors next{std::move(s.U), shrunk, std::move(s.V)};
        const double next_sq = next.frob_sq();
        if (next_sq == 0.0) {
            report.relative_change.push_back(std::numeric_limits<double>::quiet_NaN());
            report.seconds.push_back(detail::seconds_since(t0));
            report.status = FitStatus::degenerate;
            throw DegenerateFitError("adaptive_impute: every singular value shrank to zero at iteration " +
                                         std::to_string(t),
                                     report);
        }
        const double rel = frob_sq_distance(next, z) / next_sq;
        z = std::move(next);
        report.relative_change.push_back(rel);
        report.seconds.push_back(detail::seconds_since(t0));
        if (rel < cfg.epsilon) {
            report.converged = true;
            report.status = FitStatus::converged;
            break;
        }
    }
    if (!report.converged) report.status = FitStatus::max_iters;
    result.factors = std::move(z);
    return result;
}

}  // namespace cofactor
