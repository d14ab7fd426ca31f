#pragma once

#include "cofactor/adaptive_impute.hpp"
#include "cofactor/cosbm.hpp"
#include "cofactor/edge_list.hpp"
#include "cofactor/metrics.hpp"
#include "cofactor/varimax.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace cofactor {

enum class Estimator { adaptive_impute, zero_imputed, symmetrized, fully_observed };

inline const char* to_string(Estimator e) {
    switch (e) {
        case Estimator::adaptive_impute: return "adaptive_impute";
        case Estimator::zero_imputed: return "zero_imputed";
        case Estimator::symmetrized: return "symmetrized";
        case Estimator::fully_observed: return "fully_observed";
    }
    return "unknown";
}

inline Estimator parse_estimator(const std::string& s) {
    for (Estimator e : {Estimator::adaptive_impute, Estimator::zero_imputed, Estimator::symmetrized,
                        Estimator::fully_observed}) {
        if (s == to_string(e)) return e;
    }
    throw InputError("unknown estimator '" + s + "'");
}

inline std::vector<Estimator> all_estimators() {
    return {Estimator::adaptive_impute, Estimator::zero_imputed, Estimator::symmetrized, Estimator::fully_observed};
}

struct GridSpec {
    std::vector<Index> n{1000};
    std::vector<Index> k{2};
    std::vector<double> delta{20.0};
    int reps = 1;
    std::vector<Estimator> estimators = all_estimators();
    std::uint64_t seed = 1;
    double clip_fraction = 0.1;
    bool symmetric_nodes = false;
    FitConfig fit;
    /// When non-empty, each replicate's network and truth go to <save_dir>/<cell>/<rep>/.
    std::string save_dir;

    void validate() const {
        if (n.empty() || k.empty() || delta.empty()) throw InputError("grid: n, k and delta must be non-empty");
        if (reps < 1) throw InputError("grid: reps must be positive");
        if (estimators.empty()) throw InputError("grid: no estimators");
        for (Index nn : n) {
            for (Index kk : k) {
                for (double d : delta) {
                    SimConfig c{nn, kk, d};
                    c.clip_fraction = clip_fraction;
                    c.validate();
                    if (kk < 2 || kk >= nn) throw InputError("grid: k must lie in [2, n)");
                }
            }
        }
    }

    [[nodiscard]] std::size_t cells() const noexcept { return n.size() * k.size() * delta.size(); }
};

struct MetricRow {
    Index n = 0;
    Index k = 0;
    double delta = 0.0;
    Estimator estimator = Estimator::adaptive_impute;
    int rep = 0;
    double subspace_loss = 0.0;
    double factor_rmse = 0.0;
    double seconds = 0.0;
    int iterations = 0;  ///< fit iterations (adaptive_impute only)
};

struct ReplicateFailure {
    Index n = 0;
    Index k = 0;
    double delta = 0.0;
    Estimator estimator = Estimator::adaptive_impute;
    int rep = 0;
    std::string message;
};

struct SimResults {
    std::vector<MetricRow> rows;
    std::vector<ReplicateFailure> failures;
};

/// Columns rescaled to unit root-mean-square over `rows`.
inline Matrix unit_rms_columns(const Matrix& m, IndexRange rows) {
    Matrix out = m;
    const double count = static_cast<double>(rows.size());
    for (Index c = 0; c < m.cols(); ++c) {
        const double rms = std::sqrt(m.col(c).segment(rows.begin, rows.size()).squaredNorm() / count);
        if (rms > 0.0) out.col(c) /= rms;
    }
    return out;
}

inline std::string cell_name(const SimConfig& cfg) {
    return "n" + std::to_string(cfg.n) + "_k" + std::to_string(cfg.k) + "_delta" + format_number(cfg.delta);
}

/// edges.csv (citing,cited,weight by node index) and truth.csv for one replicate.
inline void save_replicate(const std::filesystem::path& dir, const CoSbmSample& s) {
    std::filesystem::create_directories(dir);
    std::ofstream edges(dir / "edges.csv", std::ios::binary);
    std::ofstream truth(dir / "truth.csv", std::ios::binary);
    if (!edges || !truth) throw std::ios_base::failure("cannot write replicate files under '" + dir.string() + "'");
    edges << "citing,cited,weight\n";
    for (Index c = 0; c < s.adjacency.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(s.adjacency, c); it; ++it) {
            edges << it.row() << ',' << it.col() << ',' << format_number(it.value()) << '\n';
        }
    }
    truth << "node,z_label,y_label,theta_out,theta_in\n";
    for (Index i = 0; i < s.truth.size(); ++i) {
        truth << i << ',' << s.truth.z_labels[static_cast<std::size_t>(i)] << ','
              << s.truth.y_labels[static_cast<std::size_t>(i)] << ',' << format_number(s.truth.theta_out[i]) << ','
              << format_number(s.truth.theta_in[i]) << '\n';
    }
}

/// Fit every requested estimator on one sampled network and score it against the truth.
inline void run_replicate(const SimConfig& cfg, int rep, const std::vector<Estimator>& estimators, const FitConfig& fit,
                          SimResults& out, const std::string& save_dir = {}) {
    const CoSbmSample sample = sample_cosbm(cfg);
    if (!save_dir.empty()) save_replicate(std::filesystem::path(save_dir) / cell_name(cfg) / std::to_string(rep), sample);
    const PartialAdjacency masked = mask_chronological(sample.adjacency);
    const Index ell = cfg.ell();
    const IndexRange rows_z{0, cfg.n - ell};
    const IndexRange rows_y{ell, cfg.n};

    const Matrix z_true = sample.truth.Z();
    const Matrix y_true = sample.truth.Y();
    const Matrix z_ref = unit_rms_columns(z_true, rows_z);
    const Matrix y_ref = unit_rms_columns(y_true, rows_y);

    SvdOptions svd = fit.svd;
    svd.seed = cfg.seed;

    for (Estimator e : estimators) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            LowRankFactors f;
            int iterations = 0;
            switch (e) {
                case Estimator::adaptive_impute: {
                    FitConfig fc = fit;
                    fc.k = cfg.k;
                    fc.seed = cfg.seed;
                    FitResult r = adaptive_impute(clip(masked, ell), fc);
                    f = std::move(r.factors);
                    iterations = r.report.iterations();
                    break;
                }
                case Estimator::zero_imputed: f = estimator_zero_imputed(masked, cfg.k, svd); break;
                case Estimator::symmetrized: f = estimator_symmetrized(masked, cfg.k, svd); break;
                case Estimator::fully_observed: f = estimator_oracle(sample.adjacency, cfg.k, svd); break;
            }
            const CoFactorModel model = build_cofactors(f, rows_z, rows_y);
            const double seconds = detail::seconds_since(t0);

            MetricRow row;
            row.n = cfg.n;
            row.k = cfg.k;
            row.delta = cfg.delta;
            row.estimator = e;
            row.rep = rep;
            row.seconds = seconds;
            row.iterations = iterations;
            row.subspace_loss = subspace_loss(z_true, f.U, y_true, f.V, rows_z, rows_y);
            row.factor_rmse = factor_rmse(z_ref, unit_rms_columns(model.Z_hat, rows_z), y_ref,
                                          unit_rms_columns(model.Y_hat, rows_y), rows_z, rows_y);
            if (!std::isfinite(row.subspace_loss) || !std::isfinite(row.factor_rmse)) {
                throw DegenerateError("non-finite metric");
            }
            out.rows.push_back(row);
        } catch (const Error& err) {
            out.failures.push_back({cfg.n, cfg.k, cfg.delta, e, rep, err.what()});
        }
    }
}

/// Every (n, k, delta, rep) replicate on a pool of `threads` workers. Output order
/// is independent of scheduling.
inline SimResults run_grid(const GridSpec& spec, unsigned threads = 1,
                           const std::function<void(std::size_t, std::size_t)>& progress = {}) {
    spec.validate();
    struct Task {
        SimConfig cfg;
        int rep;
    };
    std::vector<Task> tasks;
    for (Index n : spec.n) {
        for (Index k : spec.k) {
            for (double d : spec.delta) {
                SimConfig base{n, k, d};
                base.clip_fraction = spec.clip_fraction;
                base.symmetric_nodes = spec.symmetric_nodes;
                // Each cell gets its own stream family, independent of grid order.
                base.seed = replicate_config(SimConfig{.seed = spec.seed},
                                             static_cast<std::uint64_t>(n) * 1000003ULL +
                                                 static_cast<std::uint64_t>(k) * 7919ULL +
                                                 static_cast<std::uint64_t>(std::llround(d * 1000.0)))
                                .seed;
                for (int r = 0; r < spec.reps; ++r) {
                    tasks.push_back({replicate_config(base, static_cast<std::uint64_t>(r)), r});
                }
            }
        }
    }

    std::vector<SimResults> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    std::exception_ptr fatal;
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
                run_replicate(tasks[i].cfg, tasks[i].rep, spec.estimators, spec.fit, slots[i], spec.save_dir);
            } catch (...) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                if (!fatal) fatal = std::current_exception();
                next = tasks.size();
                return;
            }
            const std::size_t finished = ++done;
            if (progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                progress(finished, tasks.size());
            }
        }
    };
    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(tasks.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    SimResults all;
    for (auto& s : slots) {
        all.rows.insert(all.rows.end(), s.rows.begin(), s.rows.end());
        all.failures.insert(all.failures.end(), s.failures.begin(), s.failures.end());
    }
    return all;
}

struct CellSummary {
    Index n = 0;
    Index k = 0;
    double delta = 0.0;
    Estimator estimator = Estimator::adaptive_impute;
    int count = 0;
    double subspace_mean = 0.0;
    double subspace_sd = 0.0;
    double factor_mean = 0.0;
    double factor_sd = 0.0;
};

/// Mean and sample standard deviation per (n, k, delta, estimator).
inline std::vector<CellSummary> summarize(const std::vector<MetricRow>& rows) {
    using Key = std::tuple<Index, Index, double, int>;
    std::map<Key, std::vector<const MetricRow*>> groups;
    for (const auto& r : rows) groups[{r.n, r.k, r.delta, static_cast<int>(r.estimator)}].push_back(&r);
    std::vector<CellSummary> out;
    for (const auto& [key, group] : groups) {
        CellSummary s;
        s.n = std::get<0>(key);
        s.k = std::get<1>(key);
        s.delta = std::get<2>(key);
        s.estimator = static_cast<Estimator>(std::get<3>(key));
        s.count = static_cast<int>(group.size());
        auto stats = [&](auto field, double& mean, double& sd) {
            double sum = 0.0;
            for (const MetricRow* r : group) sum += field(*r);
            mean = sum / s.count;
            double ss = 0.0;
            for (const MetricRow* r : group) ss += (field(*r) - mean) * (field(*r) - mean);
            sd = s.count > 1 ? std::sqrt(ss / (s.count - 1)) : 0.0;
        };
        stats([](const MetricRow& r) { return r.subspace_loss; }, s.subspace_mean, s.subspace_sd);
        stats([](const MetricRow& r) { return r.factor_rmse; }, s.factor_mean, s.factor_sd);
        out.push_back(s);
    }
    return out;
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
    out << "n,k,delta,estimator,rep,subspace_loss,factor_rmse,seconds\n";
    for (const auto& r : rows) {
        out << r.n << ',' << r.k << ',' << format_number(r.delta) << ',' << to_string(r.estimator) << ',' << r.rep
            << ',' << format_number(r.subspace_loss) << ',' << format_number(r.factor_rmse) << ','
            << format_number(r.seconds) << '\n';
    }
}

/// Long-format plot data: one row per (panel, x = delta, series = estimator).
inline void write_plot_csv(std::ostream& out, const std::vector<CellSummary>& cells) {
    out << "metric,n,k,delta,estimator,mean,sd,count\n";
    for (const char* metric : {"subspace_loss", "factor_rmse"}) {
        const bool sub = std::string(metric) == "subspace_loss";
        for (const auto& c : cells) {
            out << metric << ',' << c.n << ',' << c.k << ',' << format_number(c.delta) << ',' << to_string(c.estimator)
                << ',' << format_number(sub ? c.subspace_mean : c.factor_mean) << ','
                << format_number(sub ? c.subspace_sd : c.factor_sd) << ',' << c.count << '\n';
        }
    }
}

inline void write_failures_csv(std::ostream& out, const std::vector<ReplicateFailure>& failures) {
    out << "n,k,delta,estimator,rep,message\n";
    for (const auto& f : failures) {
        std::string msg = f.message;
        for (char& ch : msg) {
            if (ch == ',' || ch == '\n') ch = ' ';
        }
        out << f.n << ',' << f.k << ',' << format_number(f.delta) << ',' << to_string(f.estimator) << ',' << f.rep
            << ',' << msg << '\n';
    }
}

}  // namespace cofactor
