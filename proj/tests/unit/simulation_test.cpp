#include "cofactor/bench.hpp"
#include "cofactor/model_io.hpp"
#include "cofactor/simulation.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <sstream>

using namespace cofactor;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cofactor_sim_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

GridSpec small_grid() {
    GridSpec g;
    g.n = {100};
    g.k = {2};
    g.delta = {20.0};
    g.reps = 2;
    return g;
}

}  // namespace

TEST(RunGrid, OneRowPerEstimatorAndReplicate) {
    const SimResults res = run_grid(small_grid());
    EXPECT_EQ(res.rows.size(), 8u);
    EXPECT_TRUE(res.failures.empty());
    for (const auto& r : res.rows) {
        EXPECT_GE(r.subspace_loss, 0.0);
        EXPECT_LE(r.subspace_loss, 2.0 * std::sqrt(2.0) + 1e-12);
        EXPECT_GE(r.factor_rmse, 0.0);
        if (r.estimator != Estimator::adaptive_impute) {
            EXPECT_EQ(r.iterations, 0);
        }
    }
    std::ostringstream csv;
    write_metrics_csv(csv, res.rows);
    EXPECT_EQ(count_lines(csv.str()), res.rows.size() + 1);
}

TEST(RunGrid, ResultsIndependentOfThreadCount) {
    GridSpec g = small_grid();
    g.delta = {20.0, 40.0};
    const SimResults one = run_grid(g, 1);
    const SimResults two = run_grid(g, 2);
    ASSERT_EQ(one.rows.size(), two.rows.size());
    for (std::size_t i = 0; i < one.rows.size(); ++i) {
        EXPECT_EQ(one.rows[i].delta, two.rows[i].delta);
        EXPECT_EQ(one.rows[i].estimator, two.rows[i].estimator);
        EXPECT_EQ(one.rows[i].subspace_loss, two.rows[i].subspace_loss);
        EXPECT_EQ(one.rows[i].factor_rmse, two.rows[i].factor_rmse);
    }
}

TEST(RunGrid, FailuresAreLoggedNotFatal) {
    GridSpec g = small_grid();
    g.fit.init = Initializer::svd;
    g.fit.fixed_alpha = 1e12;
    const SimResults res = run_grid(g);
    EXPECT_EQ(res.rows.size(), 6u);
    ASSERT_EQ(res.failures.size(), 2u);
    for (const auto& f : res.failures) EXPECT_EQ(f.estimator, Estimator::adaptive_impute);
    std::ostringstream csv;
    write_failures_csv(csv, res.failures);
    EXPECT_EQ(count_lines(csv.str()), 3u);
}

TEST(RunGrid, RejectsInvalidGrid) {
    GridSpec g = small_grid();
    g.k = {1};
    EXPECT_THROW(run_grid(g), InputError);
    g = small_grid();
    g.reps = 0;
    EXPECT_THROW(run_grid(g), InputError);
    EXPECT_THROW(parse_estimator("nope"), InputError);
}

TEST(RunGrid, SavesReplicates) {
    const auto dir = scratch("save");
    GridSpec g = small_grid();
    g.reps = 1;
    g.estimators = {Estimator::zero_imputed};
    g.save_dir = dir.string();
    run_grid(g);
    EXPECT_TRUE(std::filesystem::exists(dir / "n100_k2_delta20" / "0" / "edges.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "n100_k2_delta20" / "0" / "truth.csv"));
    std::filesystem::remove_all(dir);
}

TEST(Summarize, MeansAndPlotRows) {
    std::vector<MetricRow> rows;
    for (int r = 0; r < 3; ++r) {
        MetricRow m;
        m.n = 10;
        m.k = 2;
        m.delta = 5.0;
        m.rep = r;
        m.subspace_loss = 1.0 + r;
        m.factor_rmse = 2.0 * r;
        rows.push_back(m);
    }
    const auto cells = summarize(rows);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].count, 3);
    EXPECT_DOUBLE_EQ(cells[0].subspace_mean, 2.0);
    EXPECT_DOUBLE_EQ(cells[0].subspace_sd, 1.0);
    EXPECT_DOUBLE_EQ(cells[0].factor_mean, 2.0);
    EXPECT_DOUBLE_EQ(cells[0].factor_sd, 2.0);
    std::ostringstream csv;
    write_plot_csv(csv, cells);
    EXPECT_EQ(count_lines(csv.str()), 3u);
}

TEST(ModelIo, SaveLoadRoundTrip) {
    std::mt19937_64 rng(71);
    const Index n = 30;
    const CoFactorModel m = build_cofactors(oracle::random_factors(n, 3, rng), {0, n - 3}, {3, n});
    std::vector<std::string> ids;
    for (Index i = 0; i < n; ++i) ids.push_back("node" + std::to_string(i));
    const Vector deg = Vector::LinSpaced(n, 0.0, 29.0);
    const auto dir = scratch("model");
    save_model(dir, m, ids, deg);
    const SavedModel back = load_model(dir);
    EXPECT_EQ(back.node_ids, ids);
    EXPECT_EQ(back.observed_in_degree, deg);
    EXPECT_EQ(back.model.identified_rows_z.end, n - 3);
    EXPECT_EQ(back.model.identified_rows_y.begin, 3);
    EXPECT_LE((back.model.B_hat - m.B_hat).cwiseAbs().maxCoeff(), 1e-12 * m.B_hat.cwiseAbs().maxCoeff());
    for (Index i = 0; i < n - 3; ++i) {
        for (Index j = 3; j < n; ++j) {
            EXPECT_NEAR(impute_forward(back.model, i, j), impute_forward(m, i, j), 1e-10);
        }
    }
    EXPECT_THROW(save_model(dir, m, {"a"}, deg), DimensionError);
    std::filesystem::remove_all(dir);
    EXPECT_ANY_THROW(load_model(dir));
}

TEST(ModelIo, RankingOrderAndTruncation) {
    std::mt19937_64 rng(72);
    const Index n = 40;
    const CoFactorModel m = build_cofactors(oracle::random_factors(n, 2, rng), {0, n - 4}, {4, n});
    const auto all = rank_by_imputed_indegree(m, n);
    EXPECT_EQ(all.size(), static_cast<std::size_t>(n - 4));
    for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].imputed, all[i].imputed);
    for (const auto& r : all) EXPECT_GE(r.index, 4);
    EXPECT_TRUE(rank_by_imputed_indegree(m, 0).empty());
    const auto top5 = rank_by_imputed_indegree(m, 5);
    ASSERT_EQ(top5.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(top5[i].index, all[i].index);
}

TEST(Bench, VariantsAgree) {
    const BenchProblem p = make_bench_problem(500, 5, 10.0, 3);
    EXPECT_LE(p.data.nnz(), 5000);
    SvdOptions opt;
    opt.tol = 1e-12;
    const IterationOutput imp = run_iteration(BenchVariant::implicit, p.data, p.z, opt);
    const IterationOutput den = run_iteration(BenchVariant::dense, p.data, p.z, opt);
    const IterationOutput spx = run_iteration(BenchVariant::sparse_explicit, p.data, p.z, opt);
    EXPECT_NEAR(imp.alpha, den.alpha, 1e-8 * std::abs(den.alpha));
    EXPECT_NEAR(spx.alpha, den.alpha, 1e-8 * std::abs(den.alpha));
    const Matrix ref = den.svd.to_dense();
    EXPECT_LE((imp.svd.to_dense() - ref).norm(), 1e-8 * ref.norm());
    EXPECT_LE((spx.svd.to_dense() - ref).norm(), 1e-8 * ref.norm());
}

TEST(Bench, ChildMeasurementReportsValueAndFailure) {
    const auto ok = measure_in_child([] { return 2.5; });
    ASSERT_TRUE(ok.has_value());
    EXPECT_EQ(ok->value, 2.5);
    EXPECT_GT(ok->peak_rss_kb, 0);
    EXPECT_FALSE(measure_in_child([]() -> double { throw std::runtime_error("boom"); }).has_value());
}
