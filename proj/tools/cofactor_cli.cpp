#include "cofactor/bench.hpp"
#include "cofactor/cofactor.hpp"
#include "cofactor/model_io.hpp"
#include "cofactor/simulation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cofactor;

namespace {

enum Exit : int { ok = 0, invalid = 2, not_converged = 3, io = 4 };

json read_json_arg(const std::string& text_or_path) {
    if (!text_or_path.empty() && (text_or_path.front() == '{' || text_or_path.front() == '[')) {
        return json::parse(text_or_path);
    }
    std::ifstream in(text_or_path);
    if (!in) throw std::ios_base::failure("cannot open '" + text_or_path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("'" + text_or_path + "': " + e.what());
    }
}

/// Keys from a --config file fill options not given on the command line.
class ConfigLayer {
public:
    ConfigLayer(CLI::App& cmd, std::set<std::string> allowed) : cmd_(cmd), allowed_(std::move(allowed)) {
        cmd_.add_option("--config", path_, "JSON file with default values for this command");
    }

    void apply() {
        if (path_.empty()) return;
        const json cfg = read_json_arg(path_);
        if (!cfg.is_object()) throw InputError("config must be a JSON object");
        for (const auto& [key, value] : cfg.items()) {
            if (!allowed_.count(key)) throw InputError("unknown config key '" + key + "'");
            std::string flag = "--" + key;
            for (char& c : flag) {
                if (c == '_') c = '-';
            }
            CLI::Option* opt = cmd_.get_option_no_throw(flag);
            if (!opt) throw InputError("config key '" + key + "' has no matching option");
            if (opt->count() > 0) continue;
            std::vector<std::string> results;
            auto as_text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (key == "grid") {
                results.push_back(value.dump());
            } else if (value.is_array()) {
                for (const auto& v : value) results.push_back(as_text(v));
            } else if (value.is_boolean()) {
                if (!value.get<bool>()) continue;
                results.push_back("true");
            } else {
                results.push_back(as_text(value));
            }
            opt->add_result(results);
            opt->run_callback();
        }
    }

private:
    CLI::App& cmd_;
    std::set<std::string> allowed_;
    std::string path_;
};

unsigned resolve_threads(int flag) {
    if (flag > 0) return static_cast<unsigned>(flag);
    if (const char* env = std::getenv("COFACTOR_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
        throw InputError("COFACTOR_THREADS must be a positive integer");
    }
    return 1;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
    return out;
}

Ingested ingest(const std::string& edges, const std::string& times, bool dedupe) {
    EdgeList list;
    list.edges = read_edges(edges);
    if (!times.empty()) list.times = read_times(times);
    return from_edge_list(list, dedupe);
}

json stats_json(const IngestStats& s) {
    return {{"self_loops_dropped", s.self_loops_dropped},
            {"duplicate_edges", s.duplicate_edges},
            {"lower_triangle_edges", s.lower_triangle_edges}};
}

// ---------------------------------------------------------------- fit

struct FitArgs {
    std::string edges, times, out;
    Index k = 0;
    std::optional<Index> ell;
    double epsilon = 1e-7;
    int max_iters = 200;
    std::uint64_t seed = 1;
    std::optional<double> fixed_alpha;
    bool no_dedupe = false;
};

int cmd_fit(const FitArgs& args) {
    const Ingested in = ingest(args.edges, args.times, !args.no_dedupe);
    const PartialAdjacency& a = in.adjacency;

    FitConfig cfg;
    cfg.k = args.k;
    cfg.epsilon = args.epsilon;
    cfg.max_iters = args.max_iters;
    cfg.seed = args.seed;
    cfg.fixed_alpha = args.fixed_alpha;
    if (args.fixed_alpha) cfg.init = Initializer::svd;
    cfg.validate(a.size());
    const Index ell = args.ell.value_or(a.size() / 10);
    const PartialAdjacency clipped = clip(a, ell);

    fs::create_directories(args.out);
    json effective = {{"command", "fit"},
                      {"edges", args.edges},
                      {"times", args.times},
                      {"k", args.k},
                      {"ell", ell},
                      {"epsilon", args.epsilon},
                      {"max_iters", args.max_iters},
                      {"seed", args.seed},
                      {"dedupe", !args.no_dedupe},
                      {"fixed_alpha", args.fixed_alpha ? json(*args.fixed_alpha) : json(nullptr)},
                      {"out", args.out}};
    write_json(fs::path(args.out) / "config.json", effective);

    FitResult fit;
    try {
        fit = adaptive_impute(clipped, cfg);
    } catch (const DegenerateFitError& e) {
        json report = e.report().to_json();
        report["ingest"] = stats_json(in.stats);
        write_json(fs::path(args.out) / "fit_report.json", report);
        throw;
    }
    const CoFactorModel model = build_cofactors(fit.factors, clipped.identified_rows_z(), clipped.identified_rows_y());

    Vector in_degree = Vector::Zero(a.size());
    for (Index j = 0; j < a.size(); ++j) {
        for (Index t = a.col_ptr()[j]; t < a.col_ptr()[j + 1]; ++t) in_degree[j] += a.col_values()[t];
    }
    save_model(args.out, model, a.node_ids(), in_degree);

    json report = fit.report.to_json();
    report["ingest"] = stats_json(in.stats);
    report["n"] = a.size();
    report["nnz"] = a.nnz();
    report["clipped_cols"] = clipped.clipped_cols();
    report["clipped_rows"] = clipped.clipped_rows();
    write_json(fs::path(args.out) / "fit_report.json", report);

    std::cerr << "fit: n=" << a.size() << " k=" << args.k << " iterations=" << fit.report.iterations()
              << " status=" << to_string(fit.report.status) << '\n';
    if (!fit.report.converged) {
        std::cerr << "fit: not converged within " << args.max_iters << " iterations\n";
        return not_converged;
    }
    return ok;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string grid, out;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;
    std::optional<int> max_iters;
    bool save_replicates = false;
};

GridSpec parse_grid(const json& g) {
    static const std::set<std::string> keys{"n", "k", "delta", "reps", "estimators", "seed", "clip_fraction",
                                            "symmetric_nodes"};
    if (!g.is_object()) throw InputError("grid must be a JSON object");
    for (const auto& [key, value] : g.items()) {
        if (!keys.count(key)) throw InputError("unknown grid key '" + key + "'");
    }
    GridSpec spec;
    auto list = [&](const char* key, auto& dst) {
        if (!g.contains(key)) return;
        const json& v = g.at(key);
        using T = typename std::decay_t<decltype(dst)>::value_type;
        dst.clear();
        if (v.is_array()) {
            for (const auto& x : v) dst.push_back(x.get<T>());
        } else {
            dst.push_back(v.get<T>());
        }
    };
    list("n", spec.n);
    list("k", spec.k);
    list("delta", spec.delta);
    if (g.contains("reps")) spec.reps = g.at("reps").get<int>();
    if (g.contains("seed")) spec.seed = g.at("seed").get<std::uint64_t>();
    if (g.contains("clip_fraction")) spec.clip_fraction = g.at("clip_fraction").get<double>();
    if (g.contains("symmetric_nodes")) spec.symmetric_nodes = g.at("symmetric_nodes").get<bool>();
    if (g.contains("estimators")) {
        spec.estimators.clear();
        for (const auto& e : g.at("estimators")) spec.estimators.push_back(parse_estimator(e.get<std::string>()));
    }
    return spec;
}

json grid_json(const GridSpec& g) {
    std::vector<std::string> est;
    for (Estimator e : g.estimators) est.emplace_back(to_string(e));
    return {{"n", g.n},
            {"k", g.k},
            {"delta", g.delta},
            {"reps", g.reps},
            {"estimators", est},
            {"seed", g.seed},
            {"clip_fraction", g.clip_fraction},
            {"symmetric_nodes", g.symmetric_nodes}};
}

int cmd_simulate(const SimulateArgs& args) {
    GridSpec spec = args.grid.empty() ? GridSpec{} : parse_grid(read_json_arg(args.grid));
    if (args.seed) spec.seed = *args.seed;
    if (args.epsilon) spec.fit.epsilon = *args.epsilon;
    if (args.max_iters) spec.fit.max_iters = *args.max_iters;
    spec.validate();
    const unsigned threads = resolve_threads(args.threads);

    fs::create_directories(args.out);
    if (args.save_replicates) spec.save_dir = (fs::path(args.out) / "results").string();
    write_json(fs::path(args.out) / "config.json", {{"command", "simulate"},
                                                    {"grid", grid_json(spec)},
                                                    {"epsilon", spec.fit.epsilon},
                                                    {"max_iters", spec.fit.max_iters},
                                                    {"threads", threads},
                                                    {"save_replicates", args.save_replicates},
                                                    {"out", args.out}});

    const std::size_t total = spec.cells() * static_cast<std::size_t>(spec.reps);
    const SimResults res = run_grid(spec, threads, [&](std::size_t done, std::size_t all) {
        if (done == all || done % 10 == 0) std::cerr << "simulate: " << done << '/' << all << " replicates\n";
    });

    {
        auto out = open_out(fs::path(args.out) / "metrics.csv");
        write_metrics_csv(out, res.rows);
    }
    {
        auto out = open_out(fs::path(args.out) / "summary.csv");
        write_plot_csv(out, summarize(res.rows));
    }
    {
        auto out = open_out(fs::path(args.out) / "failures.csv");
        write_failures_csv(out, res.failures);
    }
    std::cerr << "simulate: " << res.rows.size() << " metric rows from " << total << " replicates, "
              << res.failures.size() << " failed fits excluded\n";
    return ok;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::vector<Index> sizes{1000, 2000, 4000};
    Index k = 10;
    double per_row = 10.0;
    int reps = 3;
    double max_bytes = 2e9;
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_bench(const BenchArgs& args) {
    if (args.k < 2) throw InputError("bench: k must be at least 2");
    if (args.reps < 1) throw InputError("bench: reps must be positive");
    for (Index n : args.sizes) {
        if (n <= args.k) throw InputError("bench: every size must exceed k");
    }
    fs::create_directories(args.out);
    write_json(fs::path(args.out) / "config.json", {{"command", "bench"},
                                                    {"sizes", args.sizes},
                                                    {"k", args.k},
                                                    {"per_row", args.per_row},
                                                    {"reps", args.reps},
                                                    {"max_bytes", args.max_bytes},
                                                    {"seed", args.seed},
                                                    {"out", args.out}});
    auto out = open_out(fs::path(args.out) / "bench.csv");
    out << "n,k,per_row,variant,seconds,peak_rss_kb,status\n";
    for (Index n : args.sizes) {
        for (BenchVariant v : {BenchVariant::implicit, BenchVariant::dense, BenchVariant::sparse_explicit}) {
            std::string status = "ok";
            double seconds = 0.0;
            long rss = 0;
            if (variant_bytes(v, n, args.k) > args.max_bytes) {
                status = "memory_bound";
            } else {
                bool oom = false;
                const auto m = measure_in_child(
                    [&] {
                        const BenchProblem p = make_bench_problem(n, args.k, args.per_row, args.seed);
                        SvdOptions opt;
                        opt.seed = args.seed;
                        return time_iteration(v, p, args.reps, opt);
                    },
                    &oom);
                if (m) {
                    seconds = m->value;
                    rss = m->peak_rss_kb;
                } else {
                    status = oom ? "memory_bound" : "failed";
                }
            }
            out << n << ',' << args.k << ',' << format_number(args.per_row) << ',' << to_string(v) << ','
                << format_number(seconds) << ',' << rss << ',' << status << '\n';
            std::cerr << "bench: n=" << n << ' ' << to_string(v) << ' ' << status << ' ' << seconds << "s " << rss
                      << "KiB\n";
        }
    }
    return ok;
}

// ---------------------------------------------------------------- impute-forward

struct ImputeArgs {
    std::string model, out;
    Index top = 15;
    std::vector<std::string> nodes;
};

int cmd_impute_forward(const ImputeArgs& args) {
    if (args.top < 0) throw InputError("--top must be nonnegative");
    const SavedModel saved = load_model(args.model);
    const Vector scores = imputed_indegree(saved.model);

    std::ostringstream table;
    table << "rank,node_id,imputed,cited_by,status\n";
    Index rank = 0;
    for (const RankedNode& r : rank_by_imputed_indegree(saved.model, args.top)) {
        table << ++rank << ',' << saved.node_ids[static_cast<std::size_t>(r.index)] << ','
              << format_number(r.imputed) << ',' << format_number(saved.observed_in_degree[r.index]) << ",identified\n";
    }
    for (const std::string& id : args.nodes) {
        const auto it = std::find(saved.node_ids.begin(), saved.node_ids.end(), id);
        if (it == saved.node_ids.end()) throw InputError("unknown node id '" + id + "'");
        const auto j = static_cast<Index>(it - saved.node_ids.begin());
        const bool identified = saved.model.identified_rows_y.contains(j);
        table << ',' << id << ',' << (identified ? format_number(scores[j]) : std::string()) << ','
              << format_number(saved.observed_in_degree[j]) << ',' << (identified ? "identified" : "unidentified")
              << '\n';
    }
    if (args.out.empty()) {
        std::cout << table.str();
    } else {
        auto out = open_out(args.out);
        out << table.str();
    }
    return ok;
}

// ---------------------------------------------------------------- ingest-check

struct IngestArgs {
    std::string edges, times, out;
    bool no_dedupe = false;
};

int cmd_ingest_check(const IngestArgs& args) {
    const Ingested in = ingest(args.edges, args.times, !args.no_dedupe);
    json summary = {{"n", in.adjacency.size()},
                    {"nnz", in.adjacency.nnz()},
                    {"lower_observed", in.adjacency.lower_observed().size()},
                    {"stats", stats_json(in.stats)}};
    std::cout << summary.dump(2) << '\n';
    if (!args.out.empty()) {
        fs::create_directories(args.out);
        {
            auto out = open_out(fs::path(args.out) / "edges.csv");
            write_edges(out, to_edge_records(in.adjacency));
        }
        write_json(fs::path(args.out) / "edges.json", sidecar_json(in.adjacency));
    }
    return ok;
}

int run(int argc, char** argv) {
    CLI::App app{"Co-factor analysis of chronologically observed citation networks"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Clip, complete and varimax-rotate an edge list");
    fit_cmd->add_option("--edges", fit.edges, "citing,cited[,weight] file")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--times", fit.times, "id,time file")->check(CLI::ExistingFile);
    fit_cmd->add_option("--k", fit.k, "rank")->required();
    fit_cmd->add_option("--ell", fit.ell, "clipping parameter (default n/10)");
    fit_cmd->add_option("--epsilon", fit.epsilon, "relative-change tolerance")->capture_default_str();
    fit_cmd->add_option("--max-iters", fit.max_iters, "iteration cap")->capture_default_str();
    fit_cmd->add_option("--seed", fit.seed, "Krylov start seed")->capture_default_str();
    fit_cmd->add_option("--out", fit.out, "output directory")->required();
    fit_cmd->add_option("--fixed-alpha", fit.fixed_alpha, "fixed threshold (softImpute mode)");
    fit_cmd->add_flag("--no-dedupe", fit.no_dedupe, "sum duplicate edges instead of keeping one");
    ConfigLayer fit_cfg(*fit_cmd, {"edges", "times", "k", "ell", "epsilon", "max_iters", "seed", "out",
                                   "fixed_alpha", "no_dedupe"});

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Co-blockmodel simulation sweep");
    sim_cmd->add_option("--grid", sim.grid, "grid as inline JSON or a JSON file");
    sim_cmd->add_option("--out", sim.out, "output directory")->required();
    sim_cmd->add_option("--threads", sim.threads, "worker threads (default: COFACTOR_THREADS or 1)");
    sim_cmd->add_option("--seed", sim.seed, "base seed (overrides the grid)");
    sim_cmd->add_option("--epsilon", sim.epsilon, "relative-change tolerance");
    sim_cmd->add_option("--max-iters", sim.max_iters, "iteration cap");
    sim_cmd->add_flag("--save-replicates", sim.save_replicates, "write each network and truth under results/");
    ConfigLayer sim_cfg(*sim_cmd, {"grid", "out", "threads", "seed", "epsilon", "max_iters", "save_replicates"});

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "Single-iteration time and memory of three completion schemes");
    bench_cmd->add_option("--sizes", bench.sizes, "node counts")->delimiter(',')->capture_default_str();
    bench_cmd->add_option("--k", bench.k, "rank")->capture_default_str();
    bench_cmd->add_option("--per-row", bench.per_row, "nonzeros per row")->capture_default_str();
    bench_cmd->add_option("--reps", bench.reps, "timed repetitions (median reported)")->capture_default_str();
    bench_cmd->add_option("--max-bytes", bench.max_bytes, "skip variants needing more memory")->capture_default_str();
    bench_cmd->add_option("--seed", bench.seed, "data seed")->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "output directory")->required();
    ConfigLayer bench_cfg(*bench_cmd, {"sizes", "k", "per_row", "reps", "max_bytes", "seed", "out"});

    ImputeArgs imp;
    auto* imp_cmd = app.add_subcommand("impute-forward", "Rank nodes by imputed in-degree from older nodes");
    imp_cmd->add_option("--model", imp.model, "directory written by fit")->required();
    imp_cmd->add_option("--top", imp.top, "rows in the ranked table")->capture_default_str();
    imp_cmd->add_option("--nodes", imp.nodes, "additional node ids to report")->delimiter(',');
    imp_cmd->add_option("--out", imp.out, "output CSV (default stdout)");
    ConfigLayer imp_cfg(*imp_cmd, {"model", "top", "nodes", "out"});

    IngestArgs ing;
    auto* ing_cmd = app.add_subcommand("ingest-check", "Validate an edge list and report ingestion statistics");
    ing_cmd->add_option("--edges", ing.edges, "citing,cited[,weight] file")->required()->check(CLI::ExistingFile);
    ing_cmd->add_option("--times", ing.times, "id,time file")->check(CLI::ExistingFile);
    ing_cmd->add_option("--out", ing.out, "write the normalized edge list and sidecar here");
    ing_cmd->add_flag("--no-dedupe", ing.no_dedupe, "sum duplicate edges instead of keeping one");
    ConfigLayer ing_cfg(*ing_cmd, {"edges", "times", "out", "no_dedupe"});

    // Required options may come from --config, so requirement checks run after it is merged.
    for (CLI::App* cmd : {fit_cmd, sim_cmd, bench_cmd, imp_cmd, ing_cmd}) {
        for (CLI::Option* opt : cmd->get_options()) {
            if (opt->get_required()) {
                opt->required(false);
                opt->description(opt->get_description() + " [required]");
            }
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return invalid;
    }

    auto need = [](CLI::App* cmd, std::initializer_list<const char*> flags) {
        for (const char* f : flags) {
            CLI::Option* opt = cmd->get_option(f);
            if (opt->count() == 0) throw InputError(std::string(f) + " is required");
        }
    };

    if (*fit_cmd) {
        fit_cfg.apply();
        need(fit_cmd, {"--edges", "--k", "--out"});
        return cmd_fit(fit);
    }
    if (*sim_cmd) {
        sim_cfg.apply();
        need(sim_cmd, {"--out"});
        return cmd_simulate(sim);
    }
    if (*bench_cmd) {
        bench_cfg.apply();
        need(bench_cmd, {"--out"});
        return cmd_bench(bench);
    }
    if (*imp_cmd) {
        imp_cfg.apply();
        need(imp_cmd, {"--model"});
        return cmd_impute_forward(imp);
    }
    ing_cfg.apply();
    need(ing_cmd, {"--edges"});
    return cmd_ingest_check(ing);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ForwardEdgeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return invalid;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return not_converged;
    } catch (const DegenerateError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return not_converged;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return invalid;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return invalid;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io;
    }
}
