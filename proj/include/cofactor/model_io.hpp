#pragma once

#include "cofactor/edge_list.hpp"
#include "cofactor/varimax.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace cofactor {

/// A co-factor model together with node ids and observed in-degrees.
struct SavedModel {
    CoFactorModel model;
    std::vector<std::string> node_ids;
    Vector observed_in_degree;
};

namespace detail {

inline std::string factor_name(Index c) {
    std::ostringstream os;
    os << "factor_" << std::setw(2) << std::setfill('0') << (c + 1);
    return os.str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
    return out;
}

inline void write_loadings(const std::filesystem::path& path, const Matrix& m, const std::vector<std::string>& ids,
                           IndexRange identified) {
    auto out = open_output(path);
    out << "node_id";
    for (Index c = 0; c < m.cols(); ++c) out << ',' << factor_name(c);
    out << ",identified\n";
    for (Index i = 0; i < m.rows(); ++i) {
        out << ids[static_cast<std::size_t>(i)];
        for (Index c = 0; c < m.cols(); ++c) out << ',' << format_number(m(i, c));
        out << ',' << (identified.contains(i) ? 1 : 0) << '\n';
    }
    if (!out) throw std::ios_base::failure("write failed for '" + path.string() + "'");
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split(line, ','));
    }
    return rows;
}

inline double to_double(const std::string& s, const std::filesystem::path& where) {
    double v = 0.0;
    if (!parse_double(s, v)) throw InputError("'" + where.string() + "': bad number '" + s + "'");
    return v;
}

inline Matrix read_loadings(const std::filesystem::path& path, Index k, std::vector<std::string>* ids) {
    const auto rows = read_csv(path);
    if (rows.empty() || static_cast<Index>(rows.front().size()) != k + 2) {
        throw InputError("'" + path.string() + "': expected node_id, " + std::to_string(k) + " factors, identified");
    }
    Matrix m(static_cast<Index>(rows.size()) - 1, k);
    if (ids) ids->clear();
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != k + 2) throw InputError("'" + path.string() + "': ragged row");
        if (ids) ids->push_back(rows[r][0]);
        for (Index c = 0; c < k; ++c) {
            m(static_cast<Index>(r) - 1, c) = to_double(rows[r][static_cast<std::size_t>(c) + 1], path);
        }
    }
    return m;
}

}  // namespace detail

/// Writes z_loadings.csv, y_loadings.csv, b_hat.csv, nodes.csv and model.json under `dir`.
inline void save_model(const std::filesystem::path& dir, const CoFactorModel& m, const std::vector<std::string>& ids,
                       const Vector& observed_in_degree) {
    std::filesystem::create_directories(dir);
    if (static_cast<Index>(ids.size()) != m.size() || observed_in_degree.size() != m.size()) {
        throw DimensionError("save_model: node id or degree count does not match the model");
    }
    detail::write_loadings(dir / "z_loadings.csv", m.Z_hat, ids, m.identified_rows_z);
    detail::write_loadings(dir / "y_loadings.csv", m.Y_hat, ids, m.identified_rows_y);

    {
        auto out = detail::open_output(dir / "b_hat.csv");
        for (Index c = 0; c < m.rank(); ++c) out << (c ? "," : "") << detail::factor_name(c);
        out << '\n';
        for (Index r = 0; r < m.rank(); ++r) {
            for (Index c = 0; c < m.rank(); ++c) out << (c ? "," : "") << format_number(m.B_hat(r, c));
            out << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "nodes.csv");
        out << "node_id,observed_in_degree\n";
        for (Index i = 0; i < m.size(); ++i) {
            out << ids[static_cast<std::size_t>(i)] << ',' << format_number(observed_in_degree[i]) << '\n';
        }
    }
    nlohmann::json meta = {{"n", m.size()},
                           {"k", m.rank()},
                           {"identified_rows_z", {m.identified_rows_z.begin, m.identified_rows_z.end}},
                           {"identified_rows_y", {m.identified_rows_y.begin, m.identified_rows_y.end}},
                           {"sign_flips_z", m.flipped_z},
                           {"sign_flips_y", m.flipped_y}};
    auto out = detail::open_output(dir / "model.json");
    out << meta.dump(2) << '\n';
}

inline SavedModel load_model(const std::filesystem::path& dir) {
    for (const char* f : {"model.json", "z_loadings.csv", "y_loadings.csv", "b_hat.csv", "nodes.csv"}) {
        if (!std::filesystem::exists(dir / f)) {
            throw std::ios_base::failure("model file '" + (dir / f).string() + "' is missing");
        }
    }
    std::ifstream meta_in(dir / "model.json");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("model.json: " + std::string(e.what()));
    }
    SavedModel s;
    const Index k = meta.at("k").get<Index>();
    const Index n = meta.at("n").get<Index>();
    s.model.Z_hat = detail::read_loadings(dir / "z_loadings.csv", k, &s.node_ids);
    s.model.Y_hat = detail::read_loadings(dir / "y_loadings.csv", k, nullptr);
    if (s.model.Z_hat.rows() != n || s.model.Y_hat.rows() != n) throw InputError("model: loadings row count != n");

    const auto b_rows = detail::read_csv(dir / "b_hat.csv");
    if (static_cast<Index>(b_rows.size()) != k + 1) throw InputError("b_hat.csv: expected k rows");
    s.model.B_hat.resize(k, k);
    for (Index r = 0; r < k; ++r) {
        const auto& row = b_rows[static_cast<std::size_t>(r) + 1];
        if (static_cast<Index>(row.size()) != k) throw InputError("b_hat.csv: expected k columns");
        for (Index c = 0; c < k; ++c) s.model.B_hat(r, c) = detail::to_double(row[static_cast<std::size_t>(c)], "b_hat.csv");
    }
    const auto rz = meta.at("identified_rows_z");
    const auto ry = meta.at("identified_rows_y");
    s.model.identified_rows_z = {rz.at(0).get<Index>(), rz.at(1).get<Index>()};
    s.model.identified_rows_y = {ry.at(0).get<Index>(), ry.at(1).get<Index>()};
    s.model.flipped_z = meta.value("sign_flips_z", std::vector<bool>(static_cast<std::size_t>(k), false));
    s.model.flipped_y = meta.value("sign_flips_y", std::vector<bool>(static_cast<std::size_t>(k), false));

    const auto nodes = detail::read_csv(dir / "nodes.csv");
    if (static_cast<Index>(nodes.size()) != n + 1) throw InputError("nodes.csv: expected n rows");
    s.observed_in_degree.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& row = nodes[static_cast<std::size_t>(i) + 1];
        if (row.size() != 2 || row[0] != s.node_ids[static_cast<std::size_t>(i)]) {
            throw InputError("nodes.csv: node order disagrees with the loadings");
        }
        s.observed_in_degree[i] = detail::to_double(row[1], "nodes.csv");
    }
    return s;
}

struct RankedNode {
    Index index = 0;
    double imputed = 0.0;
};

/// Identified nodes ordered by imputed in-degree, largest first (ties by index), truncated to `top`.
inline std::vector<RankedNode> rank_by_imputed_indegree(const CoFactorModel& m, Index top) {
    const Vector scores = imputed_indegree(m);
    std::vector<RankedNode> out;
    for (Index j = 0; j < m.size(); ++j) {
        if (m.identified_rows_y.contains(j)) out.push_back({j, scores[j]});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedNode& a, const RankedNode& b) { return a.imputed > b.imputed; });
    if (top >= 0 && static_cast<Index>(out.size()) > top) out.resize(static_cast<std::size_t>(top));
    return out;
}

}  // namespace cofactor
