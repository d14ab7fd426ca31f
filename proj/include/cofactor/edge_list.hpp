#pragma once

#include "cofactor/partial_adjacency.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cofactor {

struct EdgeRecord {
    std::string citing;
    std::string cited;
    double weight = 1.0;

    friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

struct Timestamp {
    std::string id;
    std::int64_t time = 0;
};

/// Citation records plus an optional publication-time table.
struct EdgeList {
    std::vector<EdgeRecord> edges;
    std::optional<std::vector<Timestamp>> times;
};

struct IngestStats {
    Index self_loops_dropped = 0;
    Index duplicate_edges = 0;
    /// Same-time citations stored below the diagonal.
    Index lower_triangle_edges = 0;
};

/// An edge that points forward in time (cited document newer than the citing one).
struct ForwardEdge {
    std::string citing;
    std::string cited;
    std::int64_t citing_time = 0;
    std::int64_t cited_time = 0;
};

class ForwardEdgeError : public InputError {
public:
    explicit ForwardEdgeError(std::vector<ForwardEdge> edges)
        : InputError(describe(edges)), edges_(std::move(edges)) {}

    [[nodiscard]] const std::vector<ForwardEdge>& edges() const noexcept { return edges_; }

private:
    static std::string describe(const std::vector<ForwardEdge>& edges) {
        std::string msg = std::to_string(edges.size()) + " edge(s) cite a newer document:";
        const std::size_t shown = std::min<std::size_t>(edges.size(), 20);
        for (std::size_t t = 0; t < shown; ++t) {
            msg += " " + edges[t].citing + "(" + std::to_string(edges[t].citing_time) + ")->" + edges[t].cited +
                   "(" + std::to_string(edges[t].cited_time) + ")";
        }
        if (shown < edges.size()) msg += " ...";
        return msg;
    }

    std::vector<ForwardEdge> edges_;
};

struct Ingested {
    PartialAdjacency adjacency;
    IngestStats stats;
};

namespace detail {

/// Order nodes so every citation points from a lower index to a higher one,
/// preferring earlier first appearance among available nodes.
inline std::vector<Index> topological_order(Index n, const std::vector<std::pair<Index, Index>>& arcs) {
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
    std::vector<Index> indeg(static_cast<std::size_t>(n), 0);
    for (const auto& [a, b] : arcs) {
        out[static_cast<std::size_t>(a)].push_back(b);
        ++indeg[static_cast<std::size_t>(b)];
    }
    std::priority_queue<Index, std::vector<Index>, std::greater<>> ready;
    for (Index v = 0; v < n; ++v) {
        if (indeg[static_cast<std::size_t>(v)] == 0) ready.push(v);
    }
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(n));
    while (!ready.empty()) {
        const Index v = ready.top();
        ready.pop();
        order.push_back(v);
        for (Index w : out[static_cast<std::size_t>(v)]) {
            if (--indeg[static_cast<std::size_t>(w)] == 0) ready.push(w);
        }
    }
    if (static_cast<Index>(order.size()) != n) {
        throw InputError("edges contain a citation cycle; supply publication times to order the documents");
    }
    return order;
}

}  // namespace detail

/// Build a chronologically indexed partial adjacency matrix from citation records.
///
/// Nodes are sorted by decreasing time; ties keep the order of first appearance
/// in the timestamp table. Without timestamps the edges must form a DAG and are
/// ordered topologically (citing before cited). With `dedupe` on, repeated
/// (citing, cited) pairs collapse to the first record's weight; with it off,
/// weights of repeated pairs are summed.
inline Ingested from_edge_list(const EdgeList& list, bool dedupe = true) {
    Ingested result;
    std::vector<std::string> ids;
    std::unordered_map<std::string, Index> first_seen;
    std::vector<std::int64_t> times;

    auto intern = [&](const std::string& id) {
        auto [it, inserted] = first_seen.try_emplace(id, static_cast<Index>(ids.size()));
        if (inserted) ids.push_back(id);
        return it->second;
    };

    if (list.times) {
        for (const auto& ts : *list.times) {
            const auto before = ids.size();
            const Index v = intern(ts.id);
            if (ids.size() == before) {
                if (times[static_cast<std::size_t>(v)] != ts.time) {
                    throw InputError("document '" + ts.id + "' has conflicting publication times");
                }
                continue;
            }
            times.push_back(ts.time);
        }
    }

    // Deduplicate on external ids before ordering.
    std::vector<std::pair<Index, Index>> arcs;
    std::vector<double> weights;
    std::map<std::pair<Index, Index>, std::size_t> seen;
    std::vector<std::string> unknown;
    for (const auto& e : list.edges) {
        if (list.times) {
            const bool a = first_seen.contains(e.citing);
            const bool b = first_seen.contains(e.cited);
            if (!a) unknown.push_back(e.citing);
            if (!b) unknown.push_back(e.cited);
            if (!a || !b) continue;
        }
        if (!std::isfinite(e.weight) || e.weight < 0.0) {
            throw InputError("edge " + e.citing + "->" + e.cited + " has an invalid weight");
        }
        if (e.citing == e.cited) {
            ++result.stats.self_loops_dropped;
            continue;
        }
        const Index a = intern(e.citing);
        const Index b = intern(e.cited);
        auto [it, inserted] = seen.try_emplace({a, b}, arcs.size());
        if (inserted) {
            arcs.emplace_back(a, b);
            weights.push_back(e.weight);
        } else {
            ++result.stats.duplicate_edges;
            if (!dedupe) weights[it->second] += e.weight;
        }
    }
    if (!unknown.empty()) {
        std::sort(unknown.begin(), unknown.end());
        unknown.erase(std::unique(unknown.begin(), unknown.end()), unknown.end());
        std::string msg = "edges reference ids missing from the timestamp table:";
        for (std::size_t t = 0; t < std::min<std::size_t>(unknown.size(), 20); ++t) msg += " " + unknown[t];
        throw InputError(msg);
    }

    const auto n = static_cast<Index>(ids.size());
    std::vector<Index> order(static_cast<std::size_t>(n));
    if (list.times) {
        std::vector<ForwardEdge> forward;
        for (const auto& [a, b] : arcs) {
            const auto ta = times[static_cast<std::size_t>(a)];
            const auto tb = times[static_cast<std::size_t>(b)];
            if (tb > ta) forward.push_back({ids[static_cast<std::size_t>(a)], ids[static_cast<std::size_t>(b)], ta, tb});
        }
        if (!forward.empty()) throw ForwardEdgeError(std::move(forward));
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
            return times[static_cast<std::size_t>(x)] > times[static_cast<std::size_t>(y)];
        });
    } else {
        order = detail::topological_order(n, arcs);
    }

    std::vector<Index> rank(static_cast<std::size_t>(n));
    std::vector<std::string> ordered_ids(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r) {
        rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;
        ordered_ids[static_cast<std::size_t>(r)] = ids[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
    }

    std::vector<Cell> cells;
    cells.reserve(arcs.size());
    for (std::size_t t = 0; t < arcs.size(); ++t) {
        const Index i = rank[static_cast<std::size_t>(arcs[t].first)];
        const Index j = rank[static_cast<std::size_t>(arcs[t].second)];
        if (i > j) ++result.stats.lower_triangle_edges;
        cells.push_back({i, j, weights[t]});
    }
    result.adjacency = PartialAdjacency::from_cells(n, std::move(cells), {}, true, std::move(ordered_ids));
    return result;
}

/// Stored nonzeros as citation records using the external ids, in (row, col) order.
inline std::vector<EdgeRecord> to_edge_records(const PartialAdjacency& a) {
    std::vector<EdgeRecord> out;
    out.reserve(static_cast<std::size_t>(a.nnz()));
    for (const auto& c : a.nonzeros()) out.push_back({a.node_id(c.row), a.node_id(c.col), c.value});
    return out;
}

// ---------------------------------------------------------------------------
// Delimited text I/O

namespace detail {

inline char detect_delimiter(std::string_view line) {
    return line.find('\t') != std::string_view::npos ? '\t' : ',';
}

inline std::vector<std::string> split(std::string_view line, char delim) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        fields.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    for (auto& f : fields) {
        while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
        while (!f.empty() && f.front() == ' ') f.erase(f.begin());
    }
    return fields;
}

inline bool parse_int(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open " + path);
    return in;
}

}  // namespace detail

/// Parse `citing,cited[,weight]` records (comma or tab). A header row naming
/// `citing` in the first column is skipped.
inline std::vector<EdgeRecord> parse_edges(std::istream& in) {
    std::vector<EdgeRecord> out;
    std::string line;
    char delim = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (delim == 0) delim = detail::detect_delimiter(line);
        auto f = detail::split(line, delim);
        if (lineno == 1 && !f.empty() && f[0] == "citing") continue;
        if (f.size() < 2 || f.size() > 3) {
            throw InputError("edge list line " + std::to_string(lineno) + ": expected 2 or 3 fields");
        }
        EdgeRecord e{f[0], f[1], 1.0};
        if (f.size() == 3 && !detail::parse_double(f[2], e.weight)) {
            throw InputError("edge list line " + std::to_string(lineno) + ": bad weight '" + f[2] + "'");
        }
        out.push_back(std::move(e));
    }
    return out;
}

/// Parse an `id,time` table with integer times. A non-integer time in the first row marks a header.
inline std::vector<Timestamp> parse_times(std::istream& in) {
    std::vector<Timestamp> out;
    std::string line;
    char delim = 0;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (delim == 0) delim = detail::detect_delimiter(line);
        auto f = detail::split(line, delim);
        if (f.size() != 2) throw InputError("timestamp line " + std::to_string(lineno) + ": expected 2 fields");
        Timestamp ts{f[0], 0};
        if (!detail::parse_int(f[1], ts.time)) {
            if (lineno == 1) continue;
            throw InputError("timestamp line " + std::to_string(lineno) + ": bad time '" + f[1] + "'");
        }
        out.push_back(std::move(ts));
    }
    return out;
}

inline std::vector<EdgeRecord> read_edges(const std::string& path) {
    auto in = detail::open_input(path);
    return parse_edges(in);
}

inline std::vector<Timestamp> read_times(const std::string& path) {
    auto in = detail::open_input(path);
    return parse_times(in);
}

inline std::string format_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << (v == 0.0 ? 0.0 : v);
    return os.str();
}

inline void write_edges(std::ostream& out, const std::vector<EdgeRecord>& edges) {
    out << "citing,cited,weight\n";
    for (const auto& e : edges) out << e.citing << ',' << e.cited << ',' << format_number(e.weight) << '\n';
}

/// Sidecar metadata written next to an exported edge list.
inline nlohmann::json sidecar_json(const PartialAdjacency& a) {
    nlohmann::json order = nlohmann::json::array();
    for (Index i = 0; i < a.size(); ++i) order.push_back(a.node_id(i));
    return {{"n", a.size()},
            {"nnz", a.nnz()},
            {"clipped_cols", a.clipped_cols()},
            {"clipped_rows", a.clipped_rows()},
            {"order", std::move(order)}};
}

}  // namespace cofactor
