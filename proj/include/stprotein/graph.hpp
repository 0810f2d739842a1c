#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "stprotein/csv.hpp"
#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {

enum class GraphKind { knn, spatial_radius };

inline std::string to_string(GraphKind k) {
    return k == GraphKind::knn ? "knn" : "spatial_radius";
}

inline GraphKind graph_kind_from_string(const std::string& s) {
    if (s == "knn") return GraphKind::knn;
    if (s == "spatial" || s == "spatial_radius") return GraphKind::spatial_radius;
    throw ConfigError("unknown graph kind '" + s + "' (expected knn or spatial)");
}

/// Directed edge list over spots. Edges are (src, dst) pairs, deduplicated and
/// sorted lexicographically; self-loops (i,i) are always present so every node
/// has at least one in-neighbor.
struct FeatureGraph {
    std::size_t n_nodes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    GraphKind kind = GraphKind::knn;
    double param = 0.0; // k for knn, r for spatial_radius
};

/// In-neighbor lists in CSR form: node i's in-neighbors are
/// indices[offsets[i] .. offsets[i+1]), sorted ascending.
struct NeighborLists {
    std::vector<std::size_t> offsets; // length n_nodes + 1
    std::vector<std::size_t> indices; // length |edges|
};

namespace detail {

inline void finalize_edges(FeatureGraph& g) {
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
}

} // namespace detail

/// Exact k-nearest-neighbor graph over row vectors of `embedding`: for each
/// node i, directed edges (j, i) from its k nearest other nodes j by Euclidean
/// distance (ties to the smaller index), plus self-loops.
inline FeatureGraph build_knn_graph(const Matrix& embedding, std::size_t k = 3) {
    const auto n = static_cast<std::size_t>(embedding.rows());
    if (k >= n)
        throw KTooLarge("build_knn_graph: k=" + std::to_string(k) + " needs at least k+1=" +
                        std::to_string(k + 1) + " spots, have " + std::to_string(n));
    if (!embedding.allFinite()) throw ParseError("build_knn_graph: non-finite embedding");

    FeatureGraph g;
    g.n_nodes = n;
    g.kind = GraphKind::knn;
    g.param = static_cast<double>(k);
    g.edges.reserve(n * (k + 1));

    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            dist[j] = {(embedding.row(static_cast<Eigen::Index>(i)) -
                        embedding.row(static_cast<Eigen::Index>(j)))
                           .squaredNorm(),
                       j};
        dist[i].first = std::numeric_limits<double>::infinity(); // exclude self
        // (distance, index) pairs order ties by ascending index.
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        for (std::size_t m = 0; m < k; ++m) g.edges.emplace_back(dist[m].second, i);
        g.edges.emplace_back(i, i);
    }
    detail::finalize_edges(g);
    return g;
}

/// Spatial radius graph: undirected edge {i,j} iff Euclidean distance < r
/// (strict), stored as both ordered pairs, plus self-loops.
inline FeatureGraph build_spatial_graph(const Matrix& coords, double r = 2.0) {
    if (r < 0.0) throw ConfigError("build_spatial_graph: radius must be >= 0");
    const auto n = static_cast<std::size_t>(coords.rows());
    FeatureGraph g;
    g.n_nodes = n;
    g.kind = GraphKind::spatial_radius;
    g.param = r;
    const double r2 = r * r;
    for (std::size_t i = 0; i < n; ++i) {
        g.edges.emplace_back(i, i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = (coords.row(static_cast<Eigen::Index>(i)) -
                               coords.row(static_cast<Eigen::Index>(j)))
                                  .squaredNorm();
            if (d2 < r2) {
                g.edges.emplace_back(i, j);
                g.edges.emplace_back(j, i);
            }
        }
    }
    detail::finalize_edges(g);
    return g;
}

/// CSR in-neighbor lists: node i's list is the sorted set {j : (j,i) in edges}.
inline NeighborLists neighbor_lists(const FeatureGraph& g) {
    NeighborLists nl;
    nl.offsets.assign(g.n_nodes + 1, 0);
    for (const auto& [src, dst] : g.edges) {
        if (src >= g.n_nodes || dst >= g.n_nodes)
            throw ShapeMismatch("neighbor_lists: edge endpoint out of range");
        ++nl.offsets[dst + 1];
    }
    for (std::size_t i = 0; i < g.n_nodes; ++i) nl.offsets[i + 1] += nl.offsets[i];
    nl.indices.resize(g.edges.size());
    std::vector<std::size_t> cursor(nl.offsets.begin(), nl.offsets.end() - 1);
    // Edges are sorted by (src, dst), so each dst receives srcs in ascending order.
    for (const auto& [src, dst] : g.edges) nl.indices[cursor[dst]++] = src;
    return nl;
}

/// Edge-list CSV `src,dst`, one row per directed edge.
inline void save_graph_csv(const std::string& path, const FeatureGraph& g) {
    std::string out = "src,dst\n";
    for (const auto& [src, dst] : g.edges)
        out += std::to_string(src) + "," + std::to_string(dst) + "\n";
    csv::write_file_atomic(path, out);
}

} // namespace stprotein
