#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>
#include <set>
#include <vector>

#include "stprotein/graph.hpp"

#include "test_util.hpp"

using namespace stprotein;
using Edge = std::pair<std::size_t, std::size_t>;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

/// Independent k-nearest oracle: full sort over (squared distance, index) with
/// the self row skipped explicitly.
std::vector<std::size_t> knn_of(const Matrix& emb, std::size_t i, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < static_cast<std::size_t>(emb.rows()); ++j) {
        if (j == i) continue;
        d.emplace_back((emb.row(static_cast<Eigen::Index>(i)) - emb.row(static_cast<Eigen::Index>(j)))
                           .squaredNorm(),
                       j);
    }
    std::sort(d.begin(), d.end());
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < k; ++m) out.push_back(d[m].second);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

TEST_CASE("knn graph on a line of four points") {
    Matrix emb(4, 1);
    emb << 0, 1, 3, 7;
    auto g = build_knn_graph(emb, 1);
    const std::vector<Edge> expected{{0, 0}, {0, 1}, {1, 0}, {1, 1},
                                     {1, 2}, {2, 2}, {2, 3}, {3, 3}};
    CHECK(g.edges == expected);
    CHECK(g.n_nodes == 4);
    CHECK(g.kind == GraphKind::knn);
    CHECK(g.param == 1.0);
}

TEST_CASE("knn distance ties resolve to the smaller index") {
    Matrix emb(3, 1);
    emb << 0, 1, -1; // nodes 1 and 2 are both at distance 1 from node 0
    auto g = build_knn_graph(emb, 1);
    CHECK(std::count(g.edges.begin(), g.edges.end(), Edge{1, 0}) == 1);
    CHECK(std::count(g.edges.begin(), g.edges.end(), Edge{2, 0}) == 0);
}

TEST_CASE("knn with k = n-1 is the complete digraph plus self-loops") {
    Rng rng(3);
    Matrix emb = random_matrix(5, 2, rng);
    auto g = build_knn_graph(emb, 4);
    CHECK(g.edges.size() == 25);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t d = 0; d < 5; ++d)
            CHECK(std::count(g.edges.begin(), g.edges.end(), Edge{s, d}) == 1);
}

TEST_CASE("knn rejects k at or beyond the node count") {
    Rng rng(3);
    Matrix emb = random_matrix(4, 2, rng);
    CHECK_THROWS_AS(build_knn_graph(emb, 4), KTooLarge);
    CHECK_THROWS_AS(build_knn_graph(emb, 10), KTooLarge);
    CHECK_NOTHROW(build_knn_graph(emb, 3));
}

TEST_CASE("spatial graph keeps strictly-closer-than-r pairs, both directions") {
    Matrix coords(3, 2);
    coords << 0, 0, 1, 0, 5, 0;
    auto g = build_spatial_graph(coords, 2.0);
    const std::vector<Edge> expected{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {2, 2}};
    CHECK(g.edges == expected);
    CHECK(g.kind == GraphKind::spatial_radius);
    CHECK(g.param == 2.0);
}

TEST_CASE("spatial graph comparison is strict") {
    Matrix coords(2, 2);
    coords << 0, 0, 2, 0; // distance exactly r
    auto g = build_spatial_graph(coords, 2.0);
    const std::vector<Edge> expected{{0, 0}, {1, 1}};
    CHECK(g.edges == expected);
}

TEST_CASE("spatial graph with r = 0 is self-loops only") {
    Rng rng(9);
    Matrix coords = random_matrix(6, 2, rng);
    auto g = build_spatial_graph(coords, 0.0);
    REQUIRE(g.edges.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(g.edges[i] == Edge{i, i});
}

TEST_CASE("neighbor lists are CSR in-neighbors, ascending per node") {
    Rng rng(11);
    Matrix emb = random_matrix(20, 3, rng);
    auto g = build_knn_graph(emb, 3);
    auto nl = neighbor_lists(g);

    REQUIRE(nl.offsets.size() == 21);
    CHECK(nl.offsets.front() == 0);
    CHECK(nl.offsets.back() == g.edges.size());
    CHECK(nl.indices.size() == g.edges.size());

    std::set<Edge> edge_set(g.edges.begin(), g.edges.end());
    std::set<Edge> csr_set;
    for (std::size_t i = 0; i < 20; ++i) {
        // In-degree is exactly k+1: k neighbors plus the self-loop.
        CHECK(nl.offsets[i + 1] - nl.offsets[i] == 4);
        for (std::size_t e = nl.offsets[i]; e < nl.offsets[i + 1]; ++e) {
            csr_set.emplace(nl.indices[e], i);
            if (e + 1 < nl.offsets[i + 1]) CHECK(nl.indices[e] < nl.indices[e + 1]);
        }
    }
    CHECK(csr_set == edge_set);
}

TEST_CASE("knn graph is equivariant under node permutation") {
    Rng rng(17);
    const std::size_t n = 30;
    Matrix emb = random_matrix(static_cast<Eigen::Index>(n), 4, rng);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

    Matrix permuted(emb.rows(), emb.cols());
    for (std::size_t i = 0; i < n; ++i)
        permuted.row(static_cast<Eigen::Index>(perm[i])) = emb.row(static_cast<Eigen::Index>(i));

    auto g = build_knn_graph(emb, 3);
    auto gp = build_knn_graph(permuted, 3);

    std::vector<Edge> mapped;
    for (const auto& [s, d] : g.edges) mapped.emplace_back(perm[s], perm[d]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == gp.edges);
}

TEST_CASE("knn matches the independent oracle on random instances") {
    Rng rng(2025);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 10 + rng.below(191);       // up to 200
        const Eigen::Index dim = 1 + static_cast<Eigen::Index>(rng.below(10));
        const std::size_t k = std::vector<std::size_t>{1, 3, 5}[rng.below(3)];
        Matrix emb = random_matrix(static_cast<Eigen::Index>(n), dim, rng);
        auto g = build_knn_graph(emb, k);
        auto nl = neighbor_lists(g);
        bool all_match = true;
        for (std::size_t i = 0; i < n && all_match; ++i) {
            std::vector<std::size_t> got;
            for (std::size_t e = nl.offsets[i]; e < nl.offsets[i + 1]; ++e)
                if (nl.indices[e] != i) got.push_back(nl.indices[e]);
            all_match = got == knn_of(emb, i, k);
        }
        CHECK(all_match);
    }
}

TEST_CASE("graph csv export") {
    test_util::TempDir dir;
    Matrix coords(3, 2);
    coords << 0, 0, 1, 0, 5, 0;
    auto g = build_spatial_graph(coords, 2.0);
    const auto path = dir.file("graph.csv");
    save_graph_csv(path, g);
    CHECK(test_util::read_text(path) == "src,dst\n0,0\n0,1\n1,0\n1,1\n2,2\n");
}
