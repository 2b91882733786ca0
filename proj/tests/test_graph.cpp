#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "test_helpers.hpp"
#include "tgnn/graph.hpp"

using namespace tgnn;
namespace fs = std::filesystem;

namespace {

Matrix ones_features(std::size_t n, std::size_t feat = 2) { return Matrix(n, feat, 1.0); }

std::vector<NodeId> to_vec(std::span<const NodeId> s) { return {s.begin(), s.end()}; }

struct TempDir {
    fs::path path;
    TempDir() {
        const auto tick = static_cast<std::uint64_t>(
            std::chrono::steady_clock::now().time_since_epoch().count());
        path = fs::temp_directory_path() / ("tgnn_test_" + std::to_string(Rng(tick).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("build_graph adds self loops to isolated nodes") {
    const Graph g = build_graph({}, ones_features(3), {0, 1, 0});
    CHECK(g.n == 3);
    for (NodeId v = 0; v < 3; ++v) CHECK(to_vec(g.neighbors(v)) == std::vector<NodeId>{v});
    CHECK(g.num_classes == 2);
}

TEST_CASE("build_graph symmetrizes and deduplicates") {
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}};
    const Graph g = build_graph(edges, ones_features(2), {0, 1});
    CHECK(to_vec(g.neighbors(0)) == std::vector<NodeId>{0, 1});
    CHECK(to_vec(g.neighbors(1)) == std::vector<NodeId>{0, 1});

    const std::vector<std::pair<NodeId, NodeId>> dup{{0, 1}, {1, 0}};
    const Graph g2 = build_graph(dup, ones_features(2), {0, 1});
    CHECK(g2.targets == g.targets);
    CHECK(g2.offsets == g.offsets);
}

TEST_CASE("build_graph validates ids") {
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 5}};
    CHECK_THROWS_AS(build_graph(edges, ones_features(2), {0, 1}), std::invalid_argument);
}

TEST_CASE("build_graph invariants on a random graph") {
    Rng rng(61);
    const std::size_t n = 40;
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int e = 0; e < 100; ++e)
        edges.emplace_back(static_cast<NodeId>(rng.uniform_index(n)),
                           static_cast<NodeId>(rng.uniform_index(n)));
    const Graph g = build_graph(edges, ones_features(n), std::vector<int>(n, 0));
    for (NodeId v = 0; v < n; ++v) {
        const auto nb = g.neighbors(v);
        CHECK(std::binary_search(nb.begin(), nb.end(), v));  // self loop
        CHECK(std::is_sorted(nb.begin(), nb.end()));
        CHECK(std::adjacent_find(nb.begin(), nb.end()) == nb.end());  // no duplicates
        for (NodeId u : nb) {  // symmetry
            const auto back = g.neighbors(u);
            CHECK(std::binary_search(back.begin(), back.end(), v));
        }
    }
}

TEST_CASE("sample_neighbors: small degree returns the full neighborhood") {
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {0, 2}, {0, 3}};
    const Graph g = build_graph(edges, ones_features(4), {0, 0, 0, 0});
    const auto s = sample_neighbors(g, 0, 5, 123);
    CHECK(s.center == 0);
    CHECK(s.members == std::vector<NodeId>{0, 1, 2, 3});
}

TEST_CASE("sample_neighbors: s=0 keeps only the center") {
    const std::vector<std::pair<NodeId, NodeId>> edges{{0, 1}, {0, 2}};
    const Graph g = build_graph(edges, ones_features(3), {0, 0, 0});
    const auto s = sample_neighbors(g, 0, 0, 7);
    CHECK(s.members == std::vector<NodeId>{0});
}

TEST_CASE("sample_neighbors is deterministic and well-formed at high degree") {
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u = 1; u <= 10; ++u) edges.emplace_back(0, u);
    const Graph g = build_graph(edges, ones_features(11), std::vector<int>(11, 0));

    const auto a = sample_neighbors(g, 0, 5, 99, 3);
    const auto b = sample_neighbors(g, 0, 5, 99, 3);
    CHECK(a.members == b.members);
    CHECK(a.members.size() == 6);
    CHECK(std::binary_search(a.members.begin(), a.members.end(), NodeId{0}));
    for (NodeId u : a.members) CHECK(u <= 10);

    // different epoch or seed keys give an independent draw (usually different)
    const auto c = sample_neighbors(g, 0, 5, 99, 4);
    const auto d = sample_neighbors(g, 0, 5, 100, 3);
    CHECK((a.members != c.members || a.members != d.members));
}

TEST_CASE("random_split: exact sizes on 10 labeled nodes") {
    const Graph g = build_graph({}, ones_features(10), std::vector<int>(10, 0));
    const Masks m = random_split(g, {0.6, 0.2, 0.2}, 5);
    CHECK(std::count(m.train.begin(), m.train.end(), 1) == 6);
    CHECK(std::count(m.val.begin(), m.val.end(), 1) == 2);
    CHECK(std::count(m.test.begin(), m.test.end(), 1) == 2);
}

TEST_CASE("random_split: n=2708 gives 1625/541/542") {
    const Graph g = build_graph({}, ones_features(2708, 1), std::vector<int>(2708, 0));
    const Masks m = random_split(g, {0.6, 0.2, 0.2}, 1);
    CHECK(std::count(m.train.begin(), m.train.end(), 1) == 1625);
    CHECK(std::count(m.val.begin(), m.val.end(), 1) == 541);
    CHECK(std::count(m.test.begin(), m.test.end(), 1) == 542);
}

TEST_CASE("random_split: deterministic, disjoint, covers labeled nodes only") {
    Rng rng(63);
    std::vector<int> labels(50);
    for (auto& l : labels) l = rng.uniform_index(4) == 0 ? -1 : static_cast<int>(rng.uniform_index(3));
    const Graph g = build_graph({}, ones_features(50), labels);
    const Masks a = random_split(g, {0.6, 0.2, 0.2}, 17);
    const Masks b = random_split(g, {0.6, 0.2, 0.2}, 17);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    for (std::size_t v = 0; v < 50; ++v) {
        const int total = a.train[v] + a.val[v] + a.test[v];
        CHECK(total == (labels[v] >= 0 ? 1 : 0));
    }
    CHECK_THROWS_AS(random_split(g, {0.5, 0.2, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("load_cora_content on a toy fixture") {
    TempDir tmp;
    {
        std::ofstream content(tmp.path / "toy.content");
        content << "paperA 1 0 1 genetics\n";
        content << "paperB 0 1 1 theory\n";
        content << "paperC 1 1 0 genetics\n";
        std::ofstream cites(tmp.path / "toy.cites");
        cites << "paperA paperB\n";
        cites << "paperC paperA\n";
        cites << "paperX paperA\n";  // unknown id, must be dropped
    }
    const LoadedGraph loaded = load_cora_content((tmp.path / "toy.content").string(),
                                                 (tmp.path / "toy.cites").string());
    const Graph& g = loaded.graph;
    CHECK(g.n == 3);
    CHECK(g.feature_dim() == 3);
    CHECK(g.num_classes == 2);
    CHECK(loaded.skipped_edges == 1);
    CHECK(g.labels == std::vector<int>{0, 1, 0});  // first-seen class order
    CHECK(to_vec(g.neighbors(0)) == std::vector<NodeId>{0, 1, 2});
    // L1 row normalization
    CHECK(g.features(0, 0) == doctest::Approx(0.5));
    CHECK(g.features(0, 2) == doctest::Approx(0.5));

    CHECK_THROWS(load_cora_content((tmp.path / "missing.content").string(),
                                   (tmp.path / "toy.cites").string()));
}

TEST_CASE("load_cora_content rejects malformed rows") {
    TempDir tmp;
    {
        std::ofstream content(tmp.path / "bad.content");
        content << "paperA 1 0 1 genetics\n";
        content << "paperB 0 1 theory\n";  // ragged
        std::ofstream cites(tmp.path / "bad.cites");
        cites << "paperA paperB\n";
    }
    CHECK_THROWS(load_cora_content((tmp.path / "bad.content").string(),
                                   (tmp.path / "bad.cites").string()));
}

TEST_CASE("generic format round trip") {
    const Graph g = make_separable(24, 77);
    TempDir tmp;
    save_generic((tmp.path / "ds").string(), g);
    const Graph h = load_generic((tmp.path / "ds").string()).graph;
    CHECK(h.n == g.n);
    CHECK(h.offsets == g.offsets);
    CHECK(h.targets == g.targets);
    CHECK(h.labels == g.labels);

    // the loader L1-normalizes; that aside, feature values round-trip bit-exactly
    Matrix expected = g.features;
    l1_row_normalize(expected);
    REQUIRE(h.features.a.size() == expected.a.size());
    for (std::size_t i = 0; i < h.features.a.size(); ++i)
        CHECK(h.features.a[i] == expected.a[i]);
}

TEST_CASE("splits.json is honored by the generic loader") {
    const Graph g = make_separable(12, 78);
    TempDir tmp;
    const std::string dir = (tmp.path / "ds").string();
    save_generic(dir, g);
    std::ofstream(dir + "/splits.json") << R"({"train":[0,1,2],"val":[3,4],"test":[5,6]})";
    const Graph h = load_generic(dir).graph;
    CHECK(std::count(h.masks.train.begin(), h.masks.train.end(), 1) == 3);
    CHECK(std::count(h.masks.val.begin(), h.masks.val.end(), 1) == 2);
    CHECK(std::count(h.masks.test.begin(), h.masks.test.end(), 1) == 2);
}

TEST_CASE("make_parity: balanced labels and exact equal-sum collisions") {
    const Graph g = make_parity(300, 5);
    CHECK(g.n == 300);
    std::size_t pos = 0, labeled = 0;
    for (std::size_t v = 0; v < g.n; ++v) {
        if (g.labels[v] < 0) continue;
        ++labeled;
        pos += static_cast<std::size_t>(g.labels[v]);
    }
    CHECK(labeled == 100);
    const double balance = static_cast<double>(pos) / static_cast<double>(labeled);
    CHECK(balance >= 0.45);
    CHECK(balance <= 0.55);

    // every labeled center's 1-hop feature sum is exactly zero
    for (std::size_t v = 0; v < g.n; ++v) {
        if (g.labels[v] < 0) continue;
        Vector sum(2, 0.0);
        for (NodeId u : g.neighbors(static_cast<NodeId>(v)))
            for (std::size_t f = 0; f < 2; ++f) sum[f] += g.features(u, f);
        CHECK(sum[0] == 0.0);
        CHECK(sum[1] == 0.0);
    }
}

TEST_CASE("make_separable: clusters are sign-separated") {
    const Graph g = make_separable(100, 6);
    for (std::size_t v = 0; v < g.n; ++v) {
        double mean = 0.0;
        for (std::size_t f = 0; f < g.feature_dim(); ++f) mean += g.features(v, f);
        CHECK((g.labels[v] == 0 ? mean > 0 : mean < 0));
    }
}
