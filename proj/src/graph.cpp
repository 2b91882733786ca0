#include "tgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace tgnn {

Graph build_graph(std::span<const std::pair<NodeId, NodeId>> edges, Matrix features,
                  std::vector<int> labels, Masks masks) {
    const std::size_t n = features.rows;
    if (labels.empty()) labels.assign(n, -1);
    if (labels.size() != n) throw std::invalid_argument("build_graph: label count mismatch");
    if (!masks.empty() &&
        (masks.train.size() != n || masks.val.size() != n || masks.test.size() != n))
        throw std::invalid_argument("build_graph: mask length mismatch");

    std::vector<std::vector<NodeId>> adj(n);
    for (std::size_t v = 0; v < n; ++v) adj[v].push_back(static_cast<NodeId>(v));
    for (const auto& [u, v] : edges) {
        if (u >= n || v >= n) throw std::invalid_argument("build_graph: edge id out of range");
        adj[u].push_back(v);
        adj[v].push_back(u);
    }

    Graph g;
    g.n = n;
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.masks = std::move(masks);
    g.offsets.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
        auto& lst = adj[v];
        std::sort(lst.begin(), lst.end());
        lst.erase(std::unique(lst.begin(), lst.end()), lst.end());
        g.offsets[v + 1] = g.offsets[v] + lst.size();
    }
    g.targets.reserve(g.offsets[n]);
    for (const auto& lst : adj) g.targets.insert(g.targets.end(), lst.begin(), lst.end());

    int max_label = -1;
    for (int label : g.labels) max_label = std::max(max_label, label);
    g.num_classes = static_cast<std::size_t>(max_label + 1);
    return g;
}

SampledNeighborhood sample_neighbors(const Graph& g, NodeId v, std::size_t s, std::uint64_t seed,
                                     std::uint64_t epoch) {
    if (v >= g.n) throw std::invalid_argument("sample_neighbors: node out of range");
    const auto nbrs = g.neighbors(v);

    SampledNeighborhood out;
    out.center = v;
    std::vector<NodeId> others;
    others.reserve(nbrs.size());
    for (NodeId u : nbrs)
        if (u != v) others.push_back(u);

    if (others.size() <= s) {
        out.members.assign(nbrs.begin(), nbrs.end());
        return out;
    }

    Rng rng = Rng(seed).fork({epoch, v});
    for (std::size_t i = 0; i < s; ++i) {  // partial Fisher-Yates
        const std::size_t j = i + rng.uniform_index(others.size() - i);
        std::swap(others[i], others[j]);
    }
    out.members.assign(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(s));
    out.members.push_back(v);
    std::sort(out.members.begin(), out.members.end());
    return out;
}

std::vector<SampledNeighborhood> sample_all_neighbors(const Graph& g, std::size_t s,
                                                      std::uint64_t seed, std::uint64_t epoch) {
    std::vector<SampledNeighborhood> out;
    out.reserve(g.n);
    for (std::size_t v = 0; v < g.n; ++v)
        out.push_back(sample_neighbors(g, static_cast<NodeId>(v), s, seed, epoch));
    return out;
}

Masks random_split(const Graph& g, std::array<double, 3> fractions, std::uint64_t seed) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f < 0.0 || f > 1.0) throw std::invalid_argument("random_split: degenerate fractions");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("random_split: fractions must sum to 1");

    std::vector<NodeId> labeled;
    for (std::size_t v = 0; v < g.n; ++v)
        if (g.labels[v] >= 0) labeled.push_back(static_cast<NodeId>(v));

    Rng rng(seed);
    for (std::size_t i = labeled.size(); i > 1; --i)
        std::swap(labeled[i - 1], labeled[rng.uniform_index(i)]);

    // Largest-remainder apportionment; leftover seats (and ties) go to the
    // later buckets, i.e. to test first.
    const std::size_t total = labeled.size();
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t b = 0; b < 3; ++b) {
        const double quota = static_cast<double>(total) * fractions[b];
        sizes[b] = static_cast<std::size_t>(quota);
        remainder[b] = quota - static_cast<double>(sizes[b]);
        assigned += sizes[b];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        return a > b;
    });
    for (std::size_t leftover = total - assigned, i = 0; leftover > 0; --leftover, ++i)
        ++sizes[order[i % 3]];

    Masks m;
    m.train.assign(g.n, 0);
    m.val.assign(g.n, 0);
    m.test.assign(g.n, 0);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < sizes[0]; ++i) m.train[labeled[pos++]] = 1;
    for (std::size_t i = 0; i < sizes[1]; ++i) m.val[labeled[pos++]] = 1;
    for (std::size_t i = 0; i < sizes[2]; ++i) m.test[labeled[pos++]] = 1;
    return m;
}

void l1_row_normalize(Matrix& features) {
    for (std::size_t i = 0; i < features.rows; ++i) {
        double norm = 0.0;
        auto row = features.row(i);
        for (double v : row) norm += std::abs(v);
        if (norm == 0.0) continue;
        for (double& v : row) v /= norm;
    }
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

LoadedGraph load_cora_content(const std::string& content_path, const std::string& cites_path) {
    std::ifstream content(content_path);
    if (!content) throw std::runtime_error("cannot open " + content_path);

    std::unordered_map<std::string, NodeId> id_of;
    std::unordered_map<std::string, int> class_of;
    std::vector<Vector> rows;
    std::vector<int> labels;

    std::string line;
    std::size_t feat_dim = 0;
    while (std::getline(content, line)) {
        const auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks.size() < 3)
            throw std::runtime_error("malformed content row in " + content_path);
        if (feat_dim == 0) feat_dim = toks.size() - 2;
        if (toks.size() != feat_dim + 2)
            throw std::runtime_error("ragged content row in " + content_path);

        id_of.emplace(toks.front(), static_cast<NodeId>(rows.size()));
        Vector feats(feat_dim);
        for (std::size_t j = 0; j < feat_dim; ++j) {
            try {
                feats[j] = std::stod(toks[j + 1]);
            } catch (const std::exception&) {
                throw std::runtime_error("malformed feature value in " + content_path);
            }
        }
        rows.push_back(std::move(feats));
        const auto [it, inserted] =
            class_of.emplace(toks.back(), static_cast<int>(class_of.size()));
        labels.push_back(it->second);
    }
    if (rows.empty()) throw std::runtime_error("empty content file " + content_path);

    Matrix features(rows.size(), feat_dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), features.row(i).begin());
    l1_row_normalize(features);

    std::ifstream cites(cites_path);
    if (!cites) throw std::runtime_error("cannot open " + cites_path);
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::size_t skipped = 0;
    while (std::getline(cites, line)) {
        const auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks.size() != 2) throw std::runtime_error("malformed cites row in " + cites_path);
        const auto a = id_of.find(toks[0]);
        const auto b = id_of.find(toks[1]);
        if (a == id_of.end() || b == id_of.end()) {
            ++skipped;
            continue;
        }
        edges.emplace_back(a->second, b->second);
    }

    LoadedGraph out;
    out.graph = build_graph(edges, std::move(features), std::move(labels));
    out.skipped_edges = skipped;
    return out;
}

LoadedGraph load_generic(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path base(dir);

    std::ifstream feat_file(base / "features.csv");
    if (!feat_file) throw std::runtime_error("cannot open " + (base / "features.csv").string());
    std::vector<Vector> rows;
    std::string line;
    std::size_t feat_dim = 0;
    while (std::getline(feat_file, line)) {
        if (line.empty()) continue;
        Vector row;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (feat_dim == 0) feat_dim = row.size();
        if (row.size() != feat_dim) throw std::runtime_error("ragged features.csv row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty features.csv");
    Matrix features(rows.size(), feat_dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), features.row(i).begin());
    l1_row_normalize(features);

    std::vector<int> labels;
    std::ifstream label_file(base / "labels.csv");
    if (!label_file) throw std::runtime_error("cannot open " + (base / "labels.csv").string());
    while (std::getline(label_file, line)) {
        if (line.empty()) continue;
        labels.push_back(std::stoi(line));
    }

    std::vector<std::pair<NodeId, NodeId>> edges;
    std::ifstream edge_file(base / "edges.tsv");
    if (!edge_file) throw std::runtime_error("cannot open " + (base / "edges.tsv").string());
    while (std::getline(edge_file, line)) {
        const auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks.size() != 2) throw std::runtime_error("malformed edges.tsv row");
        edges.emplace_back(static_cast<NodeId>(std::stoul(toks[0])),
                           static_cast<NodeId>(std::stoul(toks[1])));
    }

    Masks masks;
    if (fs::exists(base / "splits.json")) {
        std::ifstream split_file(base / "splits.json");
        nlohmann::json j;
        split_file >> j;
        masks.train.assign(rows.size(), 0);
        masks.val.assign(rows.size(), 0);
        masks.test.assign(rows.size(), 0);
        for (const auto& v : j.at("train")) masks.train.at(v.get<std::size_t>()) = 1;
        for (const auto& v : j.at("val")) masks.val.at(v.get<std::size_t>()) = 1;
        for (const auto& v : j.at("test")) masks.test.at(v.get<std::size_t>()) = 1;
    }

    LoadedGraph out;
    out.graph = build_graph(edges, std::move(features), std::move(labels), std::move(masks));
    return out;
}

void save_generic(const std::string& dir, const Graph& g) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    fs::create_directories(base);

    std::ofstream edge_file(base / "edges.tsv");
    for (std::size_t v = 0; v < g.n; ++v)
        for (NodeId u : g.neighbors(static_cast<NodeId>(v)))
            if (u > v) edge_file << v << '\t' << u << '\n';

    std::ofstream feat_file(base / "features.csv");
    feat_file.precision(17);
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto row = g.features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j)
            feat_file << row[j] << (j + 1 < row.size() ? "," : "");
        feat_file << '\n';
    }

    std::ofstream label_file(base / "labels.csv");
    for (int label : g.labels) label_file << label << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

Graph make_separable(std::size_t n, std::uint64_t seed, std::size_t feature_dim) {
    if (n < 2) throw std::invalid_argument("make_separable: need at least 2 nodes");
    Rng rng(seed);
    Matrix features(n, feature_dim);
    std::vector<int> labels(n);
    for (std::size_t v = 0; v < n; ++v) {
        const int y = static_cast<int>(v % 2);
        labels[v] = y;
        const double mean = y == 0 ? 1.5 : -1.5;
        for (std::size_t f = 0; f < feature_dim; ++f)
            features(v, f) = mean + 0.4 * rng.normal();
    }
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t v = 0; v < n; ++v) {
        for (int e = 0; e < 2; ++e) {
            const NodeId u = static_cast<NodeId>(rng.uniform_index(n));
            if (u != v) edges.emplace_back(static_cast<NodeId>(v), u);
        }
    }
    return build_graph(edges, std::move(features), std::move(labels));
}

Graph make_parity(std::size_t n, std::uint64_t seed) {
    if (n < 3) throw std::invalid_argument("make_parity: need at least 3 nodes");
    Rng rng(seed);
    const std::size_t gadgets = n / 3;
    Matrix features(n, 2);
    std::vector<int> labels(n, -1);
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (std::size_t i = 0; i < gadgets; ++i) {
        const NodeId center = static_cast<NodeId>(3 * i);
        const NodeId leaf1 = center + 1;
        const NodeId leaf2 = center + 2;
        const double s = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const double cls = (i % 2 == 0) ? 1.0 : -1.0;  // balanced by construction
        features(leaf1, 0) = s;
        features(leaf1, 1) = cls * s;
        features(leaf2, 0) = -s;
        features(leaf2, 1) = -cls * s;
        labels[center] = cls > 0 ? 1 : 0;
        edges.emplace_back(center, leaf1);
        edges.emplace_back(center, leaf2);
    }
    return build_graph(edges, std::move(features), std::move(labels));
}

}  // namespace tgnn
