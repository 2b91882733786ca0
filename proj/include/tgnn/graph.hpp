#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tgnn/matrix.hpp"

namespace tgnn {

using NodeId = std::uint32_t;

struct Masks {
    std::vector<std::uint8_t> train;
    std::vector<std::uint8_t> val;
    std::vector<std::uint8_t> test;

    bool empty() const { return train.empty(); }
};

/// Immutable undirected graph in CSR form. Every node's adjacency list
/// contains the node itself; lists are sorted ascending and deduplicated.
struct Graph {
    std::size_t n = 0;
    std::vector<std::size_t> offsets;  // length n+1
    std::vector<NodeId> targets;
    Matrix features;          // n x F
    std::vector<int> labels;  // -1 = unlabeled
    Masks masks;
    std::size_t num_classes = 0;

    std::span<const NodeId> neighbors(NodeId v) const {
        return {targets.data() + offsets[v], offsets[v + 1] - offsets[v]};
    }
    std::size_t feature_dim() const { return features.cols; }
};

struct SampledNeighborhood {
    NodeId center = 0;
    std::vector<NodeId> members;  // sorted ascending, always contains center
};

/// Build the CSR graph: edges are symmetrized, deduplicated, and self-loops
/// added for every node. Node ids must be dense in [0, n) where n is the
/// feature row count.
Graph build_graph(std::span<const std::pair<NodeId, NodeId>> edges, Matrix features,
                  std::vector<int> labels, Masks masks = {});

/// Draw up to `s` non-self neighbors of v uniformly without replacement,
/// deterministically keyed by (seed, epoch, v). The center is always a member.
SampledNeighborhood sample_neighbors(const Graph& g, NodeId v, std::size_t s, std::uint64_t seed,
                                     std::uint64_t epoch = 0);

std::vector<SampledNeighborhood> sample_all_neighbors(const Graph& g, std::size_t s,
                                                      std::uint64_t seed, std::uint64_t epoch = 0);

/// Disjoint train/val/test masks over the labeled nodes. Sizes follow
/// largest-remainder apportionment of the fractions (leftovers and ties go
/// to the test bucket); deterministic per seed.
Masks random_split(const Graph& g, std::array<double, 3> fractions, std::uint64_t seed);

/// Divide each feature row by its L1 norm (rows with norm 0 left unchanged).
void l1_row_normalize(Matrix& features);

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

struct LoadedGraph {
    Graph graph;
    std::size_t skipped_edges = 0;  // edge rows referencing unknown ids
};

/// Classic citation format: content rows are
///   <paper_id> <flag_1> ... <flag_F> <class_label>
/// and cites rows are <cited_id> <citing_id>. String ids are mapped to dense
/// indices in first-seen order; unknown ids in the cites file are dropped and
/// counted. Features are L1 row-normalized.
LoadedGraph load_cora_content(const std::string& content_path, const std::string& cites_path);

/// Generic directory format: edges.tsv (two integer columns), features.csv
/// (one row of comma-separated floats per node), labels.csv (one integer per
/// row, -1 = unlabeled), optional splits.json with "train"/"val"/"test" index
/// arrays. Features are L1 row-normalized.
LoadedGraph load_generic(const std::string& dir);

/// Write a graph in the generic directory format (splits omitted).
void save_generic(const std::string& dir, const Graph& g);

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

/// Two Gaussian feature clusters (one per class) on a random graph whose
/// edges are label-independent.
Graph make_separable(std::size_t n, std::uint64_t seed, std::size_t feature_dim = 4);

/// Multiplicative fixture: labeled centers with two leaf neighbors carrying
/// features (s, sigma*s) and (-s, -sigma*s); label = [sigma > 0], i.e. the
/// sign of the product of the two designated feature coordinates of either
/// leaf. Every center's 1-hop feature sum is exactly (0, 0), so the label is
/// invisible to any aggregator that only sees neighborhood sums. `n` is the
/// total node count (centers = n / 3).
Graph make_parity(std::size_t n, std::uint64_t seed);

}  // namespace tgnn
