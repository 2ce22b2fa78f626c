#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relex/graph.hpp"

namespace relex {

enum class DatasetKind { tree_grid, tree_ba, tree_grid_ba };
enum class FeatureKind { constant, degree };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);
FeatureKind parse_feature_kind(const std::string& name);
std::string to_string(FeatureKind kind);

struct SynthConfig {
    int tree_height = 8;
    int motif_count = 80;
    int grid_side = 3;
    int ba_size = 5;
    int ba_attach = 1;
    /// Negative means 10% of the structural (tree + motif + attachment) edges.
    int noise_edges = -1;
    /// Node features: one-hot degree (capped at max_degree) or a constant 1.
    FeatureKind features = FeatureKind::degree;
    int max_degree = 10;
    std::uint64_t seed = 0;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

struct LabeledGraph {
    Graph graph; // labels = class ids, motifs = motif ids (0 is the base tree)
    std::map<int, EdgeList> motif_edges;
    EdgeList attachment_edges;
    EdgeList noise_edges;

    [[nodiscard]] const std::vector<int>& class_of() const { return graph.labels(); }
    [[nodiscard]] int num_classes() const;
};

/// Binary tree with motif_count 3x3-style grids attached; classes tree=0, grid=1.
LabeledGraph gen_tree_grid(const SynthConfig& config);
/// Binary tree with motif_count preferential-attachment motifs; classes tree=0, BA=1.
LabeledGraph gen_tree_ba(const SynthConfig& config);
/// motif_count grids and motif_count BA motifs on one tree; classes tree=0, grid=1, BA=2.
LabeledGraph gen_tree_grid_ba(const SynthConfig& config);

LabeledGraph generate(DatasetKind kind, const SynthConfig& config);

/// Ground-truth edges for `node`: the intra-motif edges of its own motif
/// inside its `hops`-hop ego graph, in global ids.
EdgeList right_reason(const LabeledGraph& labeled, NodeId node, int hops);

/// Preferential-attachment edge list on `size` nodes (local ids), seeded star of attach+1 nodes.
EdgeList barabasi_albert_edges(int size, int attach, std::uint64_t seed);

} // namespace relex
