#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace relex {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using NodeId = int;

/// Unordered edge, stored with the smaller endpoint first.
struct Edge {
    NodeId u = 0;
    NodeId v = 0;

    Edge() = default;
    Edge(NodeId a, NodeId b) : u(a < b ? a : b), v(a < b ? b : a) {}

    auto operator<=>(const Edge&) const = default;
};

using EdgeList = std::vector<Edge>;

/// Undirected attributed graph. Immutable once built; use build_graph().
class Graph {
public:
    Graph() = default;

    [[nodiscard]] int num_nodes() const { return num_nodes_; }
    [[nodiscard]] const EdgeList& edges() const { return edges_; }
    [[nodiscard]] const Matrix& features() const { return features_; }
    [[nodiscard]] const std::vector<int>& labels() const { return labels_; }
    [[nodiscard]] const std::vector<int>& motifs() const { return motifs_; }
    [[nodiscard]] const std::vector<NodeId>& neighbors(NodeId node) const { return adjacency_[node]; }
    [[nodiscard]] bool has_labels() const { return !labels_.empty(); }
    [[nodiscard]] bool has_motifs() const { return !motifs_.empty(); }
    [[nodiscard]] bool has_edge(NodeId a, NodeId b) const;

    /// Dense symmetric 0/1 adjacency.
    [[nodiscard]] Matrix to_dense() const;

private:
    friend Graph build_graph(const std::vector<std::pair<NodeId, NodeId>>&, Matrix, std::vector<int>,
                             std::vector<int>);

    int num_nodes_ = 0;
    EdgeList edges_;
    Matrix features_;
    std::vector<int> labels_;
    std::vector<int> motifs_;
    std::vector<std::vector<NodeId>> adjacency_;
};

/// Canonicalizes the edge list (dedup, smaller endpoint first). Throws GraphError
/// on self-loops, out-of-range endpoints, or label/motif vectors of the wrong length.
/// The node count is taken from the feature matrix rows.
Graph build_graph(const std::vector<std::pair<NodeId, NodeId>>& edge_list, Matrix features,
                  std::vector<int> labels = {}, std::vector<int> motifs = {});

/// Same, from row-major nested features; rejects ragged rows.
Graph build_graph(const std::vector<std::pair<NodeId, NodeId>>& edge_list,
                  const std::vector<std::vector<double>>& features, std::vector<int> labels = {},
                  std::vector<int> motifs = {});

/// Constant scalar feature 1 per node.
Matrix constant_features(int num_nodes);

/// One-hot degree, degrees above max_degree share the last column.
Matrix degree_features(int num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edge_list, int max_degree);

/// The n-hop computation graph around one node.
struct EgoGraph {
    Index center = 0;
    Matrix adjacency;
    Matrix features;
    std::vector<NodeId> node_map;
    int hops = 0;

    [[nodiscard]] Index size() const { return adjacency.rows(); }
    /// Local edges (upper triangle), sorted.
    [[nodiscard]] EdgeList edges() const;
    [[nodiscard]] std::size_t num_edges() const;
    /// Local edge (p, q) mapped to global node ids.
    [[nodiscard]] Edge to_global(const Edge& local) const;
    /// Local index for a global node id, if present.
    [[nodiscard]] std::optional<Index> local_index(NodeId global) const;
};

/// Induced subgraph on nodes within `hops` of `node`; node_map is sorted by global id.
EgoGraph extract_ego(const Graph& graph, NodeId node, int hops);

/// Per-edge importance over an ego graph: symmetric, in [0,1], zero off the ego edges.
class EdgeScores {
public:
    EdgeScores() = default;
    /// Validates against the ego adjacency; throws ShapeError/GraphError.
    EdgeScores(const EgoGraph& ego, Matrix values);

    /// One score per edge, in the order of ego.edges().
    static EdgeScores from_edge_values(const EgoGraph& ego, std::span<const double> values);
    static EdgeScores zeros(const EgoGraph& ego);

    [[nodiscard]] const Matrix& values() const { return values_; }
    [[nodiscard]] double at(const Edge& local) const { return values_(local.u, local.v); }
    /// Scores in the order of ego.edges().
    [[nodiscard]] std::vector<double> edge_values(const EgoGraph& ego) const;

private:
    Matrix values_;
};

/// A ⊙ M. Throws ShapeError on dimension mismatch.
Matrix apply_mask(const EgoGraph& ego, const Matrix& mask);
Matrix apply_mask(const EgoGraph& ego, const EdgeScores& scores);

/// D̃^(-1/2) (A + I) D̃^(-1/2), D̃ the row-degree matrix of A + I.
Matrix normalize_adjacency(const Matrix& adjacency);

/// Dense symmetric matrix with `values[k]` at edge k, zero elsewhere.
Matrix scatter_edges(std::span<const Edge> edges, std::span<const double> values, Index size);

} // namespace relex
