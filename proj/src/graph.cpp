#include "relex/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "relex/error.hpp"

namespace relex {

bool Graph::has_edge(NodeId a, NodeId b) const {
    if (a == b || a < 0 || b < 0 || a >= num_nodes_ || b >= num_nodes_) {
        return false;
    }
    return std::binary_search(edges_.begin(), edges_.end(), Edge(a, b));
}

Matrix Graph::to_dense() const {
    Matrix dense = Matrix::Zero(num_nodes_, num_nodes_);
    for (const auto& e : edges_) {
        dense(e.u, e.v) = 1.0;
        dense(e.v, e.u) = 1.0;
    }
    return dense;
}

Graph build_graph(const std::vector<std::pair<NodeId, NodeId>>& edge_list, Matrix features,
                  std::vector<int> labels, std::vector<int> motifs) {
    const auto n = static_cast<int>(features.rows());
    if (n < 1) {
        throw GraphError("graph needs at least one node");
    }
    if (!labels.empty() && static_cast<int>(labels.size()) != n) {
        throw GraphError("labels length " + std::to_string(labels.size()) + " != num_nodes " + std::to_string(n));
    }
    if (!motifs.empty() && static_cast<int>(motifs.size()) != n) {
        throw GraphError("motifs length " + std::to_string(motifs.size()) + " != num_nodes " + std::to_string(n));
    }
    if (!features.allFinite()) {
        throw GraphError("features contain non-finite values");
    }

    Graph g;
    g.num_nodes_ = n;
    g.edges_.reserve(edge_list.size());
    for (const auto& [a, b] : edge_list) {
        if (a < 0 || b < 0 || a >= n || b >= n) {
            throw GraphError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range for " +
                             std::to_string(n) + " nodes");
        }
        if (a == b) {
            throw GraphError("self-loop on node " + std::to_string(a));
        }
        g.edges_.emplace_back(a, b);
    }
    std::sort(g.edges_.begin(), g.edges_.end());
    g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());

    g.adjacency_.assign(n, {});
    for (const auto& e : g.edges_) {
        g.adjacency_[e.u].push_back(e.v);
        g.adjacency_[e.v].push_back(e.u);
    }
    for (auto& nbrs : g.adjacency_) {
        std::sort(nbrs.begin(), nbrs.end());
    }
    g.features_ = std::move(features);
    g.labels_ = std::move(labels);
    g.motifs_ = std::move(motifs);
    return g;
}

Graph build_graph(const std::vector<std::pair<NodeId, NodeId>>& edge_list,
                  const std::vector<std::vector<double>>& features, std::vector<int> labels,
                  std::vector<int> motifs) {
    if (features.empty()) {
        throw GraphError("graph needs at least one node");
    }
    const auto cols = features.front().size();
    Matrix dense(static_cast<Index>(features.size()), static_cast<Index>(cols));
    for (std::size_t r = 0; r < features.size(); ++r) {
        if (features[r].size() != cols) {
            throw GraphError("ragged feature row " + std::to_string(r) + ": expected " + std::to_string(cols) +
                             " columns, got " + std::to_string(features[r].size()));
        }
        for (std::size_t c = 0; c < cols; ++c) {
            dense(static_cast<Index>(r), static_cast<Index>(c)) = features[r][c];
        }
    }
    return build_graph(edge_list, std::move(dense), std::move(labels), std::move(motifs));
}

Matrix constant_features(int num_nodes) {
    return Matrix::Ones(num_nodes, 1);
}

Matrix degree_features(int num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edge_list, int max_degree) {
    std::vector<Edge> canon;
    canon.reserve(edge_list.size());
    for (const auto& [a, b] : edge_list) {
        if (a != b && a >= 0 && b >= 0 && a < num_nodes && b < num_nodes) {
            canon.emplace_back(a, b);
        }
    }
    std::sort(canon.begin(), canon.end());
    canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
    std::vector<int> degree(num_nodes, 0);
    for (const auto& e : canon) {
        ++degree[e.u];
        ++degree[e.v];
    }
    Matrix features = Matrix::Zero(num_nodes, max_degree + 1);
    for (int i = 0; i < num_nodes; ++i) {
        features(i, std::min(degree[i], max_degree)) = 1.0;
    }
    return features;
}

EdgeList EgoGraph::edges() const {
    EdgeList out;
    for (Index p = 0; p < size(); ++p) {
        for (Index q = p + 1; q < size(); ++q) {
            if (adjacency(p, q) != 0.0) {
                out.emplace_back(static_cast<NodeId>(p), static_cast<NodeId>(q));
            }
        }
    }
    return out;
}

std::size_t EgoGraph::num_edges() const {
    std::size_t count = 0;
    for (Index p = 0; p < size(); ++p) {
        for (Index q = p + 1; q < size(); ++q) {
            count += adjacency(p, q) != 0.0;
        }
    }
    return count;
}

Edge EgoGraph::to_global(const Edge& local) const {
    return {node_map.at(local.u), node_map.at(local.v)};
}

std::optional<Index> EgoGraph::local_index(NodeId global) const {
    auto it = std::lower_bound(node_map.begin(), node_map.end(), global);
    if (it == node_map.end() || *it != global) {
        return std::nullopt;
    }
    return static_cast<Index>(it - node_map.begin());
}

EgoGraph extract_ego(const Graph& graph, NodeId node, int hops) {
    if (node < 0 || node >= graph.num_nodes()) {
        throw GraphError("invalid node id " + std::to_string(node));
    }
    if (hops < 0) {
        throw GraphError("hops must be non-negative");
    }
    std::vector<int> dist(graph.num_nodes(), -1);
    std::deque<NodeId> queue{node};
    dist[node] = 0;
    std::vector<NodeId> members{node};
    while (!queue.empty()) {
        const NodeId cur = queue.front();
        queue.pop_front();
        if (dist[cur] == hops) {
            continue;
        }
        for (NodeId nb : graph.neighbors(cur)) {
            if (dist[nb] < 0) {
                dist[nb] = dist[cur] + 1;
                members.push_back(nb);
                queue.push_back(nb);
            }
        }
    }
    std::sort(members.begin(), members.end());

    EgoGraph ego;
    ego.hops = hops;
    ego.node_map = members;
    const auto size = static_cast<Index>(members.size());
    ego.adjacency = Matrix::Zero(size, size);
    ego.features.resize(size, graph.features().cols());
    for (Index p = 0; p < size; ++p) {
        ego.features.row(p) = graph.features().row(members[p]);
        if (members[p] == node) {
            ego.center = p;
        }
    }
    for (Index p = 0; p < size; ++p) {
        for (NodeId nb : graph.neighbors(members[p])) {
            if (auto q = ego.local_index(nb)) {
                ego.adjacency(p, *q) = 1.0;
            }
        }
    }
    return ego;
}

EdgeScores::EdgeScores(const EgoGraph& ego, Matrix values) : values_(std::move(values)) {
    if (values_.rows() != ego.size() || values_.cols() != ego.size()) {
        throw ShapeError("edge scores must be " + std::to_string(ego.size()) + "x" + std::to_string(ego.size()));
    }
    for (Index p = 0; p < values_.rows(); ++p) {
        for (Index q = 0; q < values_.cols(); ++q) {
            const double s = values_(p, q);
            if (!(s >= 0.0 && s <= 1.0)) {
                throw GraphError("edge score outside [0,1]");
            }
            if (s != values_(q, p)) {
                throw GraphError("edge scores are not symmetric");
            }
            if (s > 0.0 && ego.adjacency(p, q) == 0.0) {
                throw GraphError("positive score on a non-edge");
            }
        }
    }
}

EdgeScores EdgeScores::from_edge_values(const EgoGraph& ego, std::span<const double> values) {
    const auto edges = ego.edges();
    if (values.size() != edges.size()) {
        throw ShapeError("expected " + std::to_string(edges.size()) + " edge values, got " +
                         std::to_string(values.size()));
    }
    return EdgeScores(ego, scatter_edges(edges, values, ego.size()));
}

EdgeScores EdgeScores::zeros(const EgoGraph& ego) {
    return EdgeScores(ego, Matrix::Zero(ego.size(), ego.size()));
}

std::vector<double> EdgeScores::edge_values(const EgoGraph& ego) const {
    std::vector<double> out;
    for (const auto& e : ego.edges()) {
        out.push_back(values_(e.u, e.v));
    }
    return out;
}

Matrix apply_mask(const EgoGraph& ego, const Matrix& mask) {
    if (mask.rows() != ego.size() || mask.cols() != ego.size()) {
        throw ShapeError("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         ", ego graph has " + std::to_string(ego.size()) + " nodes");
    }
    return ego.adjacency.cwiseProduct(mask);
}

Matrix apply_mask(const EgoGraph& ego, const EdgeScores& scores) {
    return apply_mask(ego, scores.values());
}

Matrix normalize_adjacency(const Matrix& adjacency) {
    Matrix with_loops = adjacency;
    with_loops.diagonal().array() += 1.0;
    const Vector inv_sqrt = with_loops.rowwise().sum().array().rsqrt();
    return inv_sqrt.asDiagonal() * with_loops * inv_sqrt.asDiagonal();
}

Matrix scatter_edges(std::span<const Edge> edges, std::span<const double> values, Index size) {
    Matrix out = Matrix::Zero(size, size);
    for (std::size_t k = 0; k < edges.size(); ++k) {
        out(edges[k].u, edges[k].v) = values[k];
        out(edges[k].v, edges[k].u) = values[k];
    }
    return out;
}

} // namespace relex
