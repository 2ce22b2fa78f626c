#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relex/blackbox.hpp"
#include "relex/graph.hpp"
#include "relex/random.hpp"

namespace relex::testing {

using EdgePairs = std::vector<std::pair<NodeId, NodeId>>;

/// Graph with a constant feature column.
Graph plain_graph(int n, const EdgePairs& edges);
/// Graph with `dim` random features per node.
Graph random_feature_graph(int n, const EdgePairs& edges, int dim, Rng& rng);
/// Whole graph as an ego graph around `center` (hops = n).
EgoGraph whole_ego(const Graph& graph, NodeId center);

/// Connected random graph: a random spanning tree plus extra edges, `m` edges total.
EdgePairs random_connected_edges(int n, int m, Rng& rng);

/// Central finite differences of f at x.
Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5);
/// ||a − b|| / max(||a||, ||b||, floor).
double relative_error(const Vector& a, const Vector& b, double floor = 1e-8);

Vector flatten(std::span<const Matrix> parts);
std::vector<Matrix> unflatten(const Vector& flat, std::span<const Matrix> shapes);

/// Exact distribution of the BFS sampler: every keep/drop pattern of the ego
/// edges, reduced to the edges of the center's connected component.
std::map<std::vector<int>, double> sampler_distribution(const EgoGraph& ego, double keep_prob);
/// Edge-presence key of an adjacency over ego.edges().
std::vector<int> edge_key(const EgoGraph& ego, const Matrix& adjacency);

/// ROC area by sweeping every distinct threshold and integrating with trapezoids.
double sweep_auc(std::span<const double> scores, std::span<const int> positive);

/// Σ over sampler outcomes of weight · (attribution − prediction drop)².
double brute_infidelity(const BlackBoxModel& model, const EgoGraph& ego, const Matrix& scores, double keep_prob);

/// Same probability for every input.
class ConstantModel final : public BlackBoxModel {
public:
    explicit ConstantModel(std::vector<double> probs) : probs_(std::move(probs)) {}
    ClassDistribution predict(const Matrix&, const Matrix&, Index, std::span<const NodeId> = {}) const override {
        return {probs_};
    }
    int num_classes() const override { return static_cast<int>(probs_.size()); }
    std::string id() const override { return "constant"; }
    nlohmann::json to_json() const override { return {{"kind", "constant"}}; }

private:
    std::vector<double> probs_;
};

/// Class 1 with probability `high` while every gate edge is present, else class 0.
class GateModel final : public BlackBoxModel {
public:
    GateModel(EdgeList gates, double high = 0.95) : gates_(std::move(gates)), high_(high) {}
    ClassDistribution predict(const Matrix& adjacency, const Matrix&, Index, std::span<const NodeId> = {}) const override;
    int num_classes() const override { return 2; }
    std::string id() const override { return "gate"; }
    nlohmann::json to_json() const override { return {{"kind", "gate"}}; }

private:
    EdgeList gates_;
    double high_;
};

/// Class 1 probability σ(slope · (weighted degree of the queried node − offset)).
class DegreeModel final : public BlackBoxModel {
public:
    DegreeModel(double slope, double offset) : slope_(slope), offset_(offset) {}
    ClassDistribution predict(const Matrix& adjacency, const Matrix&, Index node,
                              std::span<const NodeId> = {}) const override;
    int num_classes() const override { return 2; }
    std::string id() const override { return "degree"; }
    nlohmann::json to_json() const override { return {{"kind", "degree"}}; }

private:
    double slope_;
    double offset_;
};

/// Randomly initialized GCN with spread-out weights so predictions vary with structure.
GcnModel random_gcn(int feature_dim, int hidden, int classes, std::uint64_t seed, double scale = 1.5);

} // namespace relex::testing
