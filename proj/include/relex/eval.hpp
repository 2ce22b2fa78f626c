#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "relex/baselines.hpp"
#include "relex/blackbox.hpp"
#include "relex/graph.hpp"
#include "relex/random.hpp"
#include "relex/relex.hpp"
#include "relex/synthgen.hpp"

namespace relex {

// ---------------------------------------------------------------------------
// Metrics

/// Rank AUC: P(score of a positive > score of a negative), ties count 0.5.
/// Empty when either class is missing.
std::optional<double> auc_roc(std::span<const double> scores, std::span<const int> positive);

/// AUC of the scores over the ego edges against right-reason edges given in
/// global ids. Throws GraphError if a right-reason edge is not an ego edge.
std::optional<double> auc_roc(const EgoGraph& ego, const EdgeScores& scores, const EdgeList& right_reason_global);

struct WeightedPerturbation {
    Matrix adjacency;
    double weight = 0.0;
};

/// Every distinct BFS-sampler outcome with its probability. Throws ConfigError above 20 edges.
std::vector<WeightedPerturbation> enumerate_perturbations(const EgoGraph& ego, double keep_prob);

/// Σ_j w_j (Σ_{removed e} score_e − (f(A) − f(Â_j)))², f the probability of the
/// originally predicted class at the center. One value per score set.
std::vector<double> infidelity_weighted(const BlackBoxModel& blackbox, const EgoGraph& ego,
                                        std::span<const EdgeScores> scores,
                                        std::span<const WeightedPerturbation> perturbations);

/// Monte-Carlo infidelity over n BFS-sampler draws shared by every score set.
std::vector<double> infidelity(const BlackBoxModel& blackbox, const EgoGraph& ego,
                               std::span<const EdgeScores> scores, int n, double keep_prob, Rng& rng);

double infidelity(const BlackBoxModel& blackbox, const EgoGraph& ego, const EdgeScores& scores, int n,
                  double keep_prob, Rng& rng);

/// Exact expectation under the sampler, by enumeration.
double infidelity_exact(const BlackBoxModel& blackbox, const EgoGraph& ego, const EdgeScores& scores,
                        double keep_prob);

// ---------------------------------------------------------------------------
// Benchmark

enum class Method { relex_sigmoid, relex_gumbel, saliency, anchors, random };

std::string to_string(Method method);
/// Accepts dashes or underscores ("relex-gumbel", "relex_gumbel").
Method parse_method(const std::string& name);

struct BenchmarkConfig {
    std::vector<Method> methods{Method::relex_sigmoid, Method::relex_gumbel, Method::saliency};
    int hops = 3;
    int node_cap = 100;
    /// Restrict the population to these classes; empty means every motif class.
    std::vector<int> classes;
    /// Explicit nodes; overrides sampling when non-empty.
    std::vector<NodeId> nodes;
    RelexConfig relex;
    AnchorConfig anchors;
    int infidelity_samples = 100;
    /// Select the top |right reason| edges of each mask instead of thresholding.
    bool right_reason_top_k = false;
    std::uint64_t seed = 0;
    int jobs = 1;
};

struct EvalRecord {
    NodeId node = 0;
    int cls = 0;
    std::string method;
    std::optional<double> auc;
    std::optional<double> infidelity;
    std::optional<double> fidelity;
    long calls = 0;
    double seconds = 0.0;
    std::string error;
};

struct MethodSummary {
    std::string method;
    double auc_mean = 0.0;
    double auc_std = 0.0;
    int auc_count = 0;
    int auc_undefined = 0;
    double infidelity_mean = 0.0;
    double infidelity_std = 0.0;
    int infidelity_count = 0;
    int errors = 0;
};

struct EvalReport {
    std::vector<EvalRecord> records;

    /// Means and sample standard deviations per method, undefined AUCs excluded and counted.
    [[nodiscard]] std::vector<MethodSummary> summary() const;
    [[nodiscard]] std::optional<MethodSummary> summary_for(const std::string& method) const;
    /// Header plus one row per record; seconds are written as 0 unless `timing`.
    [[nodiscard]] std::string to_csv(bool timing = false) const;
    [[nodiscard]] std::string summary_table(const std::string& title) const;
    [[nodiscard]] int error_count() const;
    void sort();
};

/// Parses a report written by to_csv().
EvalReport parse_report_csv(const std::string& text);

/// Motif nodes (or config.nodes), uniformly capped at node_cap, sorted by id.
std::vector<NodeId> select_nodes(const LabeledGraph& labeled, const BenchmarkConfig& config);

/// Records for one node, methods in config order.
std::vector<EvalRecord> evaluate_node(const LabeledGraph& labeled, const BlackBoxModel& blackbox,
                                      const BenchmarkConfig& config, NodeId node);

/// Runs every selected node not in `skip`. `on_node` is called once per finished
/// node (serialized). Records are sorted by node id, then method order.
EvalReport run_benchmark(const LabeledGraph& labeled, const BlackBoxModel& blackbox, const BenchmarkConfig& config,
                         const std::set<NodeId>& skip = {},
                         const std::function<void(const std::vector<EvalRecord>&)>& on_node = {});

} // namespace relex
