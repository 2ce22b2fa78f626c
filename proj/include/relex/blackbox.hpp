#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "relex/graph.hpp"

namespace relex {

/// Probability vector over classes.
struct ClassDistribution {
    std::vector<double> probs;

    [[nodiscard]] int argmax() const;
    [[nodiscard]] double operator[](int c) const { return probs.at(static_cast<std::size_t>(c)); }
    [[nodiscard]] std::size_t size() const { return probs.size(); }
    /// Entries ≥ 0 and summing to 1 within `tol`.
    [[nodiscard]] bool is_simplex(double tol = 1e-9) const;
};

/// Opaque node classifier. Explainers only call predict(); gradient-based
/// baselines additionally need grad_adjacency().
///
/// `node_ids` maps local row indices to global node ids for models whose
/// behavior depends on node identity (e.g. observed seed labels). Empty means
/// local and global ids coincide.
class BlackBoxModel {
public:
    virtual ~BlackBoxModel() = default;

    [[nodiscard]] virtual ClassDistribution predict(const Matrix& adjacency, const Matrix& features, Index node,
                                                    std::span<const NodeId> node_ids = {}) const = 0;
    [[nodiscard]] virtual int num_classes() const = 0;
    [[nodiscard]] virtual bool differentiable() const { return false; }
    /// d(−log p_class at node)/d(edge weight) as a symmetric matrix: entry (p,q)
    /// is the derivative w.r.t. moving A_pq and A_qp together.
    [[nodiscard]] virtual Matrix grad_adjacency(const Matrix& adjacency, const Matrix& features, Index node,
                                                int cls) const;
    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual nlohmann::json to_json() const = 0;
};

/// Prediction on an ego graph with a replacement adjacency.
ClassDistribution predict_ego(const BlackBoxModel& model, const EgoGraph& ego, const Matrix& adjacency);
inline ClassDistribution predict_ego(const BlackBoxModel& model, const EgoGraph& ego) {
    return predict_ego(model, ego, ego.adjacency);
}

/// Forwards to another model and counts predict() calls. One per explanation task.
class CountingModel final : public BlackBoxModel {
public:
    explicit CountingModel(const BlackBoxModel& inner) : inner_(inner) {}

    ClassDistribution predict(const Matrix& adjacency, const Matrix& features, Index node,
                              std::span<const NodeId> node_ids = {}) const override;
    int num_classes() const override { return inner_.num_classes(); }
    bool differentiable() const override { return inner_.differentiable(); }
    Matrix grad_adjacency(const Matrix& adjacency, const Matrix& features, Index node, int cls) const override;
    std::string id() const override { return inner_.id(); }
    nlohmann::json to_json() const override { return inner_.to_json(); }

    [[nodiscard]] long calls() const { return calls_; }

private:
    const BlackBoxModel& inner_;
    mutable long calls_ = 0;
};

struct GcnHyper {
    int hidden_dim = 20;
    int epochs = 2000;
    double learning_rate = 0.01;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
};

/// Three graph-convolution layers, H' = act(Â H W + b): relu on the two hidden
/// layers, the third yields class logits read out per node with softmax.
class GcnModel final : public BlackBoxModel {
public:
    GcnModel() = default;
    GcnModel(std::vector<Matrix> weights, std::vector<Matrix> biases);

    /// Glorot-uniform weights, zero biases.
    static GcnModel initialize(int feature_dim, int hidden_dim, int num_classes, std::uint64_t seed);

    ClassDistribution predict(const Matrix& adjacency, const Matrix& features, Index node,
                              std::span<const NodeId> node_ids = {}) const override;
    int num_classes() const override { return static_cast<int>(weights_.back().cols()); }
    bool differentiable() const override { return true; }
    Matrix grad_adjacency(const Matrix& adjacency, const Matrix& features, Index node, int cls) const override;
    std::string id() const override { return "gcn"; }
    nlohmann::json to_json() const override;

    /// Per-node class probabilities on a whole (possibly weighted) graph.
    [[nodiscard]] Matrix predict_all(const Matrix& adjacency, const Matrix& features) const;

    [[nodiscard]] const std::vector<Matrix>& weights() const { return weights_; }
    [[nodiscard]] const std::vector<Matrix>& biases() const { return biases_; }
    [[nodiscard]] std::vector<Matrix>& weights() { return weights_; }
    [[nodiscard]] std::vector<Matrix>& biases() { return biases_; }
    [[nodiscard]] int feature_dim() const { return static_cast<int>(weights_.front().rows()); }
    [[nodiscard]] int hidden_dim() const { return static_cast<int>(weights_.front().cols()); }

    double train_accuracy = 0.0;
    GcnHyper hyper;

private:
    void check_inputs(const Matrix& adjacency, const Matrix& features, Index node) const;

    std::vector<Matrix> weights_;
    std::vector<Matrix> biases_;
};

/// Full-batch training on the nodes flagged in `train_mask`. Throws
/// GraphError if no flagged node is labeled, DivergenceError on NaN loss.
GcnModel train_gcn(const Graph& graph, const std::vector<bool>& train_mask, const GcnHyper& hyper);

/// Mean cross-entropy over the flagged labeled nodes. Fills `grads` (w0, b0,
/// w1, b1, w2, b2) when non-null.
double gcn_loss(const GcnModel& model, const Graph& graph, const std::vector<bool>& train_mask,
                std::vector<Matrix>* grads = nullptr);

/// Fraction of flagged nodes whose argmax prediction equals the label.
double gcn_accuracy(const GcnModel& model, const Graph& graph, const std::vector<bool>& mask);

/// Walk-evidence collective classifier: class c scores
/// Σ_k λ_k · (weighted k-step walks from the node to observed class-c seeds),
/// normalized with additive smoothing. Not differentiable by contract.
class RuleModel final : public BlackBoxModel {
public:
    RuleModel(std::vector<double> rule_weights, std::map<NodeId, int> seeds, int num_classes,
              double smoothing = 1e-3);

    ClassDistribution predict(const Matrix& adjacency, const Matrix& features, Index node,
                              std::span<const NodeId> node_ids = {}) const override;
    int num_classes() const override { return num_classes_; }
    std::string id() const override { return "rules"; }
    nlohmann::json to_json() const override;

    /// Unnormalized per-class evidence.
    [[nodiscard]] std::vector<double> evidence(const Matrix& adjacency, Index node,
                                               std::span<const NodeId> node_ids = {}) const;

    [[nodiscard]] const std::vector<double>& rule_weights() const { return rule_weights_; }
    [[nodiscard]] const std::map<NodeId, int>& seeds() const { return seeds_; }
    [[nodiscard]] double smoothing() const { return smoothing_; }

private:
    std::vector<double> rule_weights_;
    std::map<NodeId, int> seeds_;
    int num_classes_;
    double smoothing_;
};

/// Observes a uniformly random `fraction` of labeled nodes as seeds.
RuleModel make_rule_model(const Graph& graph, std::vector<double> rule_weights, double seed_fraction,
                          double smoothing, std::uint64_t seed);

std::unique_ptr<BlackBoxModel> load_model(const nlohmann::json& doc);

} // namespace relex
