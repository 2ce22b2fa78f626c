#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "relex/blackbox.hpp"
#include "relex/diffgraph.hpp"
#include "relex/graph.hpp"
#include "relex/random.hpp"

namespace relex {

// ---------------------------------------------------------------------------
// Perturbation sampling

/// Connected random subgraph grown breadth-first from the center: every edge
/// touching an already-kept node is decided once and kept with `keep_prob`.
/// Throws ConfigError unless 0 < keep_prob <= 1.
Matrix sample_perturbation(const EgoGraph& ego, double keep_prob, Rng& rng);

struct PerturbationSample {
    Matrix adjacency;
    ClassDistribution target;
};

struct PerturbationDataset {
    EgoGraph ego;
    double keep_prob = 0.5;
    std::vector<PerturbationSample> samples;
};

/// n perturbed ego graphs labeled by the black box (features are never perturbed).
PerturbationDataset build_dataset(const EgoGraph& ego, const BlackBoxModel& blackbox, int n, double keep_prob,
                                  Rng& rng);

// ---------------------------------------------------------------------------
// Local surrogate

struct SurrogateHyper {
    int hidden_dim = 20;
    int layers = 0; // 0: use ego.hops (at least 1)
    int epochs = 40;
    int batch_size = 32;
    double learning_rate = 0.05;
    double holdout_fraction = 0.2;
    /// Append a one-hot node identity to the input features.
    bool identity_features = true;
    std::uint64_t seed = 0;
};

/// Residual GCN: every layer's output is concatenated into the readout input.
/// Evaluated at the ego center only.
class Surrogate {
public:
    Surrogate() = default;
    Surrogate(Matrix input_features, Index center, std::vector<Matrix> weights, std::vector<Matrix> biases);

    static Surrogate initialize(const EgoGraph& ego, int num_classes, const SurrogateHyper& hyper);

    [[nodiscard]] ClassDistribution predict(const Matrix& adjacency) const;

    /// Center logits (1 × classes) given the normalized adjacency handle. `params`
    /// holds weights then biases, as tape handles (variables or constants).
    [[nodiscard]] diff::Var logits(diff::Tape& tape, diff::Var normalized_adjacency,
                                   std::span<const diff::Var> params) const;
    /// All parameters on `tape` as constants, in the order logits() expects.
    [[nodiscard]] std::vector<diff::Var> constants(diff::Tape& tape) const;

    [[nodiscard]] int num_layers() const { return static_cast<int>(weights_.size()) - 1; }
    [[nodiscard]] int num_classes() const { return static_cast<int>(weights_.back().cols()); }
    [[nodiscard]] Index center() const { return center_; }
    [[nodiscard]] const Matrix& input_features() const { return features_; }
    /// Readout input width: sum of the layer output widths.
    [[nodiscard]] Index readout_width() const { return weights_.back().rows(); }

    /// Weights then biases.
    [[nodiscard]] std::vector<Matrix> parameters() const;
    void set_parameters(std::vector<Matrix> params);

    double fidelity = 0.0;   // holdout argmax agreement
    double holdout_kl = 0.0; // mean KL(black box ‖ surrogate) on the holdout

private:
    Matrix features_;
    Index center_ = 0;
    std::vector<Matrix> weights_; // layers..., readout
    std::vector<Matrix> biases_;
};

/// Mean soft-target cross-entropy of the surrogate over a batch, with gradients
/// w.r.t. parameters() when `grads` is non-null.
double surrogate_loss(const Surrogate& surrogate, std::span<const PerturbationSample> batch,
                      std::vector<Matrix>* grads);

/// Minimizes KL(Ŷ ‖ g(Â)) on the first (1 − holdout) share of the samples and
/// reports fidelity on the rest. Throws DivergenceError on a non-finite loss.
Surrogate train_surrogate(const PerturbationDataset& dataset, const SurrogateHyper& hyper);

// ---------------------------------------------------------------------------
// Mask learning

enum class MaskKind { sigmoid, gumbel };
enum class Regularizer { l1, l21, both };

std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(const std::string& name);
std::string to_string(Regularizer reg);
Regularizer parse_regularizer(const std::string& name);

struct BinarizeStrategy {
    enum class Kind { threshold, top_k } kind = Kind::threshold;
    double threshold = 0.5;
    std::size_t k = 0;

    static BinarizeStrategy at_threshold(double t) { return {Kind::threshold, t, 0}; }
    static BinarizeStrategy top(std::size_t k) { return {Kind::top_k, 0.5, k}; }
};

struct MaskSpec {
    MaskKind kind = MaskKind::gumbel;
    Regularizer reg = Regularizer::both;
    double l1_weight = 0.005;
    double l21_weight = 0.001;
    double learning_rate = 0.05;
    int iterations = 1000;
    double tau_initial = 2.0;
    double tau_final = 0.1;
    double diversity_weight = 0.5;
    /// Gumbel draws averaged per iteration.
    int noise_samples = 1;
    diff::OptimizerKind optimizer = diff::OptimizerKind::adam;
    BinarizeStrategy binarize = BinarizeStrategy::at_threshold(0.5);

    /// Throws ConfigError for iterations < 1, increasing τ, negative weights.
    void validate() const;
    /// Geometric schedule from tau_initial to tau_final over the iterations.
    [[nodiscard]] double temperature(int iteration) const;
    [[nodiscard]] nlohmann::json to_json() const;
};

struct Explanation {
    std::string method;
    NodeId node = 0;
    int hops = 0;
    Index center = 0;
    std::vector<NodeId> node_map;
    EdgeList ego_edges; // local ids
    EdgeScores scores;
    EdgeList selected_edges; // local ids
    std::vector<double> objective_trace;
    double surrogate_fidelity = 0.0;
    double task_loss = 0.0; // cross-entropy of the surrogate on the final mask
    int target_class = 0;
    std::vector<std::string> warnings;
    nlohmann::json provenance;
};

struct BinarizeResult {
    EdgeList edges;
    std::optional<std::string> warning;
};

/// Deterministic edge selection; ties go to the higher score, then the smaller edge.
BinarizeResult binarize(const EgoGraph& ego, const EdgeScores& scores, const BinarizeStrategy& strategy);

/// Noise for one Gumbel iteration: one (g1, g2) pair per ego edge.
struct GumbelNoise {
    Matrix first;
    Matrix second;

    static GumbelNoise draw(std::size_t edges, Rng& rng);
};

/// Ĵ(W) = CE(one-hot target, g(A ⊙ M(W))) + Ψ(M) − α_H Σ_s H(M, M_s), with W one
/// logit per ego edge (column vector in ego.edges() order).
class MaskObjective {
public:
    MaskObjective(const Surrogate& surrogate, const EgoGraph& ego, int target_class, const MaskSpec& spec,
                  std::vector<Vector> previous_masks = {});

    struct Terms {
        double total = 0.0;
        double task = 0.0;
        double regularization = 0.0;
        double diversity = 0.0; // Σ_s H(M, M_s), before weighting
    };

    /// Sigmoid masks ignore `noise` and `temperature`. Gumbel masks need noise.
    Terms evaluate(const Vector& logits, const GumbelNoise* noise, double temperature, Vector* grad) const;
    /// Task loss of the surrogate on a fixed per-edge mask.
    [[nodiscard]] double task_loss(const Vector& mask) const;
    /// Total objective on a fixed per-edge mask.
    [[nodiscard]] double objective_at(const Vector& mask) const;

    [[nodiscard]] std::size_t num_edges() const { return edges_.size(); }

private:
    Terms build(diff::Tape& tape, diff::Var mask_values, diff::Var* total) const;

    const Surrogate& surrogate_;
    const EgoGraph& ego_;
    EdgeList edges_;
    Matrix target_;
    MaskSpec spec_;
    std::vector<Vector> previous_;
};

/// Learns one mask against the argmax class of `target`. An ego graph without
/// edges yields an empty explanation carrying a warning.
Explanation learn_mask(const Surrogate& surrogate, const EgoGraph& ego, const ClassDistribution& target,
                       const MaskSpec& spec, Rng& rng);

/// T masks learned in sequence, each pushed away from the earlier ones with
/// weight spec.diversity_weight. Every mask restarts from the same RNG state.
std::vector<Explanation> learn_diverse_masks(const Surrogate& surrogate, const EgoGraph& ego,
                                             const ClassDistribution& target, const MaskSpec& spec, int count,
                                             Rng& rng);

/// Σ_e −[a_e log b_e + (1 − a_e) log(1 − b_e)], b clamped away from {0, 1}.
double mask_cross_entropy(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// End-to-end

struct RelexConfig {
    int samples = 1000;
    double keep_prob = 0.5;
    SurrogateHyper surrogate;
    MaskSpec mask;
};

struct RelexResult {
    Surrogate surrogate;
    std::vector<Explanation> explanations;
};

/// Samples, trains the surrogate, then learns `diverse` masks of each requested kind.
RelexResult explain_relex(const BlackBoxModel& blackbox, const EgoGraph& ego, NodeId node,
                          const RelexConfig& config, std::span<const MaskKind> kinds, int diverse, Rng& rng);

} // namespace relex
