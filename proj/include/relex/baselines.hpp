#pragma once

#include <vector>

#include "relex/blackbox.hpp"
#include "relex/graph.hpp"
#include "relex/random.hpp"
#include "relex/relex.hpp"

namespace relex {

struct AnchorConfig {
    double delta = 0.1;
    double target_precision = 0.95;
    long budget = 5000; // black-box calls
    int beam_width = 2;
    double keep_prob = 0.5;
    int initial_samples = 16;
    int batch_samples = 16;
    /// Error rate of the confidence bounds.
    double confidence = 0.05;
    /// Slack allowed between confidence bounds when separating or certifying arms.
    double tolerance = 0.1;
};

/// Edges forced into every sample conditioned on `anchor`: the anchor edges
/// plus a shortest path from the center to the nearer endpoint of each.
/// Throws GraphError if an anchor edge is not an ego edge.
EdgeList anchor_closure(const EgoGraph& ego, const EdgeList& anchor);

/// One BFS sample with the anchor closure added back.
Matrix sample_with_anchor(const EgoGraph& ego, const EdgeList& closure, double keep_prob, Rng& rng);

/// 1 if the sampled prediction keeps the original class, i.e. 1 − f(z)_c < δ.
bool prediction_holds(const ClassDistribution& sample, int original_class, double delta);

/// Monte-Carlo precision of an anchor (local edges) from n conditioned samples.
double anchor_precision(const BlackBoxModel& blackbox, const EgoGraph& ego, const EdgeList& anchor, double delta,
                        int n, Rng& rng, double keep_prob = 0.5);

struct AnchorArm {
    EdgeList anchor;
    long hits = 0;
    long draws = 0;

    [[nodiscard]] double mean() const { return draws > 0 ? static_cast<double>(hits) / static_cast<double>(draws) : 0.0; }
};

/// Beam search over growing anchors with confidence-bound arm elimination.
/// Returns the smallest anchor whose estimated precision reaches the target,
/// else the best one found when the budget runs out. Scores are 1 on the
/// anchor edges and 0 elsewhere.
Explanation relational_anchors(const BlackBoxModel& blackbox, const EgoGraph& ego, const AnchorConfig& config,
                               Rng& rng);

/// |d(−log p_c)/dA| on the ego edges, min-max normalized; all zero if constant.
/// Throws UnsupportedModelError for non-differentiable models.
Explanation saliency_explain(const BlackBoxModel& blackbox, const EgoGraph& ego);

/// Uniform random soft mask, the reference point for infidelity.
Explanation random_explain(const EgoGraph& ego, Rng& rng);

} // namespace relex
