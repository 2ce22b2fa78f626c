#include "relex/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "relex/error.hpp"

namespace relex {

EdgeList anchor_closure(const EgoGraph& ego, const EdgeList& anchor) {
    const Index n = ego.size();
    std::vector<Index> parent(static_cast<std::size_t>(n), -1);
    std::vector<int> dist(static_cast<std::size_t>(n), -1);
    std::deque<Index> queue{ego.center};
    dist[ego.center] = 0;
    while (!queue.empty()) {
        const Index u = queue.front();
        queue.pop_front();
        for (Index v = 0; v < n; ++v) {
            if (ego.adjacency(u, v) != 0.0 && dist[v] < 0) {
                dist[v] = dist[u] + 1;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    std::set<Edge> out;
    for (const auto& e : anchor) {
        if (e.u < 0 || e.v >= n || ego.adjacency(e.u, e.v) == 0.0) {
            throw GraphError("anchor edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                             ") is not an ego edge");
        }
        out.insert(e);
        Index w = dist[e.u] <= dist[e.v] ? e.u : e.v;
        while (w != ego.center && parent[w] >= 0) {
            out.insert(Edge(static_cast<NodeId>(w), static_cast<NodeId>(parent[w])));
            w = parent[w];
        }
    }
    return {out.begin(), out.end()};
}

Matrix sample_with_anchor(const EgoGraph& ego, const EdgeList& closure, double keep_prob, Rng& rng) {
    Matrix z = sample_perturbation(ego, keep_prob, rng);
    for (const auto& e : closure) {
        z(e.u, e.v) = z(e.v, e.u) = ego.adjacency(e.u, e.v);
    }
    return z;
}

bool prediction_holds(const ClassDistribution& sample, int original_class, double delta) {
    return 1.0 - sample[original_class] < delta;
}

double anchor_precision(const BlackBoxModel& blackbox, const EgoGraph& ego, const EdgeList& anchor, double delta,
                        int n, Rng& rng, double keep_prob) {
    if (n < 1) {
        throw ConfigError("anchor_precision needs n >= 1");
    }
    const EdgeList closure = anchor_closure(ego, anchor);
    const int cls = predict_ego(blackbox, ego).argmax();
    int hits = 0;
    for (int j = 0; j < n; ++j) {
        const Matrix z = sample_with_anchor(ego, closure, keep_prob, rng);
        hits += prediction_holds(predict_ego(blackbox, ego, z), cls, delta);
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

double bernoulli_kl(double p, double q) {
    constexpr double eps = 1e-12;
    p = std::clamp(p, eps, 1.0 - eps);
    q = std::clamp(q, eps, 1.0 - eps);
    return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

// KL confidence bounds: the extreme q with draws * kl(mean, q) <= level.
double kl_upper(double mean, long draws, double level) {
    if (draws == 0) return 1.0;
    double lo = mean;
    double hi = 1.0;
    for (int i = 0; i < 50; ++i) {
        const double mid = 0.5 * (lo + hi);
        (static_cast<double>(draws) * bernoulli_kl(mean, mid) > level ? hi : lo) = mid;
    }
    return lo;
}

double kl_lower(double mean, long draws, double level) {
    if (draws == 0) return 0.0;
    double lo = 0.0;
    double hi = mean;
    for (int i = 0; i < 50; ++i) {
        const double mid = 0.5 * (lo + hi);
        (static_cast<double>(draws) * bernoulli_kl(mean, mid) > level ? lo : hi) = mid;
    }
    return hi;
}

class AnchorSearch {
public:
    AnchorSearch(const BlackBoxModel& blackbox, const EgoGraph& ego, const AnchorConfig& config, Rng& rng)
        : blackbox_(blackbox), ego_(ego), config_(config), rng_(rng) {
        original_ = predict_ego(blackbox, ego).argmax();
    }

    [[nodiscard]] bool exhausted() const { return calls_ >= config_.budget; }
    [[nodiscard]] long calls() const { return calls_; }
    [[nodiscard]] int original_class() const { return original_; }

    void draw(AnchorArm& arm, long count) {
        const EdgeList closure = anchor_closure(ego_, arm.anchor);
        for (long j = 0; j < count && !exhausted(); ++j) {
            const Matrix z = sample_with_anchor(ego_, closure, config_.keep_prob, rng_);
            ++calls_;
            arm.hits += prediction_holds(predict_ego(blackbox_, ego_, z), original_, config_.delta);
            ++arm.draws;
        }
    }

    [[nodiscard]] double level(std::size_t arms) {
        ++round_;
        return std::log(1.25 * static_cast<double>(std::max<std::size_t>(arms, 1)) *
                        std::pow(static_cast<double>(round_), 1.1) / config_.confidence);
    }

    /// LUCB: separate the best `width` arms from the rest.
    /// Stops early once `cap` calls have been spent.
    std::vector<std::size_t> best_arms(std::vector<AnchorArm>& arms, int width, long cap) {
        const long stop = calls_ + cap;
        for (auto& arm : arms) {
            draw(arm, config_.initial_samples);
        }
        std::vector<std::size_t> order(arms.size());
        const auto rank = [&] {
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return arms[a].mean() > arms[b].mean(); });
        };
        const auto top = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(width), arms.size()));
        rank();
        while (top < arms.size() && !exhausted() && calls_ < stop) {
            const double beta = level(arms.size());
            std::size_t weakest = order[0];
            double weakest_lb = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < top; ++i) {
                const double lb = kl_lower(arms[order[i]].mean(), arms[order[i]].draws, beta);
                if (lb < weakest_lb) {
                    weakest_lb = lb;
                    weakest = order[i];
                }
            }
            std::size_t strongest = order[top];
            double strongest_ub = -1.0;
            for (std::size_t i = top; i < arms.size(); ++i) {
                const double ub = kl_upper(arms[order[i]].mean(), arms[order[i]].draws, beta);
                if (ub > strongest_ub) {
                    strongest_ub = ub;
                    strongest = order[i];
                }
            }
            if (strongest_ub - weakest_lb <= config_.tolerance) {
                break;
            }
            draw(arms[weakest], config_.batch_samples);
            draw(arms[strongest], config_.batch_samples);
            rank();
        }
        return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top)};
    }

    /// Samples until the precision is confidently above or below the target.
    bool certify(AnchorArm& arm) {
        if (arm.draws == 0) {
            draw(arm, config_.initial_samples);
        }
        while (!exhausted()) {
            const double beta = level(1);
            const double mean = arm.mean();
            const double lb = kl_lower(mean, arm.draws, beta);
            if (mean >= config_.target_precision && lb >= config_.target_precision - config_.tolerance) {
                return true;
            }
            if (mean < config_.target_precision) {
                return false;
            }
            draw(arm, config_.batch_samples);
        }
        return arm.mean() >= config_.target_precision;
    }

private:
    const BlackBoxModel& blackbox_;
    const EgoGraph& ego_;
    AnchorConfig config_;
    Rng& rng_;
    int original_ = 0;
    long calls_ = 0;
    long round_ = 0;
};

Explanation base_explanation(const EgoGraph& ego, std::string method) {
    Explanation ex;
    ex.method = std::move(method);
    ex.hops = ego.hops;
    ex.center = ego.center;
    ex.node_map = ego.node_map;
    ex.node = ego.node_map.empty() ? static_cast<NodeId>(ego.center) : ego.node_map.at(ego.center);
    ex.ego_edges = ego.edges();
    ex.scores = EdgeScores::zeros(ego);
    ex.provenance = nlohmann::json::object();
    return ex;
}

} // namespace

Explanation relational_anchors(const BlackBoxModel& blackbox, const EgoGraph& ego, const AnchorConfig& config,
                               Rng& rng) {
    if (config.budget < 1) throw ConfigError("anchor budget must be >= 1");
    if (config.beam_width < 1) throw ConfigError("anchor beam width must be >= 1");
    if (!(config.delta > 0.0 && config.delta < 1.0)) throw ConfigError("anchor delta must be in (0, 1)");

    AnchorSearch search(blackbox, ego, config, rng);
    Explanation ex = base_explanation(ego, "anchors");
    ex.target_class = search.original_class();

    AnchorArm best;
    bool found = config.target_precision <= 0.0;
    if (!found) {
        found = search.certify(best);
    }
    const EdgeList edges = ego.edges();
    std::vector<EdgeList> beam{EdgeList{}};
    for (std::size_t size = 1; !found && size <= edges.size() && !search.exhausted(); ++size) {
        std::set<EdgeList> unique;
        for (const auto& anchor : beam) {
            for (const auto& e : edges) {
                if (std::find(anchor.begin(), anchor.end(), e) != anchor.end()) continue;
                EdgeList grown = anchor;
                grown.insert(std::lower_bound(grown.begin(), grown.end(), e), e);
                unique.insert(std::move(grown));
            }
        }
        std::vector<AnchorArm> arms;
        for (const auto& anchor : unique) {
            arms.push_back({anchor, 0, 0});
        }
        const auto top = search.best_arms(arms, config.beam_width, (config.budget - search.calls()) / 2);
        beam.clear();
        for (const auto i : top) {
            beam.push_back(arms[i].anchor);
            if (arms[i].mean() > best.mean() || best.draws == 0) {
                best = arms[i];
            }
        }
        for (const auto i : top) {
            if (search.certify(arms[i])) {
                best = arms[i];
                found = true;
                break;
            }
            if (arms[i].mean() > best.mean()) {
                best = arms[i];
            }
        }
    }

    std::vector<double> values(edges.size(), 0.0);
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (std::binary_search(best.anchor.begin(), best.anchor.end(), edges[k])) {
            values[k] = 1.0;
        }
    }
    ex.scores = EdgeScores::from_edge_values(ego, values);
    ex.selected_edges = best.anchor;
    ex.provenance["precision"] = best.mean();
    ex.provenance["precision_draws"] = best.draws;
    ex.provenance["target_met"] = found;
    ex.provenance["delta"] = config.delta;
    ex.provenance["calls"] = search.calls();
    if (!found) {
        ex.warnings.push_back("no anchor reached the target precision within the budget");
    }
    return ex;
}

Explanation saliency_explain(const BlackBoxModel& blackbox, const EgoGraph& ego) {
    if (!blackbox.differentiable()) {
        throw UnsupportedModelError("saliency needs gradients; model '" + blackbox.id() + "' is a black box");
    }
    Explanation ex = base_explanation(ego, "saliency");
    const int cls = predict_ego(blackbox, ego).argmax();
    ex.target_class = cls;
    const Matrix grad = blackbox.grad_adjacency(ego.adjacency, ego.features, ego.center, cls);
    std::vector<double> values;
    values.reserve(ex.ego_edges.size());
    for (const auto& e : ex.ego_edges) {
        values.push_back(std::abs(grad(e.u, e.v)));
    }
    if (!values.empty()) {
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        const double low = *lo;
        const double span = *hi - *lo;
        for (double& v : values) {
            v = span > 0.0 ? (v - low) / span : 0.0;
        }
    }
    ex.scores = EdgeScores::from_edge_values(ego, values);
    return ex;
}

Explanation random_explain(const EgoGraph& ego, Rng& rng) {
    Explanation ex = base_explanation(ego, "random");
    std::vector<double> values(ex.ego_edges.size());
    for (double& v : values) {
        v = uniform01(rng);
    }
    ex.scores = EdgeScores::from_edge_values(ego, values);
    return ex;
}

} // namespace relex
