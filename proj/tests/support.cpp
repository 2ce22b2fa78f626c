#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace relex::testing {

Graph plain_graph(int n, const EdgePairs& edges) {
    return build_graph(edges, constant_features(n));
}

Graph random_feature_graph(int n, const EdgePairs& edges, int dim, Rng& rng) {
    Matrix x(n, dim);
    for (Index i = 0; i < x.size(); ++i) {
        x(i) = uniform01(rng);
    }
    return build_graph(edges, x);
}

EgoGraph whole_ego(const Graph& graph, NodeId center) {
    return extract_ego(graph, center, std::max(1, graph.num_nodes()));
}

EdgePairs random_connected_edges(int n, int m, Rng& rng) {
    std::vector<std::pair<NodeId, NodeId>> out;
    std::set<std::pair<NodeId, NodeId>> seen;
    for (NodeId v = 1; v < n; ++v) {
        const auto u = static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(v)));
        out.emplace_back(u, v);
        seen.emplace(u, v);
    }
    const int max_edges = n * (n - 1) / 2;
    m = std::min(m, max_edges);
    while (static_cast<int>(out.size()) < m) {
        auto a = static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        auto b = static_cast<NodeId>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (seen.emplace(a, b).second) out.emplace_back(a, b);
    }
    return out;
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    Vector g(x.size());
    Vector probe = x;
    for (Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double up = f(probe);
        probe(i) = x(i) - h;
        const double down = f(probe);
        probe(i) = x(i);
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

double relative_error(const Vector& a, const Vector& b, double floor) {
    const double scale = std::max({a.norm(), b.norm(), floor});
    return (a - b).norm() / scale;
}

Vector flatten(std::span<const Matrix> parts) {
    Index total = 0;
    for (const auto& p : parts) total += p.size();
    Vector out(total);
    Index at = 0;
    for (const auto& p : parts) {
        for (Index i = 0; i < p.size(); ++i) out(at++) = p(i);
    }
    return out;
}

std::vector<Matrix> unflatten(const Vector& flat, std::span<const Matrix> shapes) {
    std::vector<Matrix> out;
    Index at = 0;
    for (const auto& s : shapes) {
        Matrix m(s.rows(), s.cols());
        for (Index i = 0; i < m.size(); ++i) m(i) = flat(at++);
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<int> edge_key(const EgoGraph& ego, const Matrix& adjacency) {
    std::vector<int> key;
    for (const auto& e : ego.edges()) {
        key.push_back(adjacency(e.u, e.v) != 0.0 ? 1 : 0);
    }
    return key;
}

std::map<std::vector<int>, double> sampler_distribution(const EgoGraph& ego, double keep_prob) {
    const EdgeList edges = ego.edges();
    const auto m = edges.size();
    const auto n = static_cast<std::size_t>(ego.size());
    std::map<std::vector<int>, double> out;
    for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << m); ++pattern) {
        double weight = 1.0;
        for (std::size_t k = 0; k < m; ++k) {
            weight *= (pattern >> k) & 1U ? keep_prob : 1.0 - keep_prob;
        }
        // Flood fill from the center over kept edges.
        std::vector<char> reached(n, 0);
        reached[static_cast<std::size_t>(ego.center)] = 1;
        for (bool grew = true; grew;) {
            grew = false;
            for (std::size_t k = 0; k < m; ++k) {
                if (!((pattern >> k) & 1U)) continue;
                const auto u = static_cast<std::size_t>(edges[k].u);
                const auto v = static_cast<std::size_t>(edges[k].v);
                if (reached[u] != reached[v]) {
                    reached[u] = reached[v] = 1;
                    grew = true;
                }
            }
        }
        std::vector<int> key(m, 0);
        for (std::size_t k = 0; k < m; ++k) {
            key[k] = ((pattern >> k) & 1U) && reached[static_cast<std::size_t>(edges[k].u)] ? 1 : 0;
        }
        out[key] += weight;
    }
    return out;
}

double sweep_auc(std::span<const double> scores, std::span<const int> positive) {
    std::vector<double> thresholds(scores.begin(), scores.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    const double pos = static_cast<double>(std::count(positive.begin(), positive.end(), 1));
    const double neg = static_cast<double>(positive.size()) - pos;
    double area = 0.0;
    double prev_tpr = 0.0;
    double prev_fpr = 0.0;
    for (const double t : thresholds) {
        double tp = 0.0;
        double fp = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) (positive[i] ? tp : fp) += 1.0;
        }
        const double tpr = tp / pos;
        const double fpr = fp / neg;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    return area;
}

double brute_infidelity(const BlackBoxModel& model, const EgoGraph& ego, const Matrix& scores, double keep_prob) {
    const EdgeList edges = ego.edges();
    const int cls = predict_ego(model, ego).argmax();
    const double full = predict_ego(model, ego)[cls];
    double total = 0.0;
    for (const auto& [key, weight] : sampler_distribution(ego, keep_prob)) {
        Matrix a = Matrix::Zero(ego.size(), ego.size());
        double removed = 0.0;
        for (std::size_t k = 0; k < edges.size(); ++k) {
            if (key[k]) {
                a(edges[k].u, edges[k].v) = a(edges[k].v, edges[k].u) = 1.0;
            } else {
                removed += scores(edges[k].u, edges[k].v);
            }
        }
        const double drop = full - predict_ego(model, ego, a)[cls];
        total += weight * (removed - drop) * (removed - drop);
    }
    return total;
}

ClassDistribution GateModel::predict(const Matrix& adjacency, const Matrix&, Index, std::span<const NodeId>) const {
    bool open = true;
    for (const auto& e : gates_) {
        open = open && adjacency(e.u, e.v) != 0.0;
    }
    const double p = open ? high_ : 1.0 - high_;
    return {{1.0 - p, p}};
}

ClassDistribution DegreeModel::predict(const Matrix& adjacency, const Matrix&, Index node,
                                       std::span<const NodeId>) const {
    const double degree = adjacency.row(node).sum();
    const double p = 1.0 / (1.0 + std::exp(-slope_ * (degree - offset_)));
    return {{1.0 - p, p}};
}

GcnModel random_gcn(int feature_dim, int hidden, int classes, std::uint64_t seed, double scale) {
    GcnModel model = GcnModel::initialize(feature_dim, hidden, classes, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& w : model.weights()) w *= scale;
    for (auto& b : model.biases()) {
        for (Index i = 0; i < b.size(); ++i) b(i) = 0.2 * (2.0 * uniform01(rng) - 1.0);
    }
    return model;
}

} // namespace relex::testing
