#include "relex/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "relex/error.hpp"

namespace relex {

// ---------------------------------------------------------------------------
// Metrics

std::optional<double> auc_roc(std::span<const double> scores, std::span<const int> positive) {
    if (scores.size() != positive.size()) {
        throw ShapeError("auc_roc: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(positive.size()) + " labels");
    }
    std::vector<double> pos;
    std::vector<double> neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (positive[i] != 0 ? pos : neg).push_back(scores[i]);
    }
    if (pos.empty() || neg.empty()) {
        return std::nullopt;
    }
    double wins = 0.0;
    for (const double p : pos) {
        for (const double q : neg) {
            wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
        }
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::optional<double> auc_roc(const EgoGraph& ego, const EdgeScores& scores, const EdgeList& right_reason_global) {
    const EdgeList edges = ego.edges();
    std::vector<int> positive(edges.size(), 0);
    for (const auto& g : right_reason_global) {
        const auto a = ego.local_index(g.u);
        const auto b = ego.local_index(g.v);
        if (!a || !b || ego.adjacency(*a, *b) == 0.0) {
            throw GraphError("right-reason edge (" + std::to_string(g.u) + "," + std::to_string(g.v) +
                             ") is not in the ego graph");
        }
        const Edge local(static_cast<NodeId>(*a), static_cast<NodeId>(*b));
        positive[static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), local) - edges.begin())] = 1;
    }
    const std::vector<double> values = scores.edge_values(ego);
    return auc_roc(values, positive);
}

std::vector<WeightedPerturbation> enumerate_perturbations(const EgoGraph& ego, double keep_prob) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw ConfigError("keep_prob must be in (0, 1]");
    }
    const EdgeList edges = ego.edges();
    if (edges.size() > 20) {
        throw ConfigError("enumeration is limited to 20 edges, ego has " + std::to_string(edges.size()));
    }
    const std::size_t e_count = edges.size();
    const Index n = ego.size();
    std::map<std::uint32_t, double> outcomes;
    std::vector<char> reached(static_cast<std::size_t>(n));
    for (std::uint32_t coins = 0; coins < (1U << e_count); ++coins) {
        std::fill(reached.begin(), reached.end(), 0);
        reached[ego.center] = 1;
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t k = 0; k < e_count; ++k) {
                if (!(coins >> k & 1U)) continue;
                const auto& e = edges[k];
                if (reached[e.u] != reached[e.v]) {
                    reached[e.u] = reached[e.v] = 1;
                    grew = true;
                }
            }
        }
        std::uint32_t component = 0;
        int kept = 0;
        for (std::size_t k = 0; k < e_count; ++k) {
            if (coins >> k & 1U) {
                ++kept;
                if (reached[edges[k].u]) component |= 1U << k;
            }
        }
        outcomes[component] += std::pow(keep_prob, kept) * std::pow(1.0 - keep_prob, static_cast<int>(e_count) - kept);
    }
    std::vector<WeightedPerturbation> out;
    out.reserve(outcomes.size());
    for (const auto& [component, weight] : outcomes) {
        Matrix adj = Matrix::Zero(n, n);
        for (std::size_t k = 0; k < e_count; ++k) {
            if (component >> k & 1U) {
                const auto& e = edges[k];
                adj(e.u, e.v) = adj(e.v, e.u) = ego.adjacency(e.u, e.v);
            }
        }
        out.push_back({std::move(adj), weight});
    }
    return out;
}

std::vector<double> infidelity_weighted(const BlackBoxModel& blackbox, const EgoGraph& ego,
                                        std::span<const EdgeScores> scores,
                                        std::span<const WeightedPerturbation> perturbations) {
    const EdgeList edges = ego.edges();
    const ClassDistribution original = predict_ego(blackbox, ego);
    const int cls = original.argmax();
    const double f0 = original[cls];
    std::vector<double> out(scores.size(), 0.0);
    for (const auto& pert : perturbations) {
        const double change = f0 - predict_ego(blackbox, ego, pert.adjacency)[cls];
        for (std::size_t s = 0; s < scores.size(); ++s) {
            double attributed = 0.0;
            for (const auto& e : edges) {
                const double a = ego.adjacency(e.u, e.v);
                attributed += (a - pert.adjacency(e.u, e.v)) * a * scores[s].at(e);
            }
            const double gap = attributed - change;
            out[s] += pert.weight * gap * gap;
        }
    }
    return out;
}

std::vector<double> infidelity(const BlackBoxModel& blackbox, const EgoGraph& ego,
                               std::span<const EdgeScores> scores, int n, double keep_prob, Rng& rng) {
    if (n < 1) {
        throw ConfigError("infidelity needs n >= 1");
    }
    std::vector<WeightedPerturbation> draws;
    draws.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        draws.push_back({sample_perturbation(ego, keep_prob, rng), 1.0 / static_cast<double>(n)});
    }
    return infidelity_weighted(blackbox, ego, scores, draws);
}

double infidelity(const BlackBoxModel& blackbox, const EgoGraph& ego, const EdgeScores& scores, int n,
                  double keep_prob, Rng& rng) {
    return infidelity(blackbox, ego, std::span<const EdgeScores>(&scores, 1), n, keep_prob, rng).front();
}

double infidelity_exact(const BlackBoxModel& blackbox, const EgoGraph& ego, const EdgeScores& scores,
                        double keep_prob) {
    const auto perts = enumerate_perturbations(ego, keep_prob);
    return infidelity_weighted(blackbox, ego, std::span<const EdgeScores>(&scores, 1), perts).front();
}

// ---------------------------------------------------------------------------
// Benchmark

std::string to_string(Method method) {
    switch (method) {
    case Method::relex_sigmoid: return "relex-sigmoid";
    case Method::relex_gumbel: return "relex-gumbel";
    case Method::saliency: return "saliency";
    case Method::anchors: return "anchors";
    case Method::random: return "random";
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '_', '-');
    for (const Method m : {Method::relex_sigmoid, Method::relex_gumbel, Method::saliency, Method::anchors,
                           Method::random}) {
        if (to_string(m) == key) return m;
    }
    throw ConfigError("unknown method '" + name +
                      "' (expected relex-sigmoid, relex-gumbel, saliency, anchors or random)");
}

namespace {

int method_rank(const std::string& name) {
    try {
        return static_cast<int>(parse_method(name));
    } catch (const ConfigError&) {
        return 100;
    }
}

std::string format_optional(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

std::optional<double> parse_optional(const std::string& field) {
    if (field == "NA" || field.empty()) return std::nullopt;
    return std::stod(field);
}

struct Moments {
    double mean = 0.0;
    double std = 0.0;
    int count = 0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    m.count = static_cast<int>(xs.size());
    if (xs.empty()) return m;
    for (double x : xs) m.mean += x;
    m.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

void EvalReport::sort() {
    std::stable_sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
        if (a.node != b.node) return a.node < b.node;
        return method_rank(a.method) < method_rank(b.method);
    });
}

std::vector<MethodSummary> EvalReport::summary() const {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
    std::vector<std::string> order;
    for (const auto& r : records) {
        if (!values.count(r.method)) order.push_back(r.method);
        auto& [aucs, infs] = values[r.method];
        if (r.auc) aucs.push_back(*r.auc);
        if (r.infidelity) infs.push_back(*r.infidelity);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const std::string& a, const std::string& b) { return method_rank(a) < method_rank(b); });
    std::vector<MethodSummary> out;
    for (const auto& method : order) {
        MethodSummary s;
        s.method = method;
        const auto& [aucs, infs] = values[method];
        const Moments a = moments(aucs);
        const Moments f = moments(infs);
        s.auc_mean = a.mean;
        s.auc_std = a.std;
        s.auc_count = a.count;
        s.infidelity_mean = f.mean;
        s.infidelity_std = f.std;
        s.infidelity_count = f.count;
        for (const auto& r : records) {
            if (r.method != method) continue;
            if (!r.error.empty()) {
                ++s.errors;
            } else if (!r.auc) {
                ++s.auc_undefined;
            }
        }
        out.push_back(s);
    }
    return out;
}

std::optional<MethodSummary> EvalReport::summary_for(const std::string& method) const {
    for (const auto& s : summary()) {
        if (s.method == method) return s;
    }
    return std::nullopt;
}

std::string EvalReport::to_csv(bool timing) const {
    std::ostringstream out;
    out << "node,class,method,auc,infidelity,fidelity,calls,seconds\n";
    for (const auto& r : records) {
        out << r.node << ',' << r.cls << ',' << r.method << ',' << format_optional(r.auc) << ','
            << format_optional(r.infidelity) << ',' << format_optional(r.fidelity) << ',' << r.calls << ','
            << format_optional(timing ? r.seconds : 0.0) << '\n';
    }
    return out.str();
}

EvalReport parse_report_csv(const std::string& text) {
    EvalReport report;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("node,", 0) == 0) continue;
        }
        std::vector<std::string> fields;
        std::istringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 8) {
            throw ConfigError("report line " + std::to_string(line_no) + ": expected 8 fields");
        }
        try {
            EvalRecord r;
            r.node = std::stoi(fields[0]);
            r.cls = std::stoi(fields[1]);
            r.method = fields[2];
            r.auc = parse_optional(fields[3]);
            r.infidelity = parse_optional(fields[4]);
            r.fidelity = parse_optional(fields[5]);
            r.calls = std::stol(fields[6]);
            r.seconds = parse_optional(fields[7]).value_or(0.0);
            report.records.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw ConfigError("report line " + std::to_string(line_no) + ": malformed number");
        }
    }
    return report;
}

std::string EvalReport::summary_table(const std::string& title) const {
    std::ostringstream out;
    char buf[256];
    out << title << '\n';
    std::snprintf(buf, sizeof buf, "%-15s %-19s %-19s %6s %9s %6s\n", "method", "AUC", "infidelity", "nodes",
                  "undefined", "errors");
    out << buf;
    for (const auto& s : summary()) {
        char auc[64];
        char inf[64];
        if (s.auc_count > 0) {
            std::snprintf(auc, sizeof auc, "%.4f +/- %.4f", s.auc_mean, s.auc_std);
        } else {
            std::snprintf(auc, sizeof auc, "NA");
        }
        if (s.infidelity_count > 0) {
            std::snprintf(inf, sizeof inf, "%.4f +/- %.4f", s.infidelity_mean, s.infidelity_std);
        } else {
            std::snprintf(inf, sizeof inf, "NA");
        }
        std::snprintf(buf, sizeof buf, "%-15s %-19s %-19s %6d %9d %6d\n", s.method.c_str(), auc, inf,
                      s.auc_count, s.auc_undefined, s.errors);
        out << buf;
    }
    return out.str();
}

int EvalReport::error_count() const {
    return static_cast<int>(std::count_if(records.begin(), records.end(),
                                          [](const EvalRecord& r) { return !r.error.empty(); }));
}

std::vector<NodeId> select_nodes(const LabeledGraph& labeled, const BenchmarkConfig& config) {
    const Graph& g = labeled.graph;
    std::vector<NodeId> pool;
    if (!config.nodes.empty()) {
        for (const NodeId v : config.nodes) {
            if (v < 0 || v >= g.num_nodes()) {
                throw GraphError("benchmark node " + std::to_string(v) + " out of range");
            }
        }
        pool = config.nodes;
        std::sort(pool.begin(), pool.end());
        pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
        return pool;
    }
    if (!g.has_motifs()) {
        throw GraphError("benchmark needs motif annotations to pick nodes");
    }
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        if (g.motifs()[v] == 0) continue;
        if (!config.classes.empty() &&
            std::find(config.classes.begin(), config.classes.end(), g.labels().at(v)) == config.classes.end()) {
            continue;
        }
        pool.push_back(v);
    }
    if (config.node_cap >= 0 && static_cast<int>(pool.size()) > config.node_cap) {
        Rng rng = derive_rng(config.seed, 0x6e6f646573ULL);
        for (int i = 0; i < config.node_cap; ++i) {
            const auto j = static_cast<std::size_t>(i) + uniform_index(rng, pool.size() - static_cast<std::size_t>(i));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(config.node_cap));
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::vector<EvalRecord> evaluate_node(const LabeledGraph& labeled, const BlackBoxModel& blackbox,
                                      const BenchmarkConfig& config, NodeId node) {
    Rng node_rng = derive_rng(config.seed, static_cast<std::uint64_t>(node));
    const std::uint64_t node_seed = node_rng();
    const EgoGraph ego = extract_ego(labeled.graph, node, config.hops);
    const int cls = predict_ego(blackbox, ego).argmax();
    const EdgeList truth = right_reason(labeled, node, config.hops);

    struct Outcome {
        Method method;
        std::optional<Explanation> explanation;
        std::optional<double> fidelity;
        long calls = 0;
        double seconds = 0.0;
        std::string error;
    };
    std::vector<Outcome> outcomes;
    for (const Method m : config.methods) {
        outcomes.push_back({m, std::nullopt, std::nullopt, 0, 0.0, {}});
    }

    std::vector<MaskKind> kinds;
    for (const Method m : config.methods) {
        if (m == Method::relex_sigmoid) kinds.push_back(MaskKind::sigmoid);
        if (m == Method::relex_gumbel) kinds.push_back(MaskKind::gumbel);
    }
    if (!kinds.empty()) {
        const auto start = std::chrono::steady_clock::now();
        CountingModel counting(blackbox);
        Rng rng = derive_rng(node_seed, 1);
        try {
            RelexConfig relex = config.relex;
            if (config.right_reason_top_k && !truth.empty()) {
                relex.mask.binarize = BinarizeStrategy::top(truth.size());
            }
            RelexResult result = explain_relex(counting, ego, node, relex, kinds, 1, rng);
            const double elapsed = seconds_since(start);
            for (auto& out : outcomes) {
                const bool sig = out.method == Method::relex_sigmoid;
                if (!sig && out.method != Method::relex_gumbel) continue;
                for (auto& ex : result.explanations) {
                    if (ex.method == "relex-" + std::string(sig ? "sigmoid" : "gumbel")) {
                        out.explanation = ex;
                    }
                }
                out.fidelity = result.surrogate.fidelity;
                out.calls = counting.calls();
                out.seconds = elapsed;
            }
        } catch (const Error& e) {
            for (auto& out : outcomes) {
                if (out.method == Method::relex_sigmoid || out.method == Method::relex_gumbel) {
                    out.error = e.what();
                    out.calls = counting.calls();
                }
            }
        }
    }
    for (auto& out : outcomes) {
        if (out.method == Method::relex_sigmoid || out.method == Method::relex_gumbel) continue;
        const auto start = std::chrono::steady_clock::now();
        CountingModel counting(blackbox);
        try {
            if (out.method == Method::saliency) {
                out.explanation = saliency_explain(counting, ego);
            } else if (out.method == Method::anchors) {
                Rng rng = derive_rng(node_seed, 2);
                out.explanation = relational_anchors(counting, ego, config.anchors, rng);
            } else {
                Rng rng = derive_rng(node_seed, 3);
                out.explanation = random_explain(ego, rng);
            }
        } catch (const Error& e) {
            out.error = e.what();
        }
        out.calls = counting.calls();
        out.seconds = seconds_since(start);
    }

    // Every method is scored on the same perturbation draws.
    std::vector<EdgeScores> scored;
    for (const auto& out : outcomes) {
        if (out.explanation) scored.push_back(out.explanation->scores);
    }
    std::vector<double> infid;
    if (!scored.empty()) {
        Rng rng = derive_rng(node_seed, 4);
        infid = infidelity(blackbox, ego, scored, config.infidelity_samples, config.relex.keep_prob, rng);
    }

    std::vector<EvalRecord> records;
    std::size_t k = 0;
    for (auto& out : outcomes) {
        EvalRecord r;
        r.node = node;
        r.cls = cls;
        r.method = to_string(out.method);
        r.fidelity = out.fidelity;
        r.calls = out.calls;
        r.seconds = out.seconds;
        r.error = out.error;
        if (out.explanation) {
            r.auc = auc_roc(ego, out.explanation->scores, truth);
            r.infidelity = infid[k++];
        } else {
            r.fidelity.reset();
        }
        records.push_back(std::move(r));
    }
    return records;
}

EvalReport run_benchmark(const LabeledGraph& labeled, const BlackBoxModel& blackbox, const BenchmarkConfig& config,
                         const std::set<NodeId>& skip,
                         const std::function<void(const std::vector<EvalRecord>&)>& on_node) {
    if (config.methods.empty()) {
        throw ConfigError("benchmark needs at least one method");
    }
    std::vector<NodeId> nodes;
    for (const NodeId v : select_nodes(labeled, config)) {
        if (!skip.count(v)) nodes.push_back(v);
    }
    std::vector<std::vector<EvalRecord>> results(nodes.size());
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < nodes.size(); i = next++) {
            std::vector<EvalRecord> records;
            try {
                records = evaluate_node(labeled, blackbox, config, nodes[i]);
            } catch (const Error& e) {
                for (const Method m : config.methods) {
                    EvalRecord r;
                    r.node = nodes[i];
                    r.method = to_string(m);
                    r.error = e.what();
                    records.push_back(std::move(r));
                }
            }
            std::lock_guard lock(mutex);
            if (on_node) on_node(records);
            results[i] = std::move(records);
        }
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(nodes.size())));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    EvalReport report;
    for (auto& rs : results) {
        for (auto& r : rs) report.records.push_back(std::move(r));
    }
    report.sort();
    return report;
}

} // namespace relex
