#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relex/error.hpp"
#include "relex/eval.hpp"
#include "support.hpp"

using namespace relex;
using relex::testing::EdgePairs;

namespace {

EgoGraph random_ego(Rng& rng, int n, int m) {
    const auto edges = relex::testing::random_connected_edges(n, m, rng);
    return relex::testing::whole_ego(relex::testing::random_feature_graph(n, edges, 2, rng), 0);
}

EdgeScores random_scores(const EgoGraph& ego, Rng& rng, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(ego.num_edges()));
    for (double& x : v) x = scale * uniform01(rng);
    return EdgeScores::from_edge_values(ego, v);
}

struct SmallBenchmark {
    LabeledGraph data;
    GcnModel model;
};

const SmallBenchmark& small_benchmark() {
    static const SmallBenchmark bench = [] {
        SynthConfig c;
        c.seed = 5;
        c.tree_height = 4;
        c.motif_count = 6;
        SmallBenchmark b{gen_tree_grid(c), {}};
        GcnHyper h;
        h.epochs = 100;
        h.seed = 1;
        b.model = train_gcn(b.data.graph, std::vector<bool>(static_cast<std::size_t>(b.data.graph.num_nodes()), true), h);
        return b;
    }();
    return bench;
}

BenchmarkConfig small_config() {
    BenchmarkConfig c;
    c.node_cap = 3;
    c.relex.samples = 60;
    c.relex.surrogate.epochs = 20;
    c.relex.mask.iterations = 40;
    c.infidelity_samples = 20;
    c.seed = 9;
    return c;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("auc examples") {
    const std::vector<double> truth{1, 0, 1, 0};
    const std::vector<int> pos{1, 0, 1, 0};
    CHECK(*auc_roc(truth, pos) == 1.0);
    const std::vector<double> inverted{0, 1, 0, 1};
    CHECK(*auc_roc(inverted, pos) == 0.0);
    const std::vector<double> s{0.9, 0.4, 0.1};
    const std::vector<int> p{1, 0, 1};
    CHECK(*auc_roc(s, p) == doctest::Approx(0.5));
    const std::vector<int> all{1, 1, 1};
    CHECK_FALSE(auc_roc(s, all).has_value());
    const std::vector<int> none{0, 0, 0};
    CHECK_FALSE(auc_roc(s, none).has_value());
}

TEST_CASE("rank auc equals the swept ROC area") {
    Rng rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + uniform_index(rng, 30);
        std::vector<double> scores(n);
        std::vector<int> positive(n);
        // Coarse scores produce ties.
        const bool coarse = trial % 2 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = coarse ? static_cast<double>(uniform_index(rng, 4)) / 4.0 : uniform01(rng);
            positive[i] = uniform01(rng) < 0.4 ? 1 : 0;
        }
        positive[0] = 1;
        positive[1] = 0;
        const auto auc = auc_roc(scores, positive);
        REQUIRE(auc.has_value());
        CHECK(std::abs(*auc - relex::testing::sweep_auc(scores, positive)) < 1e-9);
    }
}

TEST_CASE("auc on an ego graph") {
    const Graph g = relex::testing::plain_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    const EgoGraph ego = extract_ego(g, 1, 2);
    const std::vector<double> v{0.9, 0.4, 0.1};
    const auto scores = EdgeScores::from_edge_values(ego, v);
    CHECK(*auc_roc(ego, scores, {Edge(0, 1), Edge(2, 3)}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc_roc(ego, scores, {Edge(0, 3)}), GraphError);
}

TEST_CASE("perturbation enumeration") {
    Rng rng(2);
    for (int g = 0; g < 10; ++g) {
        const EgoGraph ego = random_ego(rng, 6, 8);
        const double keep = 0.2 + 0.6 * uniform01(rng);
        const auto outcomes = enumerate_perturbations(ego, keep);
        double total = 0.0;
        for (const auto& o : outcomes) total += o.weight;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        const auto oracle = relex::testing::sampler_distribution(ego, keep);
        CHECK(outcomes.size() == oracle.size());
        for (const auto& o : outcomes) {
            CHECK(o.weight == doctest::Approx(oracle.at(relex::testing::edge_key(ego, o.adjacency))));
        }
    }
    const EgoGraph big = random_ego(rng, 12, 21);
    CHECK_THROWS_AS(enumerate_perturbations(big, 0.5), ConfigError);
}

TEST_CASE("infidelity examples") {
    Rng rng(3);
    const EgoGraph ego = random_ego(rng, 5, 6);
    const relex::testing::ConstantModel constant({0.3, 0.7});
    CHECK(infidelity(constant, ego, EdgeScores::zeros(ego), 50, 0.5, rng) == 0.0);
    const GcnModel bb = relex::testing::random_gcn(2, 6, 2, 1);
    const EdgeScores s = random_scores(ego, rng, 0.1);
    const EdgeScores scaled = EdgeScores::from_edge_values(ego, [&] {
        auto v = s.edge_values(ego);
        for (double& x : v) x *= 10.0;
        return v;
    }());
    CHECK(infidelity_exact(bb, ego, scaled, 0.5) != doctest::Approx(infidelity_exact(bb, ego, s, 0.5)));
}

TEST_CASE("exact infidelity matches enumeration on small egos") {
    Rng rng(4);
    const Graph one = relex::testing::random_feature_graph(2, {{0, 1}}, 2, rng);
    const Graph two = relex::testing::random_feature_graph(3, {{0, 1}, {1, 2}}, 2, rng);
    const Graph tri = relex::testing::random_feature_graph(3, {{0, 1}, {0, 2}}, 2, rng);
    for (const Graph* g : {&one, &two, &tri}) {
        const EgoGraph ego = relex::testing::whole_ego(*g, 0);
        for (int trial = 0; trial < 5; ++trial) {
            const GcnModel bb = relex::testing::random_gcn(2, 6, 2, 10 + trial);
            const EdgeScores s = random_scores(ego, rng);
            const double keep = 0.3 + 0.4 * uniform01(rng);
            CHECK(std::abs(infidelity_exact(bb, ego, s, keep) -
                           relex::testing::brute_infidelity(bb, ego, s.values(), keep)) < 1e-9);
        }
    }
}

TEST_CASE("single-edge infidelity by hand") {
    Rng rng(5);
    const EgoGraph ego = relex::testing::whole_ego(relex::testing::random_feature_graph(2, {{0, 1}}, 2, rng), 0);
    const GcnModel bb = relex::testing::random_gcn(2, 6, 2, 3);
    const std::vector<double> v{0.4};
    const auto scores = EdgeScores::from_edge_values(ego, v);
    const int cls = predict_ego(bb, ego).argmax();
    const double drop = predict_ego(bb, ego)[cls] - predict_ego(bb, ego, Matrix::Zero(2, 2))[cls];
    const double keep = 0.7;
    const double expected = (1.0 - keep) * (0.4 - drop) * (0.4 - drop);
    CHECK(infidelity_exact(bb, ego, scores, keep) == doctest::Approx(expected).epsilon(1e-12));
    // Keeping every edge forces the zero-removal outcome.
    CHECK(std::abs(infidelity(bb, ego, scores, 1000, 1.0, rng)) < 1e-9);
    // Monte-Carlo converges to the two-outcome expectation.
    CHECK(infidelity(bb, ego, scores, 200000, keep, rng) == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("infidelity properties") {
    Rng rng(6);
    for (int g = 0; g < 5; ++g) {
        const EgoGraph ego = random_ego(rng, 6, 8);
        const GcnModel bb = relex::testing::random_gcn(2, 6, 3, 20 + g);
        CHECK(infidelity(bb, ego, EdgeScores::zeros(ego), 30, 0.5, rng) >= 0.0);
        // Shared draws: the batched form equals separate calls on the same stream.
        const std::vector<EdgeScores> sets{random_scores(ego, rng), random_scores(ego, rng)};
        Rng a(7);
        const auto both = infidelity(bb, ego, sets, 40, 0.5, a);
        Rng b(7);
        CHECK(both[0] == doctest::Approx(infidelity(bb, ego, sets[0], 40, 0.5, b)));
        // Order of the weighted outcomes does not matter.
        auto outcomes = enumerate_perturbations(ego, 0.5);
        const auto forward = infidelity_weighted(bb, ego, sets, outcomes);
        std::reverse(outcomes.begin(), outcomes.end());
        const auto backward = infidelity_weighted(bb, ego, sets, outcomes);
        CHECK(forward[0] == doctest::Approx(backward[0]).epsilon(1e-12));
        CHECK(forward[1] == doctest::Approx(backward[1]).epsilon(1e-12));
    }
}

TEST_CASE("methods parse") {
    CHECK(parse_method("relex-gumbel") == Method::relex_gumbel);
    CHECK(parse_method("relex_sigmoid") == Method::relex_sigmoid);
    CHECK(parse_method(to_string(Method::anchors)) == Method::anchors);
    CHECK_THROWS_AS(parse_method("gnnexplainer"), ConfigError);
}

TEST_CASE("report csv round trip and summary") {
    EvalReport r;
    r.records.push_back({12, 1, "relex-gumbel", 0.75, 0.01, 0.9, 0, 1.5, ""});
    r.records.push_back({13, 1, "relex-gumbel", std::nullopt, 0.03, 0.8, 0, 0.5, ""});
    r.records.push_back({14, 2, "relex-gumbel", 0.25, 0.02, 1.0, 0, 0.5, ""});
    r.records.push_back({12, 1, "anchors", std::nullopt, std::nullopt, std::nullopt, 500, 0.1, "budget"});
    const std::string csv = r.to_csv(true);
    CHECK(csv.substr(0, csv.find('\n')) == "node,class,method,auc,infidelity,fidelity,calls,seconds");
    const EvalReport back = parse_report_csv(csv);
    REQUIRE(back.records.size() == 4);
    CHECK(back.to_csv(true) == csv);
    CHECK(r.to_csv(false).find("1.5") == std::string::npos);

    const auto gumbel = *back.summary_for("relex-gumbel");
    CHECK(gumbel.auc_count == 2);
    CHECK(gumbel.auc_undefined == 1);
    CHECK(gumbel.auc_mean == doctest::Approx(0.5));
    CHECK(gumbel.auc_std == doctest::Approx(std::sqrt(0.125)));
    CHECK(gumbel.infidelity_mean == doctest::Approx(0.02));
    CHECK(r.summary_for("anchors")->errors == 1);
    CHECK(r.error_count() == 1);
    CHECK_FALSE(back.summary_for("saliency").has_value());
    CHECK(back.summary_table("demo").find("relex-gumbel") != std::string::npos);
    CHECK_THROWS(parse_report_csv("node,class\n1,2\n"));
}

TEST_CASE("node selection") {
    const auto& b = small_benchmark();
    BenchmarkConfig c;
    c.node_cap = 5;
    c.seed = 1;
    const auto nodes = select_nodes(b.data, c);
    CHECK(nodes.size() == 5);
    CHECK(std::is_sorted(nodes.begin(), nodes.end()));
    for (const NodeId v : nodes) CHECK(b.data.class_of()[static_cast<std::size_t>(v)] != 0);
    CHECK(select_nodes(b.data, c) == nodes);
    c.nodes = {3, 1};
    CHECK(select_nodes(b.data, c) == std::vector<NodeId>{1, 3});
    c.nodes = {};
    c.node_cap = 100000;
    const auto all = select_nodes(b.data, c);
    CHECK(static_cast<long>(all.size()) ==
          std::count_if(b.data.class_of().begin(), b.data.class_of().end(), [](int k) { return k != 0; }));
}

TEST_CASE("minimal benchmark run") {
    const auto& b = small_benchmark();
    BenchmarkConfig c = small_config();
    c.methods = {Method::relex_gumbel};
    c.node_cap = 1;
    const EvalReport r = run_benchmark(b.data, b.model, c);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].method == "relex-gumbel");
    CHECK(r.records[0].error.empty());
    REQUIRE(r.records[0].auc.has_value());
    CHECK(*r.records[0].auc >= 0.0);
    CHECK(*r.records[0].auc <= 1.0);
    CHECK(*r.records[0].infidelity >= 0.0);
}

TEST_CASE("benchmark is deterministic across job counts") {
    const auto& b = small_benchmark();
    BenchmarkConfig c = small_config();
    c.methods = {Method::relex_sigmoid, Method::saliency, Method::random};
    const std::string serial = run_benchmark(b.data, b.model, c).to_csv();
    CHECK(run_benchmark(b.data, b.model, c).to_csv() == serial);
    c.jobs = 3;
    std::vector<NodeId> seen;
    const std::string parallel =
        run_benchmark(b.data, b.model, c, {}, [&](const std::vector<EvalRecord>& rs) { seen.push_back(rs[0].node); })
            .to_csv();
    CHECK(parallel == serial);
    CHECK(seen.size() == 3);
}

TEST_CASE("benchmark records errors and skips nodes") {
    const auto& b = small_benchmark();
    BenchmarkConfig c = small_config();
    c.methods = {Method::saliency, Method::random};
    const auto rules = make_rule_model(b.data.graph, {1.0, 0.5, 0.25}, 0.5, 1e-3, 1);
    const EvalReport r = run_benchmark(b.data, rules, c);
    CHECK(r.records.size() == 6);
    CHECK(r.error_count() == 3);
    for (const auto& rec : r.records) {
        CHECK((rec.method == "saliency") == !rec.error.empty());
    }
    const auto nodes = select_nodes(b.data, c);
    const EvalReport rest = run_benchmark(b.data, rules, c, {nodes[0]});
    CHECK(rest.records.size() == 4);
}

}
