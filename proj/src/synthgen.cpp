#include "relex/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "relex/error.hpp"
#include "relex/random.hpp"

namespace relex {

DatasetKind parse_dataset_kind(const std::string& name) {
    if (name == "tree-grid") return DatasetKind::tree_grid;
    if (name == "tree-ba") return DatasetKind::tree_ba;
    if (name == "tree-grid-ba") return DatasetKind::tree_grid_ba;
    throw ConfigError("unknown dataset '" + name + "' (expected tree-grid, tree-ba or tree-grid-ba)");
}

std::string to_string(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::tree_grid: return "tree-grid";
    case DatasetKind::tree_ba: return "tree-ba";
    case DatasetKind::tree_grid_ba: return "tree-grid-ba";
    }
    return "unknown";
}

FeatureKind parse_feature_kind(const std::string& name) {
    if (name == "constant") return FeatureKind::constant;
    if (name == "degree") return FeatureKind::degree;
    throw ConfigError("unknown feature kind '" + name + "' (expected constant or degree)");
}

std::string to_string(FeatureKind kind) {
    return kind == FeatureKind::constant ? "constant" : "degree";
}

void SynthConfig::validate() const {
    if (tree_height < 2) throw ConfigError("tree_height must be >= 2");
    if (grid_side < 2) throw ConfigError("grid_side must be >= 2");
    if (ba_size < 3) throw ConfigError("ba_size must be >= 3");
    if (ba_attach < 1 || ba_attach >= ba_size) throw ConfigError("ba_attach must satisfy 1 <= ba_attach < ba_size");
    if (motif_count < 1) throw ConfigError("motif_count must be >= 1");
    if (max_degree < 1) throw ConfigError("max_degree must be >= 1");
}

int LabeledGraph::num_classes() const {
    int n = 0;
    for (int c : graph.labels()) {
        n = std::max(n, c + 1);
    }
    return n;
}

EdgeList barabasi_albert_edges(int size, int attach, std::uint64_t seed) {
    Rng rng(seed);
    EdgeList edges;
    std::vector<int> repeated;
    for (int t = 1; t <= attach; ++t) {
        edges.emplace_back(0, t);
        repeated.push_back(0);
        repeated.push_back(t);
    }
    for (int source = attach + 1; source < size; ++source) {
        std::set<int> targets;
        while (static_cast<int>(targets.size()) < attach) {
            targets.insert(repeated[uniform_index(rng, repeated.size())]);
        }
        for (int t : targets) {
            edges.emplace_back(source, t);
            repeated.push_back(t);
            repeated.push_back(source);
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

namespace {

enum class MotifKind { grid, ba };

struct Builder {
    int num_nodes = 0;
    std::vector<int> labels;
    std::vector<int> motifs;
    std::set<Edge> all_edges;
    LabeledGraph out;
    std::vector<std::vector<NodeId>> members; // per motif id

    NodeId add_nodes(int count, int cls, int motif) {
        const NodeId first = num_nodes;
        if (static_cast<int>(members.size()) <= motif) {
            members.resize(motif + 1);
        }
        for (int i = 0; i < count; ++i) {
            labels.push_back(cls);
            motifs.push_back(motif);
            members[motif].push_back(first + i);
        }
        num_nodes += count;
        return first;
    }

    void add_motif_edge(int motif, NodeId a, NodeId b) {
        all_edges.insert(Edge(a, b));
        out.motif_edges[motif].emplace_back(a, b);
    }
};

void build_tree(Builder& b, int height) {
    const int count = (1 << (height + 1)) - 1;
    b.add_nodes(count, 0, 0);
    for (int i = 1; i < count; ++i) {
        b.add_motif_edge(0, (i - 1) / 2, i);
    }
}

void build_grid(Builder& b, int side, int cls, int motif) {
    const NodeId base = b.add_nodes(side * side, cls, motif);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const NodeId id = base + r * side + c;
            if (c + 1 < side) b.add_motif_edge(motif, id, id + 1);
            if (r + 1 < side) b.add_motif_edge(motif, id, id + side);
        }
    }
}

void build_ba(Builder& b, const SynthConfig& config, int cls, int motif) {
    const NodeId base = b.add_nodes(config.ba_size, cls, motif);
    for (const auto& e : barabasi_albert_edges(config.ba_size, config.ba_attach,
                                               splitmix64(config.seed ^ (0x5851f42d4c957f2dULL * (motif + 1))))) {
        b.add_motif_edge(motif, base + e.u, base + e.v);
    }
}

LabeledGraph assemble(const SynthConfig& config, const std::vector<std::pair<MotifKind, int>>& motif_plan,
                      bool noise_between_any_motifs) {
    config.validate();
    Builder b;
    build_tree(b, config.tree_height);
    int motif = 1;
    for (const auto& [kind, cls] : motif_plan) {
        if (kind == MotifKind::grid) {
            build_grid(b, config.grid_side, cls, motif);
        } else {
            build_ba(b, config, cls, motif);
        }
        ++motif;
    }
    const auto& tree = b.members[0];

    // One attachment edge per motif: uniform motif node to uniform tree node.
    for (int m = 1; m < motif; ++m) {
        Rng rng = derive_rng(config.seed, static_cast<std::uint64_t>(m));
        const auto& nodes = b.members[m];
        const NodeId from = nodes[uniform_index(rng, nodes.size())];
        const NodeId to = tree[uniform_index(rng, tree.size())];
        b.all_edges.insert(Edge(from, to));
        b.out.attachment_edges.emplace_back(from, to);
    }

    int noise = config.noise_edges;
    if (noise < 0) {
        noise = static_cast<int>(std::lround(0.1 * static_cast<double>(b.all_edges.size())));
    }
    Rng rng = derive_rng(config.seed, 0xfeedbeefULL);
    const long max_attempts = 1000L * (noise + 1);
    long attempts = 0;
    int added = 0;
    while (added < noise) {
        if (++attempts > max_attempts) {
            throw ConfigError("could not place " + std::to_string(noise) + " distinct noise edges");
        }
        NodeId a = 0;
        NodeId c = 0;
        if (noise_between_any_motifs) {
            a = static_cast<NodeId>(uniform_index(rng, b.num_nodes));
            c = static_cast<NodeId>(uniform_index(rng, b.num_nodes));
            if (b.motifs[a] == b.motifs[c]) {
                continue;
            }
        } else {
            a = static_cast<NodeId>(tree.size() + uniform_index(rng, b.num_nodes - tree.size()));
            c = tree[uniform_index(rng, tree.size())];
        }
        const Edge e(a, c);
        if (!b.all_edges.insert(e).second) {
            continue;
        }
        b.out.noise_edges.push_back(e);
        ++added;
    }

    std::vector<std::pair<NodeId, NodeId>> edge_list;
    edge_list.reserve(b.all_edges.size());
    for (const auto& e : b.all_edges) {
        edge_list.emplace_back(e.u, e.v);
    }
    for (auto& [id, edges] : b.out.motif_edges) {
        std::sort(edges.begin(), edges.end());
    }
    std::sort(b.out.attachment_edges.begin(), b.out.attachment_edges.end());
    std::sort(b.out.noise_edges.begin(), b.out.noise_edges.end());
    Matrix features = config.features == FeatureKind::degree
                          ? degree_features(b.num_nodes, edge_list, config.max_degree)
                          : constant_features(b.num_nodes);
    b.out.graph = build_graph(edge_list, std::move(features), b.labels, b.motifs);
    return std::move(b.out);
}

} // namespace

LabeledGraph gen_tree_grid(const SynthConfig& config) {
    std::vector<std::pair<MotifKind, int>> plan(config.motif_count > 0 ? config.motif_count : 0, {MotifKind::grid, 1});
    return assemble(config, plan, false);
}

LabeledGraph gen_tree_ba(const SynthConfig& config) {
    std::vector<std::pair<MotifKind, int>> plan(config.motif_count > 0 ? config.motif_count : 0, {MotifKind::ba, 1});
    return assemble(config, plan, false);
}

LabeledGraph gen_tree_grid_ba(const SynthConfig& config) {
    std::vector<std::pair<MotifKind, int>> plan;
    for (int i = 0; i < config.motif_count; ++i) {
        plan.emplace_back(MotifKind::grid, 1);
    }
    for (int i = 0; i < config.motif_count; ++i) {
        plan.emplace_back(MotifKind::ba, 2);
    }
    return assemble(config, plan, true);
}

LabeledGraph generate(DatasetKind kind, const SynthConfig& config) {
    switch (kind) {
    case DatasetKind::tree_grid: return gen_tree_grid(config);
    case DatasetKind::tree_ba: return gen_tree_ba(config);
    case DatasetKind::tree_grid_ba: return gen_tree_grid_ba(config);
    }
    throw ConfigError("unknown dataset kind");
}

EdgeList right_reason(const LabeledGraph& labeled, NodeId node, int hops) {
    const auto& g = labeled.graph;
    if (node < 0 || node >= g.num_nodes()) {
        throw GraphError("invalid node id " + std::to_string(node));
    }
    const EgoGraph ego = extract_ego(g, node, hops);
    const int motif = g.motifs().at(node);
    const auto it = labeled.motif_edges.find(motif);
    EdgeList out;
    if (it == labeled.motif_edges.end()) {
        return out;
    }
    for (const auto& e : it->second) {
        if (ego.local_index(e.u) && ego.local_index(e.v)) {
            out.push_back(e);
        }
    }
    return out;
}

} // namespace relex
