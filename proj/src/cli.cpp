#include "relex/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>

#include "CLI11.hpp"

#include "relex/baselines.hpp"
#include "relex/config.hpp"
#include "relex/error.hpp"
#include "relex/eval.hpp"
#include "relex/io.hpp"

namespace fs = std::filesystem;

namespace relex {

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output_dir;
    std::vector<std::string> assignments;
};

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("RELEX_SEED");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const std::string text(raw);
        const auto v = std::stoull(text, &used, 0);
        if (used == text.size() && text[0] != '-') return v;
    } catch (const std::logic_error&) {
    }
    throw ConfigError(std::string("RELEX_SEED must be a non-negative integer, got '") + raw + "'");
}

RunConfig resolve(const GlobalOptions& g, std::vector<std::string> extra) {
    ConfigSources src;
    if (!g.config.empty()) src.file = g.config;
    src.assignments = g.assignments;
    src.assignments.insert(src.assignments.end(), extra.begin(), extra.end());
    src.seed = g.seed;
    if (!g.output_dir.empty()) src.output_dir = g.output_dir;
    src.seed_fallback = env_seed();
    return load_run_config(src);
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += ",";
        out += p;
    }
    return out;
}

std::string quote_list(const std::vector<std::string>& parts) {
    std::string out = "[";
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += ",";
        out += "\"" + parts[i] + "\"";
    }
    return out + "]";
}

void echo_config(const RunConfig& config) {
    write_json(config.output_dir() / "config.json", config.doc);
}

/// The configured dataset, else one generated earlier into output_dir, else a fresh synthetic one.
LabeledGraph load_data(const RunConfig& config, std::string* source = nullptr) {
    std::string name;
    LabeledGraph out;
    const fs::path generated = config.output_dir() / "graph.json";
    if (const auto p = config.dataset_path()) {
        name = p->string();
        out = load_dataset(*p, config.max_degree());
    } else if (fs::exists(generated)) {
        name = generated.string();
        out = load_dataset(generated, config.max_degree());
    } else {
        name = to_string(config.dataset_kind());
        out = generate(config.dataset_kind(), config.synth());
    }
    if (source) *source = name;
    return out;
}

std::unique_ptr<BlackBoxModel> load_trained(const RunConfig& config) {
    fs::path path;
    if (const auto p = config.model_path()) {
        path = *p;
    } else {
        path = config.output_dir() / "model.json";
        if (!fs::exists(path)) {
            throw ConfigError("no trained model: run train-blackbox or set blackbox.model_path");
        }
    }
    try {
        return load_model(read_json(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": malformed model: " + e.what());
    }
}

// ---------------------------------------------------------------------------

int cmd_generate(const RunConfig& config, std::ostream& out) {
    const LabeledGraph labeled = generate(config.dataset_kind(), config.synth());
    const fs::path dir = config.output_dir();
    save_dataset(dir, labeled);
    echo_config(config);
    const Graph& g = labeled.graph;
    std::map<int, int> counts;
    for (const int l : g.labels()) ++counts[l];
    out << "dataset: " << to_string(config.dataset_kind()) << "\n";
    out << "nodes: " << g.num_nodes() << "\n";
    out << "edges: " << g.edges().size() << "\n";
    out << "classes: " << counts.size() << "\n";
    for (const auto& [cls, n] : counts) {
        out << "  class " << cls << ": " << n << " nodes\n";
    }
    out << "wrote " << (dir / "graph.json").string() << "\n";
    return exit_ok;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
    const LabeledGraph labeled = load_data(config);
    const Graph& g = labeled.graph;
    if (!g.has_labels()) throw ConfigError("training needs a labeled dataset");

    std::vector<NodeId> labeled_nodes;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        if (g.labels()[v] >= 0) labeled_nodes.push_back(v);
    }
    Rng split = derive_rng(config.seed(), 0x73706c6974ULL);
    std::shuffle(labeled_nodes.begin(), labeled_nodes.end(), split);
    const auto take = static_cast<std::size_t>(
        std::llround(config.train_fraction() * static_cast<double>(labeled_nodes.size())));
    std::vector<bool> train(g.num_nodes(), false);
    std::vector<bool> test(g.num_nodes(), false);
    for (std::size_t i = 0; i < labeled_nodes.size(); ++i) {
        (i < take ? train : test)[labeled_nodes[i]] = true;
    }

    nlohmann::json doc;
    const auto kind = config.blackbox_kind();
    if (kind == "gcn") {
        GcnModel model = train_gcn(g, train, config.gcn());
        const double test_acc = gcn_accuracy(model, g, test);
        out << "model: gcn\n";
        char line[96];
        std::snprintf(line, sizeof line, "train accuracy: %.4f\n", model.train_accuracy);
        out << line;
        if (take < labeled_nodes.size()) {
            std::snprintf(line, sizeof line, "test accuracy: %.4f\n", test_acc);
            out << line;
        }
        doc = model.to_json();
    } else {
        const RuleModel model = make_rule_model(g, config.rule_weights(), config.seed_fraction(), config.smoothing(),
                                                derive_rng(config.seed(), 0x72756c6573ULL)());
        const int hops = config.benchmark().hops;
        int hits = 0;
        for (const NodeId v : labeled_nodes) {
            const EgoGraph ego = extract_ego(g, v, hops);
            if (predict_ego(model, ego).argmax() == g.labels()[v]) ++hits;
        }
        char line[96];
        std::snprintf(line, sizeof line, "accuracy: %.4f\n",
                      labeled_nodes.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labeled_nodes.size()));
        out << "model: rules (" << model.seeds().size() << " observed seeds)\n" << line;
        doc = model.to_json();
    }
    const fs::path path = config.output_dir() / "model.json";
    write_json(path, doc);
    echo_config(config);
    out << "wrote " << path.string() << "\n";
    return exit_ok;
}

int cmd_explain(const RunConfig& config, NodeId node, std::ostream& out, std::ostream& err) {
    const LabeledGraph labeled = load_data(config);
    const auto model = load_trained(config);
    if (node < 0 || node >= labeled.graph.num_nodes()) {
        throw ConfigError("node " + std::to_string(node) + " is not in the graph (" +
                          std::to_string(labeled.graph.num_nodes()) + " nodes)");
    }
    const BenchmarkConfig bench = config.benchmark();
    const int diverse = config.diverse();
    if (diverse < 1) throw ConfigError("explain.diverse must be >= 1");
    const EgoGraph ego = extract_ego(labeled.graph, node, bench.hops);
    const std::uint64_t node_seed = derive_rng(config.seed(), static_cast<std::uint64_t>(node))();

    const fs::path dir = config.output_dir() / "explanations";
    const std::string stem = "node" + std::to_string(node) + "_";
    std::vector<std::pair<std::string, Explanation>> produced;
    nlohmann::json errors = nlohmann::json::object();

    std::vector<MaskKind> kinds;
    for (const Method m : bench.methods) {
        if (m == Method::relex_sigmoid) kinds.push_back(MaskKind::sigmoid);
        if (m == Method::relex_gumbel) kinds.push_back(MaskKind::gumbel);
    }
    if (!kinds.empty()) {
        Rng rng = derive_rng(node_seed, 1);
        try {
            RelexResult result = explain_relex(*model, ego, node, bench.relex, kinds, diverse, rng);
            std::map<std::string, int> seen;
            for (auto& ex : result.explanations) {
                const int k = ++seen[ex.method];
                std::string name = ex.method;
                if (diverse > 1) name += "_" + std::to_string(k);
                produced.emplace_back(name, std::move(ex));
            }
        } catch (const Error& e) {
            for (const MaskKind k : kinds) errors["relex-" + to_string(k)] = e.what();
        }
    }
    for (const Method m : bench.methods) {
        if (m == Method::relex_sigmoid || m == Method::relex_gumbel) continue;
        try {
            if (m == Method::saliency) {
                Explanation ex = saliency_explain(*model, ego);
                ex.selected_edges = binarize(ego, ex.scores, bench.relex.mask.binarize).edges;
                produced.emplace_back(to_string(m), std::move(ex));
            } else if (m == Method::anchors) {
                Rng rng = derive_rng(node_seed, 2);
                produced.emplace_back(to_string(m), relational_anchors(*model, ego, bench.anchors, rng));
            } else {
                Rng rng = derive_rng(node_seed, 3);
                Explanation ex = random_explain(ego, rng);
                ex.selected_edges = binarize(ego, ex.scores, bench.relex.mask.binarize).edges;
                produced.emplace_back(to_string(m), std::move(ex));
            }
        } catch (const Error& e) {
            errors[to_string(m)] = e.what();
        }
    }

    for (const auto& [name, ex] : produced) {
        const nlohmann::json doc = explanation_to_json(ex);
        const fs::path json_path = dir / (stem + name + ".json");
        write_json(json_path, doc);
        write_text(dir / (stem + name + ".dot"), explanation_to_dot(doc));
        out << name << ": " << ex.selected_edges.size() << " of " << ex.ego_edges.size() << " edges selected -> "
            << json_path.string() << "\n";
        for (const auto& w : ex.warnings) err << "warning: " << name << ": " << w << "\n";
    }
    const fs::path error_path = dir / (stem + "errors.json");
    if (!errors.empty()) {
        write_json(error_path, errors);
        for (const auto& [method, message] : errors.items()) {
            err << "error: " << method << ": " << message.get<std::string>() << "\n";
        }
    } else if (fs::exists(error_path)) {
        fs::remove(error_path);
    }
    echo_config(config);
    if (errors.empty()) return exit_ok;
    return produced.empty() ? exit_fatal : exit_partial;
}

std::string iso_time(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string csv_rows(const std::vector<EvalRecord>& records, bool timing) {
    EvalReport part{records};
    const std::string csv = part.to_csv(timing);
    return csv.substr(csv.find('\n') + 1);
}

int cmd_benchmark(RunConfig config, int jobs, bool resume, bool timing, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::system_clock::now();
    const auto clock_start = std::chrono::steady_clock::now();
    std::string title;
    const LabeledGraph labeled = load_data(config, &title);
    const auto model = load_trained(config);
    BenchmarkConfig bench = config.benchmark();
    bench.jobs = std::max(1, jobs);

    const fs::path dir = config.output_dir();
    const fs::path partial = dir / "report.partial.csv";
    EvalReport done;
    std::set<NodeId> skip;
    if (resume && fs::exists(partial)) {
        done = parse_report_csv(read_text(partial));
        // A node counts as complete only if every configured method has a row.
        std::map<NodeId, std::set<std::string>> rows;
        for (const auto& r : done.records) rows[r.node].insert(r.method);
        for (const auto& [node, methods] : rows) {
            if (methods.size() >= bench.methods.size()) skip.insert(node);
        }
        std::erase_if(done.records, [&](const EvalRecord& r) { return !skip.contains(r.node); });
        out << "resuming: " << skip.size() << " nodes already done\n";
    }
    {
        EvalReport header;
        std::string text = header.to_csv(timing);
        text += csv_rows(done.records, timing);
        write_text(partial, text);
    }
    std::ofstream progress(partial, std::ios::app);
    const auto selected = select_nodes(labeled, bench);
    std::size_t finished = skip.size();
    const auto on_node = [&](const std::vector<EvalRecord>& records) {
        progress << csv_rows(records, timing);
        progress.flush();
        ++finished;
        err << "\rnodes " << finished << "/" << selected.size() << std::flush;
    };
    EvalReport report = run_benchmark(labeled, *model, bench, skip, on_node);
    err << "\n";
    progress.close();
    for (auto& r : done.records) report.records.push_back(std::move(r));
    report.sort();

    write_text(dir / "report.csv", report.to_csv(timing));
    title += ", " + model->id() + " black box, " + std::to_string(selected.size()) + " nodes";
    const std::string table = report.summary_table(title);
    write_text(dir / "summary.txt", table);

    auto errors = nlohmann::json::array();
    for (const auto& r : report.records) {
        if (!r.error.empty()) errors.push_back({{"node", r.node}, {"method", r.method}, {"error", r.error}});
    }
    write_json(dir / "errors.json", errors);

    nlohmann::json meta;
    meta["started"] = iso_time(started);
    meta["finished"] = iso_time(std::chrono::system_clock::now());
    meta["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
    meta["jobs"] = bench.jobs;
    meta["resumed_nodes"] = skip.size();
    nlohmann::json seconds = nlohmann::json::object();
    for (const auto& r : report.records) {
        seconds[r.method] = seconds.value(r.method, 0.0) + r.seconds;
    }
    meta["method_seconds"] = seconds;
    write_json(dir / "run_meta.json", meta);
    echo_config(config);

    out << table;
    if (!errors.empty()) {
        err << errors.size() << " method runs failed, see " << (dir / "errors.json").string() << "\n";
        return exit_partial;
    }
    return exit_ok;
}

int cmd_export_dot(const fs::path& input, fs::path output, std::ostream& out) {
    if (!fs::exists(input)) throw ConfigError("input " + input.string() + " does not exist");
    if (output.empty()) {
        output = input;
        output.replace_extension(".dot");
    }
    std::string dot;
    try {
        dot = explanation_to_dot(read_json(input));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(input.string() + ": not an explanation document: " + e.what());
    }
    write_text(output, dot);
    out << "wrote " << output.string() << "\n";
    return exit_ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Relational explanations for graph node classifiers", "relex"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string("relex 1.0.0"));
    GlobalOptions g;
    app.add_option("-c,--config", g.config, "Run config (TOML, or JSON for *.json)");
    app.add_option("--seed", g.seed, "Master seed (overrides the config and RELEX_SEED)");
    app.add_option("-o,--output-dir", g.output_dir, "Output directory");
    app.add_option("--set", g.assignments, "Override a config value, e.g. --set explain.samples=500");

    auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
    std::string dataset;
    gen->add_option("--dataset", dataset, "tree-grid, tree-ba or tree-grid-ba");

    auto* train = app.add_subcommand("train-blackbox", "Train the black-box classifier");
    std::string kind;
    std::string train_data;
    train->add_option("--kind", kind, "gcn or rules");
    train->add_option("--data", train_data, "Dataset path (graph.json, directory or .tsv)");

    auto* explain = app.add_subcommand("explain", "Explain one node");
    NodeId node = -1;
    std::vector<std::string> methods;
    std::optional<int> diverse;
    explain->add_option("--node", node, "Node id")->required();
    explain->add_option("--methods", methods, "Comma-separated methods")->delimiter(',');
    explain->add_option("--diverse", diverse, "Masks per relex variant");

    auto* bench = app.add_subcommand("benchmark", "Evaluate explainers against the right reasons");
    int jobs = 1;
    bool resume = false;
    bool timing = false;
    std::vector<std::string> bench_methods;
    std::vector<std::string> nodes;
    bench->add_option("-j,--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    bench->add_flag("--resume", resume, "Skip nodes already in report.partial.csv");
    bench->add_flag("--timing", timing, "Write wall-clock seconds into report.csv");
    bench->add_option("--methods", bench_methods, "Comma-separated methods")->delimiter(',');
    bench->add_option("--nodes", nodes, "Comma-separated node ids")->delimiter(',');

    auto* dot = app.add_subcommand("export-dot", "Render an explanation JSON as Graphviz DOT");
    std::string input;
    std::string output;
    dot->add_option("-i,--input", input, "Explanation JSON")->required();
    dot->add_option("--output", output, "DOT file (default: input with .dot)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*dot) return cmd_export_dot(input, output, out);
        std::vector<std::string> extra;
        if (*gen && !dataset.empty()) extra.push_back("dataset.kind=\"" + dataset + "\"");
        if (*train && !kind.empty()) extra.push_back("blackbox.kind=\"" + kind + "\"");
        if (*train && !train_data.empty()) extra.push_back("dataset.path=\"" + train_data + "\"");
        if (*explain && !methods.empty()) extra.push_back("explain.methods=" + quote_list(methods));
        if (*explain && diverse) extra.push_back("explain.diverse=" + std::to_string(*diverse));
        if (*bench && !bench_methods.empty()) extra.push_back("explain.methods=" + quote_list(bench_methods));
        if (*bench && !nodes.empty()) extra.push_back("eval.nodes=[" + join(nodes) + "]");
        const RunConfig config = resolve(g, extra);
        if (*gen) return cmd_generate(config, out);
        if (*train) return cmd_train(config, out);
        if (*explain) return cmd_explain(config, node, out, err);
        return cmd_benchmark(config, jobs, resume, timing, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_fatal;
    } catch (const std::exception& e) {
        err << "fatal: " << e.what() << "\n";
        return exit_fatal;
    }
}

} // namespace relex
