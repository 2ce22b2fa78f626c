#include "relex/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "relex/error.hpp"

namespace fs = std::filesystem;

namespace relex {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
    if (!out.flush()) {
        throw Error("failed writing " + path.string());
    }
}

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

nlohmann::json graph_to_json(const Graph& graph) {
    nlohmann::json doc;
    doc["num_nodes"] = graph.num_nodes();
    auto edges = nlohmann::json::array();
    for (const auto& e : graph.edges()) {
        edges.push_back({e.u, e.v});
    }
    doc["edges"] = std::move(edges);
    auto features = nlohmann::json::array();
    const Matrix& x = graph.features();
    for (Index i = 0; i < x.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Index j = 0; j < x.cols(); ++j) {
            row.push_back(x(i, j));
        }
        features.push_back(std::move(row));
    }
    doc["features"] = std::move(features);
    if (graph.has_labels()) doc["labels"] = graph.labels();
    if (graph.has_motifs()) doc["motifs"] = graph.motifs();
    return doc;
}

namespace {

std::vector<std::pair<NodeId, NodeId>> edge_pairs(const nlohmann::json& edges) {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (const auto& e : edges) {
        if (!e.is_array() || e.size() != 2) {
            throw GraphError("edges must be [u, v] pairs");
        }
        out.emplace_back(e.at(0).get<NodeId>(), e.at(1).get<NodeId>());
    }
    return out;
}

EdgeList edge_list(const nlohmann::json& edges) {
    EdgeList out;
    for (const auto& [u, v] : edge_pairs(edges)) {
        out.emplace_back(u, v);
    }
    return out;
}

nlohmann::json edges_json(const EdgeList& edges) {
    auto out = nlohmann::json::array();
    for (const auto& e : edges) {
        out.push_back({e.u, e.v});
    }
    return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) {
        out.push_back(field);
    }
    return out;
}

std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

} // namespace

Graph graph_from_json(const nlohmann::json& doc, int max_degree) {
    try {
        const int n = doc.at("num_nodes").get<int>();
        if (n < 0) throw GraphError("num_nodes must be >= 0");
        const auto pairs = edge_pairs(doc.at("edges"));
        std::vector<int> labels;
        std::vector<int> motifs;
        if (doc.contains("labels")) labels = doc["labels"].get<std::vector<int>>();
        if (doc.contains("motifs")) motifs = doc["motifs"].get<std::vector<int>>();
        if (!doc.contains("features")) {
            return build_graph(pairs, degree_features(n, pairs, max_degree), std::move(labels), std::move(motifs));
        }
        const auto rows = doc["features"].get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != n) {
            throw GraphError("features has " + std::to_string(rows.size()) + " rows for " + std::to_string(n) +
                             " nodes");
        }
        return build_graph(pairs, rows, std::move(labels), std::move(motifs));
    } catch (const nlohmann::json::exception& e) {
        throw GraphError(std::string("malformed graph document: ") + e.what());
    }
}

Graph load_graph_tsv(const fs::path& edges, const fs::path& features_csv, const fs::path& labels_csv,
                     int max_degree) {
    std::vector<std::pair<NodeId, NodeId>> pairs;
    int max_id = -1;
    int line_no = 0;
    std::istringstream in(read_text(edges));
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 2) {
            throw GraphError(edges.string() + ":" + std::to_string(line_no) + ": expected u<TAB>v");
        }
        try {
            const NodeId u = std::stoi(fields[0]);
            const NodeId v = std::stoi(fields[1]);
            pairs.emplace_back(u, v);
            max_id = std::max({max_id, u, v});
        } catch (const std::logic_error&) {
            throw GraphError(edges.string() + ":" + std::to_string(line_no) + ": node ids must be integers");
        }
    }
    std::vector<std::vector<double>> rows;
    if (!features_csv.empty()) {
        std::istringstream fin(read_text(features_csv));
        while (std::getline(fin, line)) {
            if (trim(line).empty()) continue;
            std::vector<double> row;
            for (const auto& f : split(line, ',')) {
                row.push_back(std::stod(f));
            }
            rows.push_back(std::move(row));
        }
    }
    std::vector<int> labels;
    if (!labels_csv.empty()) {
        std::istringstream lin(read_text(labels_csv));
        while (std::getline(lin, line)) {
            if (!trim(line).empty()) labels.push_back(std::stoi(trim(line)));
        }
    }
    int n = max_id + 1;
    if (!rows.empty()) n = std::max(n, static_cast<int>(rows.size()));
    if (!labels.empty()) n = std::max(n, static_cast<int>(labels.size()));
    if (!rows.empty()) {
        if (static_cast<int>(rows.size()) != n) {
            throw GraphError("feature file has " + std::to_string(rows.size()) + " rows for " + std::to_string(n) +
                             " nodes");
        }
        return build_graph(pairs, rows, std::move(labels));
    }
    return build_graph(pairs, degree_features(n, pairs, max_degree), std::move(labels));
}

nlohmann::json right_reasons_to_json(const LabeledGraph& labeled) {
    nlohmann::json doc;
    auto motifs = nlohmann::json::object();
    for (const auto& [id, edges] : labeled.motif_edges) {
        motifs[std::to_string(id)] = edges_json(edges);
    }
    doc["motif_edges"] = std::move(motifs);
    doc["attachment_edges"] = edges_json(labeled.attachment_edges);
    doc["noise_edges"] = edges_json(labeled.noise_edges);
    return doc;
}

void save_dataset(const fs::path& dir, const LabeledGraph& labeled) {
    write_json(dir / "graph.json", graph_to_json(labeled.graph));
    write_json(dir / "right_reasons.json", right_reasons_to_json(labeled));
}

LabeledGraph load_dataset(const fs::path& path, int max_degree) {
    if (!fs::exists(path)) {
        throw ConfigError("dataset path " + path.string() + " does not exist");
    }
    fs::path graph_file = path;
    if (fs::is_directory(path)) {
        graph_file = path / "graph.json";
    }
    LabeledGraph out;
    if (graph_file.extension() == ".tsv") {
        fs::path features = graph_file;
        features.replace_extension(".features.csv");
        fs::path labels = graph_file;
        labels.replace_extension(".labels.csv");
        out.graph = load_graph_tsv(graph_file, fs::exists(features) ? features : fs::path{},
                                   fs::exists(labels) ? labels : fs::path{}, max_degree);
    } else {
        out.graph = graph_from_json(read_json(graph_file), max_degree);
    }
    const fs::path truth = graph_file.parent_path() / "right_reasons.json";
    if (fs::exists(truth)) {
        const auto doc = read_json(truth);
        try {
            for (const auto& [key, edges] : doc.at("motif_edges").items()) {
                out.motif_edges[std::stoi(key)] = edge_list(edges);
            }
            if (doc.contains("attachment_edges")) out.attachment_edges = edge_list(doc["attachment_edges"]);
            if (doc.contains("noise_edges")) out.noise_edges = edge_list(doc["noise_edges"]);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(truth.string() + ": " + e.what());
        }
    }
    return out;
}

nlohmann::json explanation_to_json(const Explanation& ex) {
    nlohmann::json doc;
    doc["method"] = ex.method;
    doc["node"] = ex.node;
    doc["hops"] = ex.hops;
    doc["target_class"] = ex.target_class;
    doc["nodes"] = ex.node_map;
    const auto global = [&](const Edge& local) {
        return Edge(ex.node_map.at(static_cast<std::size_t>(local.u)), ex.node_map.at(static_cast<std::size_t>(local.v)));
    };
    auto edges = nlohmann::json::array();
    for (const auto& e : ex.ego_edges) {
        const Edge g = global(e);
        const bool selected = std::binary_search(ex.selected_edges.begin(), ex.selected_edges.end(), e);
        edges.push_back({{"u", g.u}, {"v", g.v}, {"score", ex.scores.at(e)}, {"selected", selected}});
    }
    doc["edges"] = std::move(edges);
    auto selected = nlohmann::json::array();
    for (const auto& e : ex.selected_edges) {
        const Edge g = global(e);
        selected.push_back({g.u, g.v});
    }
    doc["selected_edges"] = std::move(selected);
    doc["surrogate_fidelity"] = ex.surrogate_fidelity;
    doc["task_loss"] = ex.task_loss;
    doc["objective_trace"] = ex.objective_trace;
    doc["warnings"] = ex.warnings;
    doc["provenance"] = ex.provenance.is_null() ? nlohmann::json::object() : ex.provenance;
    return doc;
}

std::string explanation_to_dot(const nlohmann::json& doc) {
    std::ostringstream out;
    const int center = doc.at("node").get<int>();
    out << "graph explanation {\n";
    out << "  label=\"" << doc.value("method", std::string("explanation")) << " node " << center << "\";\n";
    out << "  node [shape=circle, style=filled, fillcolor=\"#ffffff\"];\n";
    for (const auto& v : doc.at("nodes")) {
        const int id = v.get<int>();
        out << "  \"" << id << '"';
        if (id == center) {
            out << " [fillcolor=\"#f4c430\", penwidth=2]";
        }
        out << ";\n";
    }
    char color[8];
    char width[32];
    for (const auto& e : doc.at("edges")) {
        const double score = std::clamp(e.at("score").get<double>(), 0.0, 1.0);
        const int gray = static_cast<int>(std::lround(220.0 * (1.0 - score)));
        std::snprintf(color, sizeof color, "#%02x%02x%02x", gray, gray, gray);
        std::snprintf(width, sizeof width, "%.2f", 1.0 + 2.0 * score);
        out << "  \"" << e.at("u").get<int>() << "\" -- \"" << e.at("v").get<int>() << "\" [color=\"" << color
            << "\", penwidth=" << width;
        if (e.value("selected", false)) {
            out << ", style=bold";
        }
        out << "];\n";
    }
    out << "}\n";
    return out.str();
}

} // namespace relex
