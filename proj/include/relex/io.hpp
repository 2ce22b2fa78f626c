#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "relex/graph.hpp"
#include "relex/relex.hpp"
#include "relex/synthgen.hpp"

namespace relex {

std::string read_text(const std::filesystem::path& path);
/// Creates parent directories. Throws Error when the file cannot be written.
void write_text(const std::filesystem::path& path, const std::string& text);

nlohmann::json read_json(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

nlohmann::json graph_to_json(const Graph& graph);
/// Missing features default to one-hot degree capped at `max_degree`.
Graph graph_from_json(const nlohmann::json& doc, int max_degree = 10);

/// Tab-separated edge list, with optional CSV sidecars (one feature row per node,
/// one label per line). Empty paths mean absent.
Graph load_graph_tsv(const std::filesystem::path& edges, const std::filesystem::path& features_csv = {},
                     const std::filesystem::path& labels_csv = {}, int max_degree = 10);

/// Ground truth for a labeled graph: motif, attachment and noise edge lists.
nlohmann::json right_reasons_to_json(const LabeledGraph& labeled);

/// Writes graph.json and right_reasons.json into `dir`.
void save_dataset(const std::filesystem::path& dir, const LabeledGraph& labeled);

/// Loads a graph from a JSON file, a .tsv edge list, or a directory holding
/// graph.json. Ground truth is read from right_reasons.json beside it when present.
LabeledGraph load_dataset(const std::filesystem::path& path, int max_degree = 10);

nlohmann::json explanation_to_json(const Explanation& explanation);
/// Graphviz rendering of an explanation document: edge darkness follows the
/// score, the explained node is filled.
std::string explanation_to_dot(const nlohmann::json& explanation);

} // namespace relex
