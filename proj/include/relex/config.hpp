#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "relex/blackbox.hpp"
#include "relex/eval.hpp"
#include "relex/synthgen.hpp"

namespace relex {

/// Parses the TOML subset used by run configs: [section] headers, key = value
/// pairs with strings, integers, floats, booleans and single-line arrays, and
/// # comments. Throws ConfigError with the offending line number.
nlohmann::json parse_toml(const std::string& text);

/// One TOML scalar or array literal ("0.5", "\"x\"", "[1, 2]", "true").
nlohmann::json parse_toml_value(const std::string& literal);

/// Every run parameter with its default value.
nlohmann::json default_run_config();

/// Fully resolved run configuration. Construct with load_run_config().
struct RunConfig {
    nlohmann::json doc;

    [[nodiscard]] std::uint64_t seed() const { return doc.at("seed").get<std::uint64_t>(); }
    [[nodiscard]] std::filesystem::path output_dir() const { return doc.at("output_dir").get<std::string>(); }
    [[nodiscard]] std::optional<std::filesystem::path> dataset_path() const;
    [[nodiscard]] std::optional<std::filesystem::path> model_path() const;
    [[nodiscard]] DatasetKind dataset_kind() const;
    [[nodiscard]] SynthConfig synth() const;
    [[nodiscard]] int max_degree() const;
    [[nodiscard]] std::string blackbox_kind() const;
    [[nodiscard]] GcnHyper gcn() const;
    [[nodiscard]] double train_fraction() const;
    [[nodiscard]] std::vector<double> rule_weights() const;
    [[nodiscard]] double seed_fraction() const;
    [[nodiscard]] double smoothing() const;
    [[nodiscard]] std::vector<Method> methods() const;
    [[nodiscard]] int diverse() const;
    [[nodiscard]] BenchmarkConfig benchmark() const;
};

struct ConfigSources {
    std::optional<std::filesystem::path> file;
    /// "section.key=value" or "key=value" assignments, applied after the file.
    std::vector<std::string> assignments;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    /// Fallback seed, e.g. from the environment.
    std::optional<std::uint64_t> seed_fallback;
};

/// Defaults, then the file (TOML, or JSON for *.json), then assignments and
/// explicit flags. Unknown keys, wrong types and missing paths are ConfigErrors.
RunConfig load_run_config(const ConfigSources& sources);

} // namespace relex
