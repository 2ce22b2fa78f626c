#include "relex/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "relex/error.hpp"
#include "relex/io.hpp"

namespace fs = std::filesystem;

namespace relex {

namespace {

class ValueParser {
public:
    explicit ValueParser(const std::string& text) : text_(text) {}

    nlohmann::json parse_all() {
        nlohmann::json v = parse();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError(why + " in value '" + text_ + "'");
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    nlohmann::json parse() {
        skip_space();
        if (pos_ >= text_.size()) fail("missing value");
        const char c = text_[pos_];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        return parse_bare();
    }

    nlohmann::json parse_string() {
        ++pos_;
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            char c = text_[pos_++];
            if (c == '\\') {
                if (pos_ >= text_.size()) fail("dangling escape");
                const char e = text_[pos_++];
                switch (e) {
                case 'n': c = '\n'; break;
                case 't': c = '\t'; break;
                case '"': c = '"'; break;
                case '\\': c = '\\'; break;
                default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out.push_back(c);
        }
        if (pos_ >= text_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    nlohmann::json parse_array() {
        ++pos_;
        auto out = nlohmann::json::array();
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
            ++pos_;
            return out;
        }
        while (true) {
            out.push_back(parse());
            skip_space();
            if (pos_ >= text_.size()) fail("unterminated array");
            if (text_[pos_] == ',') {
                ++pos_;
                skip_space();
                if (pos_ < text_.size() && text_[pos_] == ']') {
                    ++pos_;
                    return out;
                }
                continue;
            }
            if (text_[pos_] == ']') {
                ++pos_;
                return out;
            }
            fail("expected ',' or ']'");
        }
    }

    nlohmann::json parse_bare() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' &&
               !std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
        std::string token = text_.substr(start, pos_ - start);
        if (token == "true") return true;
        if (token == "false") return false;
        token.erase(std::remove(token.begin(), token.end(), '_'), token.end());
        if (token.empty()) fail("missing value");
        const bool is_float = token.find_first_of(".eE") != std::string::npos && token.rfind("0x", 0) != 0;
        try {
            std::size_t used = 0;
            if (is_float) {
                const double d = std::stod(token, &used);
                if (used == token.size()) return d;
            } else if (token[0] == '-') {
                const long long v = std::stoll(token, &used);
                if (used == token.size()) return v;
            } else {
                const unsigned long long v = std::stoull(token, &used, 0);
                if (used == token.size()) return v;
            }
        } catch (const std::logic_error&) {
        }
        fail("cannot parse '" + token + "'");
    }

    const std::string& text_;
    std::size_t pos_ = 0;
};

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '\\' && in_string) {
            ++i;
        } else if (c == '"') {
            in_string = !in_string;
        } else if (c == '#' && !in_string) {
            return line.substr(0, i);
        }
    }
    return line;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& key) {
    return !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-';
    });
}

std::string type_name(const nlohmann::json& v) {
    if (v.is_boolean()) return "boolean";
    if (v.is_number_integer()) return "integer";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    if (v.is_object()) return "table";
    return "null";
}

// Coerces `value` to the type of `reference` or throws.
nlohmann::json coerce(const nlohmann::json& reference, const nlohmann::json& value, const std::string& where) {
    const auto mismatch = [&] {
        return ConfigError(where + ": expected " + type_name(reference) + ", got " + type_name(value));
    };
    if (reference.is_boolean()) {
        if (!value.is_boolean()) throw mismatch();
        return value;
    }
    if (reference.is_number_integer()) {
        if (value.is_number_integer()) return value;
        if (value.is_number_float()) {
            const double d = value.get<double>();
            if (std::floor(d) == d) return static_cast<long long>(d);
        }
        throw mismatch();
    }
    if (reference.is_number()) {
        if (!value.is_number()) throw mismatch();
        return value.get<double>();
    }
    if (reference.is_string()) {
        if (!value.is_string()) throw mismatch();
        return value;
    }
    if (reference.is_array()) {
        if (!value.is_array()) throw mismatch();
        return value;
    }
    throw mismatch();
}

void merge(nlohmann::json& target, const nlohmann::json& source, const std::string& prefix) {
    if (!source.is_object()) {
        throw ConfigError("config must be a table of sections");
    }
    for (const auto& [key, value] : source.items()) {
        const std::string where = prefix.empty() ? key : prefix + "." + key;
        if (!target.contains(key)) {
            throw ConfigError("unknown config key '" + where + "'");
        }
        if (target[key].is_object()) {
            if (!value.is_object()) {
                throw ConfigError(where + ": expected a section");
            }
            merge(target[key], value, where);
        } else {
            target[key] = coerce(target[key], value, where);
        }
    }
}

void assign(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    const std::string path = trim(assignment.substr(0, eq));
    const std::string literal = trim(assignment.substr(eq + 1));
    nlohmann::json value;
    try {
        value = parse_toml_value(literal);
    } catch (const ConfigError&) {
        value = literal; // bare words are strings on the command line
    }
    nlohmann::json patch;
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
        patch[path] = value;
    } else {
        patch[path.substr(0, dot)][path.substr(dot + 1)] = value;
    }
    merge(doc, patch, "");
}

std::optional<fs::path> optional_path(const nlohmann::json& v) {
    const auto s = v.get<std::string>();
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

} // namespace

nlohmann::json parse_toml_value(const std::string& literal) {
    return ValueParser(literal).parse_all();
}

nlohmann::json parse_toml(const std::string& text) {
    nlohmann::json doc = nlohmann::json::object();
    nlohmann::json* table = &doc;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        const auto where = "line " + std::to_string(line_no);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (!valid_key(name)) throw ConfigError(where + ": invalid section name '" + name + "'");
            if (doc.contains(name)) throw ConfigError(where + ": duplicate section [" + name + "]");
            doc[name] = nlohmann::json::object();
            table = &doc[name];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
        if (table->contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
        try {
            (*table)[key] = parse_toml_value(trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return doc;
}

nlohmann::json default_run_config() {
    const SynthConfig synth;
    const GcnHyper gcn;
    const RelexConfig relex;
    const AnchorConfig anchors;
    const BenchmarkConfig bench;
    nlohmann::json doc;
    doc["seed"] = 0ULL;
    doc["output_dir"] = "relex-out";
    doc["dataset"] = {{"kind", "tree-grid"},
                      {"path", ""},
                      {"tree_height", synth.tree_height},
                      {"motif_count", synth.motif_count},
                      {"grid_side", synth.grid_side},
                      {"ba_size", synth.ba_size},
                      {"ba_attach", synth.ba_attach},
                      {"noise_edges", synth.noise_edges},
                      {"features", to_string(synth.features)},
                      {"max_degree", synth.max_degree}};
    doc["blackbox"] = {{"kind", "gcn"},
                       {"model_path", ""},
                       {"hidden_dim", gcn.hidden_dim},
                       {"epochs", gcn.epochs},
                       {"learning_rate", gcn.learning_rate},
                       {"weight_decay", gcn.weight_decay},
                       {"train_fraction", 0.8},
                       {"rule_weights", {1.0, 0.5, 0.25}},
                       {"seed_fraction", 0.5},
                       {"smoothing", 1e-3}};
    auto methods = nlohmann::json::array();
    for (const Method m : bench.methods) methods.push_back(to_string(m));
    doc["explain"] = {{"methods", methods},
                      {"hops", bench.hops},
                      {"samples", relex.samples},
                      {"keep_prob", relex.keep_prob},
                      {"surrogate_hidden", relex.surrogate.hidden_dim},
                      {"surrogate_epochs", relex.surrogate.epochs},
                      {"surrogate_learning_rate", relex.surrogate.learning_rate},
                      {"surrogate_batch", relex.surrogate.batch_size},
                      {"identity_features", relex.surrogate.identity_features},
                      {"mask_iterations", relex.mask.iterations},
                      {"mask_learning_rate", relex.mask.learning_rate},
                      {"optimizer", relex.mask.optimizer == diff::OptimizerKind::adam ? "adam" : "plain"},
                      {"regularizer", to_string(relex.mask.reg)},
                      {"l1_weight", relex.mask.l1_weight},
                      {"l21_weight", relex.mask.l21_weight},
                      {"tau_initial", relex.mask.tau_initial},
                      {"tau_final", relex.mask.tau_final},
                      {"noise_samples", relex.mask.noise_samples},
                      {"diverse", 2},
                      {"diversity_weight", relex.mask.diversity_weight},
                      {"binarize", "auto"},
                      {"threshold", relex.mask.binarize.threshold},
                      {"top_k", 0},
                      {"anchor_delta", anchors.delta},
                      {"anchor_precision", anchors.target_precision},
                      {"anchor_budget", anchors.budget},
                      {"anchor_beam", anchors.beam_width}};
    doc["eval"] = {{"node_cap", bench.node_cap},
                   {"infidelity_samples", bench.infidelity_samples},
                   {"classes", nlohmann::json::array()},
                   {"nodes", nlohmann::json::array()}};
    return doc;
}

std::optional<fs::path> RunConfig::dataset_path() const {
    return optional_path(doc.at("dataset").at("path"));
}

std::optional<fs::path> RunConfig::model_path() const {
    return optional_path(doc.at("blackbox").at("model_path"));
}

DatasetKind RunConfig::dataset_kind() const {
    return parse_dataset_kind(doc.at("dataset").at("kind").get<std::string>());
}

SynthConfig RunConfig::synth() const {
    const auto& d = doc.at("dataset");
    SynthConfig s;
    s.tree_height = d.at("tree_height").get<int>();
    s.motif_count = d.at("motif_count").get<int>();
    s.grid_side = d.at("grid_side").get<int>();
    s.ba_size = d.at("ba_size").get<int>();
    s.ba_attach = d.at("ba_attach").get<int>();
    s.noise_edges = d.at("noise_edges").get<int>();
    s.features = parse_feature_kind(d.at("features").get<std::string>());
    s.max_degree = d.at("max_degree").get<int>();
    s.seed = derive_rng(seed(), 0x73796e74ULL)();
    return s;
}

int RunConfig::max_degree() const {
    return doc.at("dataset").at("max_degree").get<int>();
}

std::string RunConfig::blackbox_kind() const {
    return doc.at("blackbox").at("kind").get<std::string>();
}

GcnHyper RunConfig::gcn() const {
    const auto& b = doc.at("blackbox");
    GcnHyper h;
    h.hidden_dim = b.at("hidden_dim").get<int>();
    h.epochs = b.at("epochs").get<int>();
    h.learning_rate = b.at("learning_rate").get<double>();
    h.weight_decay = b.at("weight_decay").get<double>();
    h.seed = derive_rng(seed(), 0x67636eULL)();
    return h;
}

double RunConfig::train_fraction() const {
    return doc.at("blackbox").at("train_fraction").get<double>();
}

std::vector<double> RunConfig::rule_weights() const {
    return doc.at("blackbox").at("rule_weights").get<std::vector<double>>();
}

double RunConfig::seed_fraction() const {
    return doc.at("blackbox").at("seed_fraction").get<double>();
}

double RunConfig::smoothing() const {
    return doc.at("blackbox").at("smoothing").get<double>();
}

std::vector<Method> RunConfig::methods() const {
    std::vector<Method> out;
    for (const auto& m : doc.at("explain").at("methods")) {
        if (!m.is_string()) throw ConfigError("explain.methods must be strings");
        const Method method = parse_method(m.get<std::string>());
        if (std::find(out.begin(), out.end(), method) == out.end()) out.push_back(method);
    }
    if (out.empty()) throw ConfigError("explain.methods is empty");
    return out;
}

int RunConfig::diverse() const {
    return doc.at("explain").at("diverse").get<int>();
}

BenchmarkConfig RunConfig::benchmark() const {
    const auto& x = doc.at("explain");
    const auto& e = doc.at("eval");
    BenchmarkConfig b;
    b.methods = methods();
    b.hops = x.at("hops").get<int>();
    b.seed = seed();
    b.node_cap = e.at("node_cap").get<int>();
    b.infidelity_samples = e.at("infidelity_samples").get<int>();
    b.classes = e.at("classes").get<std::vector<int>>();
    b.nodes = e.at("nodes").get<std::vector<NodeId>>();

    RelexConfig& r = b.relex;
    r.samples = x.at("samples").get<int>();
    r.keep_prob = x.at("keep_prob").get<double>();
    r.surrogate.hidden_dim = x.at("surrogate_hidden").get<int>();
    r.surrogate.epochs = x.at("surrogate_epochs").get<int>();
    r.surrogate.learning_rate = x.at("surrogate_learning_rate").get<double>();
    r.surrogate.batch_size = x.at("surrogate_batch").get<int>();
    r.surrogate.identity_features = x.at("identity_features").get<bool>();
    MaskSpec& m = r.mask;
    m.iterations = x.at("mask_iterations").get<int>();
    m.learning_rate = x.at("mask_learning_rate").get<double>();
    const auto opt = x.at("optimizer").get<std::string>();
    if (opt != "adam" && opt != "plain") throw ConfigError("explain.optimizer must be adam or plain");
    m.optimizer = opt == "adam" ? diff::OptimizerKind::adam : diff::OptimizerKind::plain;
    m.reg = parse_regularizer(x.at("regularizer").get<std::string>());
    m.l1_weight = x.at("l1_weight").get<double>();
    m.l21_weight = x.at("l21_weight").get<double>();
    m.tau_initial = x.at("tau_initial").get<double>();
    m.tau_final = x.at("tau_final").get<double>();
    m.noise_samples = x.at("noise_samples").get<int>();
    m.diversity_weight = x.at("diversity_weight").get<double>();
    const auto bin = x.at("binarize").get<std::string>();
    if (bin == "threshold" || bin == "auto") {
        m.binarize = BinarizeStrategy::at_threshold(x.at("threshold").get<double>());
    } else if (bin == "top_k") {
        const int k = x.at("top_k").get<int>();
        if (k < 0) throw ConfigError("explain.top_k must be >= 0");
        m.binarize = BinarizeStrategy::top(static_cast<std::size_t>(k));
    } else {
        throw ConfigError("explain.binarize must be auto, threshold or top_k");
    }
    b.right_reason_top_k = bin == "auto";
    m.validate();

    AnchorConfig& a = b.anchors;
    a.delta = x.at("anchor_delta").get<double>();
    a.target_precision = x.at("anchor_precision").get<double>();
    a.budget = x.at("anchor_budget").get<long>();
    a.beam_width = x.at("anchor_beam").get<int>();
    a.keep_prob = r.keep_prob;

    if (b.hops < 1) throw ConfigError("explain.hops must be >= 1");
    if (r.samples < 1) throw ConfigError("explain.samples must be >= 1");
    if (!(r.keep_prob > 0.0 && r.keep_prob <= 1.0)) throw ConfigError("explain.keep_prob must be in (0, 1]");
    if (b.infidelity_samples < 1) throw ConfigError("eval.infidelity_samples must be >= 1");
    return b;
}

RunConfig load_run_config(const ConfigSources& sources) {
    nlohmann::json doc = default_run_config();
    bool seed_given = false;
    if (sources.file) {
        if (!fs::exists(*sources.file)) {
            throw ConfigError("config file " + sources.file->string() + " does not exist");
        }
        const std::string text = read_text(*sources.file);
        nlohmann::json user;
        if (sources.file->extension() == ".json") {
            try {
                user = nlohmann::json::parse(text);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError(sources.file->string() + ": " + e.what());
            }
        } else {
            user = parse_toml(text);
        }
        seed_given = user.is_object() && user.contains("seed");
        merge(doc, user, "");
    }
    for (const auto& a : sources.assignments) {
        assign(doc, a);
        if (a.rfind("seed=", 0) == 0 || a.rfind("seed =", 0) == 0) seed_given = true;
    }
    if (sources.seed) {
        doc["seed"] = *sources.seed;
        seed_given = true;
    }
    if (!seed_given && sources.seed_fallback) {
        doc["seed"] = *sources.seed_fallback;
    }
    if (sources.output_dir) {
        doc["output_dir"] = *sources.output_dir;
    }
    if (!doc["seed"].is_number_unsigned()) {
        if (doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0) {
            doc["seed"] = doc["seed"].get<std::uint64_t>();
        } else {
            throw ConfigError("seed must be a non-negative integer");
        }
    }

    RunConfig config{doc};
    // Validate every section up front.
    (void)config.dataset_kind();
    config.synth().validate();
    const auto kind = config.blackbox_kind();
    if (kind != "gcn" && kind != "rules") {
        throw ConfigError("blackbox.kind must be gcn or rules");
    }
    if (!(config.train_fraction() > 0.0 && config.train_fraction() <= 1.0)) {
        throw ConfigError("blackbox.train_fraction must be in (0, 1]");
    }
    (void)config.benchmark();
    if (const auto p = config.dataset_path(); p && !fs::exists(*p)) {
        throw ConfigError("dataset.path " + p->string() + " does not exist");
    }
    if (const auto p = config.model_path(); p && !fs::exists(*p)) {
        throw ConfigError("blackbox.model_path " + p->string() + " does not exist");
    }
    return config;
}

} // namespace relex
