#include "relex/blackbox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relex/diffgraph.hpp"
#include "relex/error.hpp"
#include "relex/random.hpp"

namespace relex {

int ClassDistribution::argmax() const {
    return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

bool ClassDistribution::is_simplex(double tol) const {
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) {
            return false;
        }
        total += p;
    }
    return !probs.empty() && std::abs(total - 1.0) <= tol;
}

Matrix BlackBoxModel::grad_adjacency(const Matrix&, const Matrix&, Index, int) const {
    throw UnsupportedModelError("model '" + id() + "' does not expose gradients");
}

ClassDistribution predict_ego(const BlackBoxModel& model, const EgoGraph& ego, const Matrix& adjacency) {
    return model.predict(adjacency, ego.features, ego.center, ego.node_map);
}

ClassDistribution CountingModel::predict(const Matrix& adjacency, const Matrix& features, Index node,
                                         std::span<const NodeId> node_ids) const {
    ++calls_;
    return inner_.predict(adjacency, features, node, node_ids);
}

Matrix CountingModel::grad_adjacency(const Matrix& adjacency, const Matrix& features, Index node, int cls) const {
    ++calls_;
    return inner_.grad_adjacency(adjacency, features, node, cls);
}

namespace {

ClassDistribution softmax_row(const Eigen::RowVectorXd& logits) {
    const double mx = logits.maxCoeff();
    Eigen::RowVectorXd e = (logits.array() - mx).exp();
    e /= e.sum();
    return {std::vector<double>(e.data(), e.data() + e.size())};
}

Matrix matrix_from_json(const nlohmann::json& rows) {
    const auto r = static_cast<Index>(rows.size());
    const auto c = r == 0 ? Index{0} : static_cast<Index>(rows.at(0).size());
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i) {
        if (static_cast<Index>(rows.at(i).size()) != c) {
            throw ConfigError("ragged matrix in model file");
        }
        for (Index j = 0; j < c; ++j) {
            m(i, j) = rows.at(i).at(j).get<double>();
        }
    }
    return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
    auto rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

GcnModel::GcnModel(std::vector<Matrix> weights, std::vector<Matrix> biases)
    : weights_(std::move(weights)), biases_(std::move(biases)) {
    if (weights_.size() != 3 || biases_.size() != 3) {
        throw ShapeError("GCN needs exactly 3 weight matrices and 3 biases");
    }
    for (std::size_t k = 0; k < 3; ++k) {
        if (k > 0 && weights_[k].rows() != weights_[k - 1].cols()) {
            throw ShapeError("GCN layer " + std::to_string(k) + " input width does not match previous output");
        }
        if (biases_[k].rows() != 1 || biases_[k].cols() != weights_[k].cols()) {
            throw ShapeError("GCN bias " + std::to_string(k) + " must be a 1x" +
                             std::to_string(weights_[k].cols()) + " row");
        }
        if (!weights_[k].allFinite() || !biases_[k].allFinite()) {
            throw ShapeError("GCN weights must be finite");
        }
    }
}

GcnModel GcnModel::initialize(int feature_dim, int hidden_dim, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    const int dims[] = {feature_dim, hidden_dim, hidden_dim, num_classes};
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    for (int k = 0; k < 3; ++k) {
        const double limit = std::sqrt(6.0 / (dims[k] + dims[k + 1]));
        Matrix w(dims[k], dims[k + 1]);
        for (Index i = 0; i < w.size(); ++i) {
            w(i) = (2.0 * uniform01(rng) - 1.0) * limit;
        }
        weights.push_back(std::move(w));
        biases.push_back(Matrix::Zero(1, dims[k + 1]));
    }
    return GcnModel(std::move(weights), std::move(biases));
}

void GcnModel::check_inputs(const Matrix& adjacency, const Matrix& features, Index node) const {
    if (adjacency.rows() != adjacency.cols() || adjacency.rows() != features.rows()) {
        throw ShapeError("adjacency/features shape mismatch");
    }
    if (features.cols() != feature_dim()) {
        throw ShapeError("model expects " + std::to_string(feature_dim()) + " features, got " +
                         std::to_string(features.cols()));
    }
    if (node < 0 || node >= adjacency.rows()) {
        throw ShapeError("node " + std::to_string(node) + " out of range");
    }
}

Matrix GcnModel::predict_all(const Matrix& adjacency, const Matrix& features) const {
    const Matrix norm = normalize_adjacency(adjacency);
    Matrix h = features;
    for (std::size_t k = 0; k < 3; ++k) {
        h = norm * (h * weights_[k]);
        h.rowwise() += biases_[k].row(0);
        if (k < 2) {
            h = h.cwiseMax(0.0);
        }
    }
    for (Index r = 0; r < h.rows(); ++r) {
        const double mx = h.row(r).maxCoeff();
        h.row(r) = (h.row(r).array() - mx).exp();
        h.row(r) /= h.row(r).sum();
    }
    return h;
}

ClassDistribution GcnModel::predict(const Matrix& adjacency, const Matrix& features, Index node,
                                    std::span<const NodeId>) const {
    check_inputs(adjacency, features, node);
    const Matrix norm = normalize_adjacency(adjacency);
    Matrix h = features;
    for (std::size_t k = 0; k < 2; ++k) {
        h = norm * (h * weights_[k]);
        h.rowwise() += biases_[k].row(0);
        h = h.cwiseMax(0.0);
    }
    const Eigen::RowVectorXd logits = norm.row(node) * h * weights_[2] + biases_[2];
    return softmax_row(logits);
}

namespace {

diff::Var gcn_forward(diff::Tape& tape, diff::Var norm_adj, const Matrix& features, const std::vector<diff::Var>& w,
                      const std::vector<diff::Var>& b) {
    const auto n = features.rows();
    const diff::Var ones = tape.constant(Matrix::Ones(n, 1));
    diff::Var h = tape.constant(features);
    for (std::size_t k = 0; k < 3; ++k) {
        h = tape.matmul(norm_adj, tape.matmul(h, w[k]));
        h = tape.add(h, tape.matmul(ones, b[k]));
        if (k < 2) {
            h = tape.relu(h);
        }
    }
    return h;
}

} // namespace

Matrix GcnModel::grad_adjacency(const Matrix& adjacency, const Matrix& features, Index node, int cls) const {
    check_inputs(adjacency, features, node);
    if (cls < 0 || cls >= num_classes()) {
        throw ShapeError("class " + std::to_string(cls) + " out of range");
    }
    diff::Tape tape;
    const diff::Var adj = tape.variable(adjacency);
    std::vector<diff::Var> w;
    std::vector<diff::Var> b;
    for (std::size_t k = 0; k < 3; ++k) {
        w.push_back(tape.constant(weights_[k]));
        b.push_back(tape.constant(biases_[k]));
    }
    const diff::Var logits = gcn_forward(tape, tape.normalize_adjacency(adj), features, w, b);
    Matrix target = Matrix::Zero(1, num_classes());
    target(0, cls) = 1.0;
    const diff::Var loss = tape.softmax_cross_entropy(tape.row_select(logits, node), target);
    tape.backward(loss);
    const Matrix g = tape.grad(adj);
    Matrix sym = g + g.transpose();
    sym.diagonal() = g.diagonal();
    return sym;
}

nlohmann::json GcnModel::to_json() const {
    nlohmann::json doc;
    doc["kind"] = "gcn";
    doc["hidden_dim"] = hidden_dim();
    doc["feature_dim"] = feature_dim();
    doc["num_classes"] = num_classes();
    doc["train_accuracy"] = train_accuracy;
    doc["hyper"] = {{"hidden_dim", hyper.hidden_dim},
                    {"epochs", hyper.epochs},
                    {"learning_rate", hyper.learning_rate},
                    {"weight_decay", hyper.weight_decay},
                    {"seed", hyper.seed}};
    auto ws = nlohmann::json::array();
    auto bs = nlohmann::json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        ws.push_back(matrix_to_json(weights_[k]));
        bs.push_back(matrix_to_json(biases_[k]));
    }
    doc["weights"] = std::move(ws);
    doc["biases"] = std::move(bs);
    return doc;
}

namespace {

struct GcnProblem {
    std::shared_ptr<const diff::SparseMatrix> norm;
    Matrix targets;
    Matrix ones;
    double scale = 0.0;
    int num_classes = 0;
};

GcnProblem gcn_problem(const Graph& graph, const std::vector<bool>& train_mask) {
    if (!graph.has_labels()) {
        throw GraphError("train_gcn: graph has no labels");
    }
    if (static_cast<int>(train_mask.size()) != graph.num_nodes()) {
        throw ShapeError("train_mask length must equal num_nodes");
    }
    const int n = graph.num_nodes();
    GcnProblem p;
    int train_count = 0;
    for (int i = 0; i < n; ++i) {
        p.num_classes = std::max(p.num_classes, graph.labels()[i] + 1);
        train_count += train_mask[i] && graph.labels()[i] >= 0;
    }
    if (train_count == 0) {
        throw GraphError("train_gcn: no labeled training nodes");
    }
    p.targets = Matrix::Zero(n, p.num_classes);
    for (int i = 0; i < n; ++i) {
        if (train_mask[i] && graph.labels()[i] >= 0) {
            p.targets(i, graph.labels()[i]) = 1.0;
        }
    }

    // Sparse normalized adjacency; the full graph can be large.
    std::vector<double> degree(n, 1.0);
    for (const auto& e : graph.edges()) {
        degree[e.u] += 1.0;
        degree[e.v] += 1.0;
    }
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < n; ++i) {
        trips.emplace_back(i, i, 1.0 / degree[i]);
    }
    for (const auto& e : graph.edges()) {
        const double v = 1.0 / std::sqrt(degree[e.u] * degree[e.v]);
        trips.emplace_back(e.u, e.v, v);
        trips.emplace_back(e.v, e.u, v);
    }
    auto norm = std::make_shared<diff::SparseMatrix>(n, n);
    norm->setFromTriplets(trips.begin(), trips.end());
    p.norm = std::move(norm);
    p.ones = Matrix::Ones(n, 1);
    p.scale = 1.0 / train_count;
    return p;
}

double gcn_problem_loss(const GcnModel& model, const Graph& graph, const GcnProblem& p, std::vector<Matrix>* grads) {
    diff::Tape tape;
    std::vector<diff::Var> w;
    std::vector<diff::Var> b;
    for (std::size_t k = 0; k < 3; ++k) {
        w.push_back(tape.variable(model.weights()[k]));
        b.push_back(tape.variable(model.biases()[k]));
    }
    const diff::Var ones_var = tape.constant(p.ones);
    diff::Var h = tape.constant(graph.features());
    for (std::size_t k = 0; k < 3; ++k) {
        h = tape.sparse_matmul(p.norm, tape.matmul(h, w[k]));
        h = tape.add(h, tape.matmul(ones_var, b[k]));
        if (k < 2) {
            h = tape.relu(h);
        }
    }
    const diff::Var ce = tape.softmax_cross_entropy(h, p.targets);
    const double coeff[] = {p.scale};
    const diff::Var terms[] = {ce};
    const diff::Var loss = tape.scalar_combine(terms, coeff);
    const double value = tape.scalar(loss);
    if (grads != nullptr && std::isfinite(value)) {
        tape.backward(loss);
        grads->clear();
        for (std::size_t k = 0; k < 3; ++k) {
            grads->push_back(tape.grad(w[k]));
            grads->push_back(tape.grad(b[k]));
        }
    }
    return value;
}

} // namespace

double gcn_loss(const GcnModel& model, const Graph& graph, const std::vector<bool>& train_mask,
                std::vector<Matrix>* grads) {
    return gcn_problem_loss(model, graph, gcn_problem(graph, train_mask), grads);
}

GcnModel train_gcn(const Graph& graph, const std::vector<bool>& train_mask, const GcnHyper& hyper) {
    const GcnProblem problem = gcn_problem(graph, train_mask);
    GcnModel model = GcnModel::initialize(static_cast<int>(graph.features().cols()), hyper.hidden_dim,
                                          problem.num_classes, hyper.seed);
    model.hyper = hyper;
    diff::OptimizerState opt = diff::OptimizerState::adam();
    std::vector<Matrix> grads;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        const double loss = gcn_problem_loss(model, graph, problem, &grads);
        if (!std::isfinite(loss)) {
            throw DivergenceError("train_gcn: non-finite loss at epoch " + std::to_string(epoch));
        }
        std::vector<Matrix> params;
        for (std::size_t k = 0; k < 3; ++k) {
            grads[2 * k] += hyper.weight_decay * model.weights()[k];
            params.push_back(std::move(model.weights()[k]));
            params.push_back(std::move(model.biases()[k]));
        }
        diff::sgd_step(params, grads, hyper.learning_rate, opt);
        for (std::size_t k = 0; k < 3; ++k) {
            model.weights()[k] = std::move(params[2 * k]);
            model.biases()[k] = std::move(params[2 * k + 1]);
        }
    }
    model.train_accuracy = gcn_accuracy(model, graph, train_mask);
    return model;
}

double gcn_accuracy(const GcnModel& model, const Graph& graph, const std::vector<bool>& mask) {
    const Matrix probs = model.predict_all(graph.to_dense(), graph.features());
    int hit = 0;
    int total = 0;
    for (int i = 0; i < graph.num_nodes(); ++i) {
        if (!mask[i] || graph.labels()[i] < 0) {
            continue;
        }
        Index best = 0;
        probs.row(i).maxCoeff(&best);
        hit += static_cast<int>(best) == graph.labels()[i];
        ++total;
    }
    return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

RuleModel::RuleModel(std::vector<double> rule_weights, std::map<NodeId, int> seeds, int num_classes,
                     double smoothing)
    : rule_weights_(std::move(rule_weights)), seeds_(std::move(seeds)), num_classes_(num_classes),
      smoothing_(smoothing) {
    if (num_classes_ < 1) {
        throw ConfigError("rule model needs at least one class");
    }
    if (!(smoothing_ > 0.0)) {
        throw ConfigError("rule model smoothing must be positive");
    }
    for (double w : rule_weights_) {
        if (!(w >= 0.0)) {
            throw ConfigError("rule weights must be non-negative");
        }
    }
    for (const auto& [node, cls] : seeds_) {
        if (cls < 0 || cls >= num_classes_) {
            throw ConfigError("seed class " + std::to_string(cls) + " out of range");
        }
    }
}

std::vector<double> RuleModel::evidence(const Matrix& adjacency, Index node, std::span<const NodeId> node_ids) const {
    if (adjacency.rows() != adjacency.cols()) {
        throw ShapeError("adjacency must be square");
    }
    if (node < 0 || node >= adjacency.rows()) {
        throw ShapeError("node " + std::to_string(node) + " out of range");
    }
    if (!node_ids.empty() && static_cast<Index>(node_ids.size()) != adjacency.rows()) {
        throw ShapeError("node_ids length must equal adjacency size");
    }
    const Index n = adjacency.rows();
    // seed_class[p] = observed class of local node p, or -1.
    std::vector<int> seed_class(static_cast<std::size_t>(n), -1);
    for (Index p = 0; p < n; ++p) {
        const NodeId global = node_ids.empty() ? static_cast<NodeId>(p) : node_ids[p];
        if (auto it = seeds_.find(global); it != seeds_.end()) {
            seed_class[p] = it->second;
        }
    }
    std::vector<double> score(num_classes_, 0.0);
    Vector walks = Vector::Zero(n);
    walks(node) = 1.0;
    for (std::size_t k = 0; k < rule_weights_.size(); ++k) {
        walks = adjacency * walks;
        for (Index p = 0; p < n; ++p) {
            if (seed_class[p] >= 0) {
                score[seed_class[p]] += rule_weights_[k] * walks(p);
            }
        }
    }
    return score;
}

ClassDistribution RuleModel::predict(const Matrix& adjacency, const Matrix&, Index node,
                                     std::span<const NodeId> node_ids) const {
    const auto score = evidence(adjacency, node, node_ids);
    ClassDistribution out;
    double total = 0.0;
    for (double s : score) {
        total += s + smoothing_;
    }
    for (double s : score) {
        out.probs.push_back((s + smoothing_) / total);
    }
    return out;
}

nlohmann::json RuleModel::to_json() const {
    nlohmann::json doc;
    doc["kind"] = "rules";
    doc["rule_weights"] = rule_weights_;
    doc["num_classes"] = num_classes_;
    doc["smoothing"] = smoothing_;
    auto seeds = nlohmann::json::array();
    for (const auto& [node, cls] : seeds_) {
        seeds.push_back({node, cls});
    }
    doc["seeds"] = std::move(seeds);
    return doc;
}

RuleModel make_rule_model(const Graph& graph, std::vector<double> rule_weights, double seed_fraction,
                          double smoothing, std::uint64_t seed) {
    if (!graph.has_labels()) {
        throw GraphError("rule model needs node labels for its seeds");
    }
    if (!(seed_fraction > 0.0 && seed_fraction <= 1.0)) {
        throw ConfigError("seed fraction must be in (0, 1]");
    }
    std::vector<NodeId> labeled;
    int num_classes = 0;
    for (NodeId i = 0; i < graph.num_nodes(); ++i) {
        if (graph.labels()[i] >= 0) {
            labeled.push_back(i);
            num_classes = std::max(num_classes, graph.labels()[i] + 1);
        }
    }
    Rng rng(seed);
    // Partial Fisher-Yates.
    const auto take = static_cast<std::size_t>(std::llround(seed_fraction * static_cast<double>(labeled.size())));
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + uniform_index(rng, labeled.size() - i);
        std::swap(labeled[i], labeled[j]);
    }
    std::map<NodeId, int> seeds;
    for (std::size_t i = 0; i < take; ++i) {
        seeds.emplace(labeled[i], graph.labels()[labeled[i]]);
    }
    return RuleModel(std::move(rule_weights), std::move(seeds), num_classes, smoothing);
}

std::unique_ptr<BlackBoxModel> load_model(const nlohmann::json& doc) {
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "gcn") {
        std::vector<Matrix> weights;
        std::vector<Matrix> biases;
        for (const auto& w : doc.at("weights")) {
            weights.push_back(matrix_from_json(w));
        }
        for (const auto& b : doc.at("biases")) {
            biases.push_back(matrix_from_json(b));
        }
        auto model = std::make_unique<GcnModel>(std::move(weights), std::move(biases));
        model->train_accuracy = doc.value("train_accuracy", 0.0);
        if (doc.contains("hyper")) {
            const auto& h = doc.at("hyper");
            model->hyper.hidden_dim = h.value("hidden_dim", model->hyper.hidden_dim);
            model->hyper.epochs = h.value("epochs", model->hyper.epochs);
            model->hyper.learning_rate = h.value("learning_rate", model->hyper.learning_rate);
            model->hyper.weight_decay = h.value("weight_decay", model->hyper.weight_decay);
            model->hyper.seed = h.value("seed", model->hyper.seed);
        }
        return model;
    }
    if (kind == "rules") {
        std::map<NodeId, int> seeds;
        for (const auto& pair : doc.at("seeds")) {
            seeds.emplace(pair.at(0).get<NodeId>(), pair.at(1).get<int>());
        }
        return std::make_unique<RuleModel>(doc.at("rule_weights").get<std::vector<double>>(), std::move(seeds),
                                           doc.at("num_classes").get<int>(), doc.value("smoothing", 1e-3));
    }
    throw ConfigError("unknown model kind '" + kind + "'");
}

} // namespace relex
