#include "relex/relex.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "relex/error.hpp"

namespace relex {

// ---------------------------------------------------------------------------
// Perturbation sampling

Matrix sample_perturbation(const EgoGraph& ego, double keep_prob, Rng& rng) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw ConfigError("keep_prob must be in (0, 1], got " + std::to_string(keep_prob));
    }
    const Index n = ego.size();
    Matrix out = Matrix::Zero(n, n);
    std::vector<char> kept(static_cast<std::size_t>(n), 0);
    // decided(p, q) for p < q: the edge's coin has been flipped.
    Matrix decided = Matrix::Zero(n, n);
    std::deque<Index> queue{ego.center};
    kept[ego.center] = 1;
    while (!queue.empty()) {
        const Index u = queue.front();
        queue.pop_front();
        for (Index v = 0; v < n; ++v) {
            if (ego.adjacency(u, v) == 0.0 || decided(u, v) != 0.0) {
                continue;
            }
            decided(u, v) = decided(v, u) = 1.0;
            if (!bernoulli(rng, keep_prob)) {
                continue;
            }
            out(u, v) = out(v, u) = ego.adjacency(u, v);
            if (!kept[v]) {
                kept[v] = 1;
                queue.push_back(v);
            }
        }
    }
    return out;
}

PerturbationDataset build_dataset(const EgoGraph& ego, const BlackBoxModel& blackbox, int n, double keep_prob,
                                  Rng& rng) {
    if (n < 1) {
        throw ConfigError("dataset needs at least one sample");
    }
    PerturbationDataset ds;
    ds.ego = ego;
    ds.keep_prob = keep_prob;
    ds.samples.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        Matrix adj = sample_perturbation(ego, keep_prob, rng);
        ClassDistribution y = predict_ego(blackbox, ego, adj);
        ds.samples.push_back({std::move(adj), std::move(y)});
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Surrogate

Surrogate::Surrogate(Matrix input_features, Index center, std::vector<Matrix> weights, std::vector<Matrix> biases)
    : features_(std::move(input_features)), center_(center), weights_(std::move(weights)), biases_(std::move(biases)) {
    if (weights_.size() < 2 || weights_.size() != biases_.size()) {
        throw ShapeError("surrogate needs at least one layer plus a readout");
    }
    Index width = features_.cols();
    Index concat = 0;
    for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
        if (weights_[l].rows() != width) {
            throw ShapeError("surrogate layer " + std::to_string(l) + " input width mismatch");
        }
        width = weights_[l].cols();
        concat += width;
    }
    if (weights_.back().rows() != concat) {
        throw ShapeError("surrogate readout width must equal the sum of layer widths");
    }
}

Surrogate Surrogate::initialize(const EgoGraph& ego, int num_classes, const SurrogateHyper& hyper) {
    const Index p = ego.size();
    Matrix features = ego.features;
    if (hyper.identity_features) {
        Matrix ext(p, features.cols() + p);
        ext << features, Matrix::Identity(p, p);
        features = std::move(ext);
    }
    const int layers = hyper.layers > 0 ? hyper.layers : std::max(1, ego.hops);
    Rng rng(hyper.seed);
    auto glorot = [&](Index rows, Index cols) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        Matrix w(rows, cols);
        for (Index i = 0; i < w.size(); ++i) {
            w(i) = (2.0 * uniform01(rng) - 1.0) * limit;
        }
        return w;
    };
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    Index width = features.cols();
    for (int l = 0; l < layers; ++l) {
        weights.push_back(glorot(width, hyper.hidden_dim));
        biases.push_back(Matrix::Zero(1, hyper.hidden_dim));
        width = hyper.hidden_dim;
    }
    weights.push_back(glorot(static_cast<Index>(layers) * hyper.hidden_dim, num_classes));
    biases.push_back(Matrix::Zero(1, num_classes));
    return Surrogate(std::move(features), ego.center, std::move(weights), std::move(biases));
}

std::vector<Matrix> Surrogate::parameters() const {
    std::vector<Matrix> out = weights_;
    out.insert(out.end(), biases_.begin(), biases_.end());
    return out;
}

void Surrogate::set_parameters(std::vector<Matrix> params) {
    const std::size_t k = weights_.size();
    if (params.size() != 2 * k) {
        throw ShapeError("surrogate expects " + std::to_string(2 * k) + " parameter matrices");
    }
    for (std::size_t i = 0; i < k; ++i) {
        weights_[i] = std::move(params[i]);
        biases_[i] = std::move(params[k + i]);
    }
}

std::vector<diff::Var> Surrogate::constants(diff::Tape& tape) const {
    std::vector<diff::Var> out;
    for (const auto& w : weights_) out.push_back(tape.constant(w));
    for (const auto& b : biases_) out.push_back(tape.constant(b));
    return out;
}

diff::Var Surrogate::logits(diff::Tape& tape, diff::Var normalized_adjacency, std::span<const diff::Var> params) const {
    const std::size_t k = weights_.size();
    const int layers = num_layers();
    const diff::Var x = tape.constant(features_);
    const diff::Var ones = tape.constant(Matrix::Ones(features_.rows(), 1));
    diff::Var h = x;
    std::vector<diff::Var> outputs;
    for (int l = 0; l < layers; ++l) {
        const diff::Var w = params[static_cast<std::size_t>(l)];
        const diff::Var b = params[k + static_cast<std::size_t>(l)];
        if (l + 1 < layers) {
            h = tape.relu(tape.add(tape.matmul(normalized_adjacency, tape.matmul(h, w)), tape.matmul(ones, b)));
            outputs.push_back(tape.row_select(h, center_));
        } else {
            // Only the center row of the last layer reaches the readout.
            const diff::Var row = tape.row_select(normalized_adjacency, center_);
            outputs.push_back(tape.relu(tape.add(tape.matmul(row, tape.matmul(h, w)), b)));
        }
    }
    const diff::Var concat = tape.concat_cols(outputs);
    return tape.add(tape.matmul(concat, params[k - 1]), params[2 * k - 1]);
}

ClassDistribution Surrogate::predict(const Matrix& adjacency) const {
    if (adjacency.rows() != features_.rows() || adjacency.cols() != features_.rows()) {
        throw ShapeError("surrogate adjacency must be " + std::to_string(features_.rows()) + " square");
    }
    const Matrix norm = normalize_adjacency(adjacency);
    const int layers = num_layers();
    Matrix h = features_;
    Eigen::RowVectorXd concat(readout_width());
    Index at = 0;
    for (int l = 0; l < layers; ++l) {
        if (l + 1 < layers) {
            h = norm * (h * weights_[l]);
            h.rowwise() += biases_[l].row(0);
            h = h.cwiseMax(0.0);
            concat.segment(at, h.cols()) = h.row(center_);
            at += h.cols();
        } else {
            Eigen::RowVectorXd row = norm.row(center_) * (h * weights_[l]) + biases_[l];
            row = row.cwiseMax(0.0);
            concat.segment(at, row.size()) = row;
            at += row.size();
        }
    }
    Eigen::RowVectorXd z = concat * weights_.back() + biases_.back();
    z.array() -= z.maxCoeff();
    z = z.array().exp();
    z /= z.sum();
    return {std::vector<double>(z.data(), z.data() + z.size())};
}

namespace {

Matrix target_row(const ClassDistribution& y) {
    Matrix t(1, static_cast<Index>(y.size()));
    for (std::size_t c = 0; c < y.size(); ++c) {
        t(0, static_cast<Index>(c)) = y.probs[c];
    }
    return t;
}

double kl_divergence(const ClassDistribution& p, const ClassDistribution& q) {
    double kl = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p.probs[c] > 0.0) {
            kl += p.probs[c] * (std::log(p.probs[c]) - std::log(std::max(q.probs[c], 1e-300)));
        }
    }
    return kl;
}

double batch_loss(const Surrogate& surrogate, std::span<const Matrix* const> norms,
                  std::span<const ClassDistribution* const> targets, std::vector<Matrix>* grads) {
    diff::Tape tape;
    std::vector<diff::Var> params;
    for (auto& p : surrogate.parameters()) {
        params.push_back(grads ? tape.variable(std::move(p)) : tape.constant(std::move(p)));
    }
    std::vector<diff::Var> losses;
    for (std::size_t j = 0; j < norms.size(); ++j) {
        const diff::Var z = surrogate.logits(tape, tape.constant(*norms[j]), params);
        losses.push_back(tape.softmax_cross_entropy(z, target_row(*targets[j])));
    }
    const std::vector<double> coeff(losses.size(), 1.0 / static_cast<double>(losses.size()));
    const diff::Var loss = tape.scalar_combine(losses, coeff);
    if (grads) {
        tape.backward(loss);
        grads->clear();
        for (const auto& p : params) {
            grads->push_back(tape.grad(p));
        }
    }
    return tape.scalar(loss);
}

} // namespace

double surrogate_loss(const Surrogate& surrogate, std::span<const PerturbationSample> batch,
                      std::vector<Matrix>* grads) {
    if (batch.empty()) {
        throw ConfigError("surrogate_loss on an empty batch");
    }
    std::vector<Matrix> norms;
    norms.reserve(batch.size());
    for (const auto& s : batch) {
        norms.push_back(normalize_adjacency(s.adjacency));
    }
    std::vector<const Matrix*> norm_ptrs;
    std::vector<const ClassDistribution*> target_ptrs;
    for (std::size_t j = 0; j < batch.size(); ++j) {
        norm_ptrs.push_back(&norms[j]);
        target_ptrs.push_back(&batch[j].target);
    }
    return batch_loss(surrogate, norm_ptrs, target_ptrs, grads);
}

Surrogate train_surrogate(const PerturbationDataset& dataset, const SurrogateHyper& hyper) {
    if (dataset.samples.empty()) {
        throw ConfigError("train_surrogate: empty dataset");
    }
    const auto n = dataset.samples.size();
    const int num_classes = static_cast<int>(dataset.samples.front().target.size());
    Surrogate surrogate = Surrogate::initialize(dataset.ego, num_classes, hyper);

    std::size_t holdout = static_cast<std::size_t>(std::floor(hyper.holdout_fraction * static_cast<double>(n)));
    if (holdout >= n) {
        holdout = 0;
    }
    const std::size_t train_n = n - holdout;

    std::vector<Matrix> norms;
    norms.reserve(n);
    for (const auto& s : dataset.samples) {
        norms.push_back(normalize_adjacency(s.adjacency));
    }

    std::vector<std::size_t> order(train_n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(splitmix64(hyper.seed + 1));
    diff::OptimizerState opt = diff::OptimizerState::adam();
    const std::size_t batch = static_cast<std::size_t>(std::max(1, hyper.batch_size));
    std::vector<Matrix> grads;
    std::vector<const Matrix*> norm_ptrs;
    std::vector<const ClassDistribution*> target_ptrs;

    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t i = train_n; i > 1; --i) {
            std::swap(order[i - 1], order[uniform_index(rng, i)]);
        }
        for (std::size_t start = 0; start < train_n; start += batch) {
            norm_ptrs.clear();
            target_ptrs.clear();
            for (std::size_t j = start; j < std::min(train_n, start + batch); ++j) {
                norm_ptrs.push_back(&norms[order[j]]);
                target_ptrs.push_back(&dataset.samples[order[j]].target);
            }
            const double loss = batch_loss(surrogate, norm_ptrs, target_ptrs, &grads);
            if (!std::isfinite(loss)) {
                throw DivergenceError("train_surrogate: non-finite loss at epoch " + std::to_string(epoch));
            }
            auto params = surrogate.parameters();
            diff::sgd_step(params, grads, hyper.learning_rate, opt);
            surrogate.set_parameters(std::move(params));
        }
    }

    const std::size_t eval_begin = holdout > 0 ? train_n : 0;
    std::size_t agree = 0;
    double kl = 0.0;
    for (std::size_t j = eval_begin; j < n; ++j) {
        const auto& s = dataset.samples[j];
        const ClassDistribution g = surrogate.predict(s.adjacency);
        agree += g.argmax() == s.target.argmax();
        kl += kl_divergence(s.target, g);
    }
    const auto count = static_cast<double>(n - eval_begin);
    surrogate.fidelity = static_cast<double>(agree) / count;
    surrogate.holdout_kl = kl / count;
    return surrogate;
}

// ---------------------------------------------------------------------------
// Masks

std::string to_string(MaskKind kind) {
    return kind == MaskKind::sigmoid ? "sigmoid" : "gumbel";
}

MaskKind parse_mask_kind(const std::string& name) {
    if (name == "sigmoid") return MaskKind::sigmoid;
    if (name == "gumbel") return MaskKind::gumbel;
    throw ConfigError("unknown mask kind '" + name + "'");
}

std::string to_string(Regularizer reg) {
    switch (reg) {
    case Regularizer::l1: return "l1";
    case Regularizer::l21: return "l21";
    case Regularizer::both: return "both";
    }
    return "both";
}

Regularizer parse_regularizer(const std::string& name) {
    if (name == "l1") return Regularizer::l1;
    if (name == "l21") return Regularizer::l21;
    if (name == "both") return Regularizer::both;
    throw ConfigError("unknown regularizer '" + name + "'");
}

void MaskSpec::validate() const {
    if (iterations < 1) throw ConfigError("mask iterations must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("mask learning rate must be positive");
    if (!(l1_weight >= 0.0) || !(l21_weight >= 0.0)) throw ConfigError("regularization weights must be >= 0");
    if (!(diversity_weight >= 0.0)) throw ConfigError("diversity weight must be >= 0");
    if (noise_samples < 1) throw ConfigError("noise_samples must be >= 1");
    if (kind == MaskKind::gumbel) {
        if (!(tau_initial > 0.0 && tau_final > 0.0)) throw ConfigError("temperatures must be positive");
        if (tau_final > tau_initial) throw ConfigError("temperature schedule must be decreasing");
    }
}

double MaskSpec::temperature(int iteration) const {
    if (iterations <= 1) {
        return tau_final;
    }
    const double frac = static_cast<double>(iteration) / static_cast<double>(iterations - 1);
    return tau_initial * std::pow(tau_final / tau_initial, frac);
}

nlohmann::json MaskSpec::to_json() const {
    nlohmann::json doc{{"kind", to_string(kind)},
                       {"reg", to_string(reg)},
                       {"l1_weight", l1_weight},
                       {"l21_weight", l21_weight},
                       {"learning_rate", learning_rate},
                       {"iterations", iterations},
                       {"diversity_weight", diversity_weight},
                       {"optimizer", optimizer == diff::OptimizerKind::adam ? "adam" : "plain"}};
    if (kind == MaskKind::gumbel) {
        doc["tau_initial"] = tau_initial;
        doc["tau_final"] = tau_final;
        doc["noise_samples"] = noise_samples;
    }
    if (binarize.kind == BinarizeStrategy::Kind::threshold) {
        doc["binarize"] = {{"threshold", binarize.threshold}};
    } else {
        doc["binarize"] = {{"top_k", binarize.k}};
    }
    return doc;
}

BinarizeResult binarize(const EgoGraph& ego, const EdgeScores& scores, const BinarizeStrategy& strategy) {
    const EdgeList edges = ego.edges();
    BinarizeResult out;
    if (strategy.kind == BinarizeStrategy::Kind::threshold) {
        for (const auto& e : edges) {
            if (scores.at(e) > strategy.threshold) {
                out.edges.push_back(e);
            }
        }
        return out;
    }
    std::size_t k = strategy.k;
    if (k > edges.size()) {
        out.warning = "top_k " + std::to_string(k) + " exceeds " + std::to_string(edges.size()) + " edges; clamped";
        k = edges.size();
    }
    std::vector<Edge> ranked = edges;
    std::stable_sort(ranked.begin(), ranked.end(), [&](const Edge& a, const Edge& b) {
        const double sa = scores.at(a);
        const double sb = scores.at(b);
        if (sa != sb) return sa > sb;
        return a < b;
    });
    out.edges.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(out.edges.begin(), out.edges.end());
    return out;
}

GumbelNoise GumbelNoise::draw(std::size_t edges, Rng& rng) {
    GumbelNoise noise{Matrix(static_cast<Index>(edges), 1), Matrix(static_cast<Index>(edges), 1)};
    for (std::size_t e = 0; e < edges; ++e) {
        noise.first(static_cast<Index>(e), 0) = gumbel(rng);
        noise.second(static_cast<Index>(e), 0) = gumbel(rng);
    }
    return noise;
}

double mask_cross_entropy(const Vector& a, const Vector& b) {
    double h = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        const double q = std::clamp(b(i), 1e-6, 1.0 - 1e-6);
        h -= a(i) * std::log(q) + (1.0 - a(i)) * std::log(1.0 - q);
    }
    return h;
}

MaskObjective::MaskObjective(const Surrogate& surrogate, const EgoGraph& ego, int target_class, const MaskSpec& spec,
                             std::vector<Vector> previous_masks)
    : surrogate_(surrogate), ego_(ego), edges_(ego.edges()), spec_(spec), previous_(std::move(previous_masks)) {
    if (target_class < 0 || target_class >= surrogate.num_classes()) {
        throw ShapeError("target class out of range");
    }
    if (surrogate.input_features().rows() != ego.size()) {
        throw ShapeError("surrogate was trained on a different ego graph");
    }
    target_ = Matrix::Zero(1, surrogate.num_classes());
    target_(0, target_class) = 1.0;
    for (const auto& prev : previous_) {
        if (prev.size() != static_cast<Index>(edges_.size())) {
            throw ShapeError("previous mask has the wrong number of edges");
        }
    }
}

MaskObjective::Terms MaskObjective::build(diff::Tape& tape, diff::Var mask_values, diff::Var* total) const {
    const diff::Var mask = tape.edge_scatter(mask_values, edges_, ego_.size());
    const diff::Var masked = tape.hadamard(tape.constant(ego_.adjacency), mask);
    const auto params = surrogate_.constants(tape);
    const diff::Var z = surrogate_.logits(tape, tape.normalize_adjacency(masked), params);
    const diff::Var task = tape.softmax_cross_entropy(z, target_);

    std::vector<diff::Var> terms{task};
    std::vector<double> coeff{1.0};
    Terms out;
    out.task = tape.scalar(task);

    if (spec_.reg != Regularizer::l21 && spec_.l1_weight > 0.0) {
        const diff::Var l1 = tape.l1_norm(mask);
        terms.push_back(l1);
        coeff.push_back(spec_.l1_weight);
        out.regularization += spec_.l1_weight * tape.scalar(l1);
    }
    if (spec_.reg != Regularizer::l1 && spec_.l21_weight > 0.0) {
        const diff::Var l21 = tape.l21_norm(mask);
        terms.push_back(l21);
        coeff.push_back(spec_.l21_weight);
        out.regularization += spec_.l21_weight * tape.scalar(l21);
    }
    if (spec_.diversity_weight > 0.0) {
        // H(M, Q) = Σ_e M_e log((1−Q_e)/Q_e) − Σ_e log(1−Q_e): linear in M.
        for (const auto& prev : previous_) {
            Matrix slope(prev.size(), 1);
            double offset = 0.0;
            for (Index i = 0; i < prev.size(); ++i) {
                const double q = std::clamp(prev(i), 1e-6, 1.0 - 1e-6);
                slope(i, 0) = std::log((1.0 - q) / q);
                offset -= std::log(1.0 - q);
            }
            const diff::Var linear = tape.sum(tape.hadamard(mask_values, tape.constant(std::move(slope))));
            Matrix off(1, 1);
            off(0, 0) = offset;
            const diff::Var constant = tape.constant(std::move(off));
            terms.push_back(linear);
            coeff.push_back(-spec_.diversity_weight);
            terms.push_back(constant);
            coeff.push_back(-spec_.diversity_weight);
            out.diversity += tape.scalar(linear) + offset;
        }
    }
    *total = tape.scalar_combine(terms, coeff);
    out.total = tape.scalar(*total);
    return out;
}

MaskObjective::Terms MaskObjective::evaluate(const Vector& logits, const GumbelNoise* noise, double temperature,
                                             Vector* grad) const {
    if (logits.size() != static_cast<Index>(edges_.size())) {
        throw ShapeError("expected one logit per ego edge");
    }
    diff::Tape tape;
    const diff::Var w = tape.variable(Matrix(logits));
    diff::Var mask;
    if (spec_.kind == MaskKind::sigmoid) {
        mask = tape.sigmoid(w);
    } else {
        if (noise == nullptr) {
            throw ConfigError("gumbel mask objective needs noise");
        }
        mask = tape.gumbel_softmax_pair(w, noise->first, noise->second, temperature);
    }
    diff::Var total;
    const Terms terms = build(tape, mask, &total);
    if (grad) {
        tape.backward(total);
        *grad = tape.grad(w).col(0);
    }
    return terms;
}

double MaskObjective::task_loss(const Vector& mask) const {
    diff::Tape tape;
    diff::Var total;
    return build(tape, tape.constant(Matrix(mask)), &total).task;
}

double MaskObjective::objective_at(const Vector& mask) const {
    diff::Tape tape;
    diff::Var total;
    return build(tape, tape.constant(Matrix(mask)), &total).total;
}

namespace {

Vector sigmoid_vector(const Vector& w) {
    return w.unaryExpr([](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Explanation empty_explanation(const EgoGraph& ego, const MaskSpec& spec, int target_class) {
    Explanation ex;
    ex.method = "relex-" + to_string(spec.kind);
    ex.hops = ego.hops;
    ex.center = ego.center;
    ex.node_map = ego.node_map;
    ex.node = ego.node_map.at(ego.center);
    ex.scores = EdgeScores::zeros(ego);
    ex.target_class = target_class;
    ex.provenance["mask_spec"] = spec.to_json();
    return ex;
}

Explanation run_mask(const Surrogate& surrogate, const EgoGraph& ego, int target_class, const MaskSpec& spec,
                     std::vector<Vector> previous, Rng& rng) {
    spec.validate();
    Explanation ex = empty_explanation(ego, spec, target_class);
    ex.surrogate_fidelity = surrogate.fidelity;
    ex.ego_edges = ego.edges();
    const std::size_t num_edges = ex.ego_edges.size();
    if (num_edges == 0) {
        ex.warnings.push_back("ego graph has no edges; explanation is empty");
        return ex;
    }

    const MaskObjective objective(surrogate, ego, target_class, spec, std::move(previous));
    Vector w = Vector::Zero(static_cast<Index>(num_edges));
    diff::OptimizerState opt;
    opt.kind = spec.optimizer;
    Vector grad;
    ex.objective_trace.reserve(static_cast<std::size_t>(spec.iterations));
    for (int it = 0; it < spec.iterations; ++it) {
        const double tau = spec.temperature(it);
        MaskObjective::Terms terms;
        if (spec.kind == MaskKind::gumbel) {
            grad = Vector::Zero(w.size());
            Vector draw_grad;
            for (int k = 0; k < spec.noise_samples; ++k) {
                const GumbelNoise noise = GumbelNoise::draw(num_edges, rng);
                const auto t = objective.evaluate(w, &noise, tau, &draw_grad);
                terms.total += t.total / spec.noise_samples;
                grad += draw_grad / spec.noise_samples;
            }
        } else {
            terms = objective.evaluate(w, nullptr, tau, &grad);
        }
        if (!std::isfinite(terms.total)) {
            throw DivergenceError("mask objective became non-finite at iteration " + std::to_string(it));
        }
        ex.objective_trace.push_back(terms.total);
        Matrix param = w;
        const Matrix g = grad;
        diff::sgd_step(std::span<Matrix>(&param, 1), std::span<const Matrix>(&g, 1), spec.learning_rate, opt);
        w = param.col(0);
    }

    const Vector soft = sigmoid_vector(w);
    const std::vector<double> soft_values(soft.data(), soft.data() + soft.size());
    ex.scores = EdgeScores::from_edge_values(ego, soft_values);
    if (spec.kind == MaskKind::sigmoid) {
        auto picked = binarize(ego, ex.scores, spec.binarize);
        ex.selected_edges = std::move(picked.edges);
        if (picked.warning) {
            ex.warnings.push_back(*picked.warning);
        }
        ex.task_loss = objective.task_loss(soft);
    } else {
        // Hard mask: the noise-free argmax of each edge's two-way relaxation.
        Vector hard(w.size());
        for (std::size_t e = 0; e < num_edges; ++e) {
            hard(static_cast<Index>(e)) = w(static_cast<Index>(e)) > 0.0 ? 1.0 : 0.0;
            if (w(static_cast<Index>(e)) > 0.0) {
                ex.selected_edges.push_back(ex.ego_edges[e]);
            }
        }
        ex.task_loss = objective.task_loss(hard);
    }
    return ex;
}

} // namespace

Explanation learn_mask(const Surrogate& surrogate, const EgoGraph& ego, const ClassDistribution& target,
                       const MaskSpec& spec, Rng& rng) {
    return run_mask(surrogate, ego, target.argmax(), spec, {}, rng);
}

std::vector<Explanation> learn_diverse_masks(const Surrogate& surrogate, const EgoGraph& ego,
                                             const ClassDistribution& target, const MaskSpec& spec, int count,
                                             Rng& rng) {
    if (count < 1) {
        throw ConfigError("diverse mask count must be >= 1");
    }
    std::vector<Explanation> out;
    std::vector<Vector> previous;
    Rng after = rng;
    for (int t = 0; t < count; ++t) {
        Rng local = rng;
        Explanation ex = run_mask(surrogate, ego, target.argmax(), spec, previous, local);
        const auto values = ex.scores.edge_values(ego);
        previous.emplace_back(Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())));
        ex.provenance["diverse_index"] = t;
        out.push_back(std::move(ex));
        after = local;
    }
    rng = after;
    return out;
}

RelexResult explain_relex(const BlackBoxModel& blackbox, const EgoGraph& ego, NodeId node, const RelexConfig& config,
                          std::span<const MaskKind> kinds, int diverse, Rng& rng) {
    RelexResult result;
    const ClassDistribution original = predict_ego(blackbox, ego);
    const PerturbationDataset ds = build_dataset(ego, blackbox, config.samples, config.keep_prob, rng);
    SurrogateHyper hyper = config.surrogate;
    hyper.seed = rng();
    result.surrogate = train_surrogate(ds, hyper);

    // Each mask kind draws from its own stream, so results do not depend on the order of kinds.
    const std::uint64_t mask_seed = rng();
    for (const MaskKind kind : kinds) {
        MaskSpec spec = config.mask;
        spec.kind = kind;
        Rng mask_rng = derive_rng(mask_seed, kind == MaskKind::sigmoid ? 1 : 2);
        std::vector<Explanation> masks;
        if (diverse > 1) {
            masks = learn_diverse_masks(result.surrogate, ego, original, spec, diverse, mask_rng);
        } else {
            masks.push_back(learn_mask(result.surrogate, ego, original, spec, mask_rng));
        }
        for (auto& ex : masks) {
            ex.node = node;
            ex.provenance["blackbox"] = blackbox.id();
            ex.provenance["samples"] = config.samples;
            ex.provenance["keep_prob"] = config.keep_prob;
            ex.provenance["surrogate_holdout_kl"] = result.surrogate.holdout_kl;
            result.explanations.push_back(std::move(ex));
        }
    }
    return result;
}

} // namespace relex
