#include "relex/diffgraph.hpp"

#include <cmath>
#include <string>

#include "relex/error.hpp"

namespace relex::diff {

namespace {

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void expect_arity(OpKind kind, std::span<const Var> inputs, std::size_t n) {
    if (inputs.size() != n) {
        throw ShapeError(std::string(op_name(kind)) + " expects " + std::to_string(n) + " inputs, got " +
                         std::to_string(inputs.size()));
    }
}

void expect_scalar(OpKind kind, const Matrix& m) {
    if (m.rows() != 1 || m.cols() != 1) {
        throw ShapeError(std::string(op_name(kind)) + " expects 1x1 operands, got " + shape(m));
    }
}

void expect_same(OpKind kind, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op_name(kind)) + " shape mismatch: " + shape(a) + " vs " + shape(b));
    }
}

Matrix scalar_matrix(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return m;
}

} // namespace

std::string_view op_name(OpKind kind) {
    switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::sparse_matmul: return "sparse_matmul";
    case OpKind::add: return "add";
    case OpKind::hadamard: return "hadamard";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::relu: return "relu";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::row_select: return "row_select";
    case OpKind::gumbel_softmax_pair: return "gumbel_softmax_pair";
    case OpKind::normalize_adjacency: return "normalize_adjacency";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    case OpKind::l1_norm: return "l1_norm";
    case OpKind::l21_norm: return "l21_norm";
    case OpKind::scalar_combine: return "scalar_combine";
    case OpKind::sum: return "sum";
    case OpKind::edge_scatter: return "edge_scatter";
    }
    return "unknown";
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

const Matrix& Tape::value(Var v) const {
    return nodes_.at(v.id).value;
}

double Tape::scalar(Var v) const {
    const auto& m = value(v);
    if (m.size() != 1) {
        throw ShapeError("scalar() on a " + shape(m) + " node");
    }
    return m(0, 0);
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, OpAttributes attrs) {
    for (const auto& in : inputs) {
        if (in.id >= nodes_.size()) {
            throw Error("input handle " + std::to_string(in.id) + " is not on this tape");
        }
    }
    auto val = [&](std::size_t k) -> const Matrix& { return nodes_[inputs[k].id].value; };

    Node node;
    node.kind = kind;
    for (const auto& in : inputs) {
        node.inputs.push_back(in.id);
        node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }

    switch (kind) {
    case OpKind::matmul:
        expect_arity(kind, inputs, 2);
        if (val(0).cols() != val(1).rows()) {
            throw ShapeError("matmul shape mismatch: " + shape(val(0)) + " * " + shape(val(1)));
        }
        node.value = val(0) * val(1);
        break;
    case OpKind::sparse_matmul:
        expect_arity(kind, inputs, 1);
        if (!attrs.sparse || attrs.sparse->cols() != val(0).rows()) {
            throw ShapeError("sparse_matmul operand mismatch");
        }
        node.value = (*attrs.sparse) * val(0);
        break;
    case OpKind::add:
        expect_arity(kind, inputs, 2);
        expect_same(kind, val(0), val(1));
        node.value = val(0) + val(1);
        break;
    case OpKind::hadamard:
        expect_arity(kind, inputs, 2);
        expect_same(kind, val(0), val(1));
        node.value = val(0).cwiseProduct(val(1));
        break;
    case OpKind::sigmoid:
        expect_arity(kind, inputs, 1);
        node.value = val(0).unaryExpr([](double x) { return stable_sigmoid(x); });
        break;
    case OpKind::relu:
        expect_arity(kind, inputs, 1);
        node.value = val(0).cwiseMax(0.0);
        break;
    case OpKind::concat_cols: {
        if (inputs.empty()) {
            throw ShapeError("concat_cols needs at least one input");
        }
        Index cols = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            if (val(k).rows() != val(0).rows()) {
                throw ShapeError("concat_cols row mismatch: " + shape(val(0)) + " vs " + shape(val(k)));
            }
            cols += val(k).cols();
        }
        node.value.resize(val(0).rows(), cols);
        Index at = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            node.value.middleCols(at, val(k).cols()) = val(k);
            at += val(k).cols();
        }
        break;
    }
    case OpKind::row_select:
        expect_arity(kind, inputs, 1);
        if (attrs.row < 0 || attrs.row >= val(0).rows()) {
            throw ShapeError("row_select row " + std::to_string(attrs.row) + " out of range for " + shape(val(0)));
        }
        node.value = val(0).row(attrs.row);
        break;
    case OpKind::gumbel_softmax_pair: {
        expect_arity(kind, inputs, 1);
        expect_same(kind, val(0), attrs.lhs_noise);
        expect_same(kind, val(0), attrs.rhs_noise);
        if (!(attrs.temperature > 0.0)) {
            throw ShapeError("gumbel_softmax_pair temperature must be positive");
        }
        const double tau = attrs.temperature;
        node.value = ((val(0) + attrs.lhs_noise - attrs.rhs_noise) / tau).unaryExpr([](double x) {
            return stable_sigmoid(x);
        });
        break;
    }
    case OpKind::normalize_adjacency:
        expect_arity(kind, inputs, 1);
        if (val(0).rows() != val(0).cols()) {
            throw ShapeError("normalize_adjacency needs a square matrix, got " + shape(val(0)));
        }
        node.value = relex::normalize_adjacency(val(0));
        break;
    case OpKind::softmax_cross_entropy: {
        expect_arity(kind, inputs, 1);
        expect_same(kind, val(0), attrs.targets);
        double loss = 0.0;
        const Matrix& z = val(0);
        for (Index r = 0; r < z.rows(); ++r) {
            const double mass = attrs.targets.row(r).sum();
            if (mass == 0.0) {
                continue;
            }
            const double mx = z.row(r).maxCoeff();
            const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
            loss -= (attrs.targets.row(r).array() * (z.row(r).array() - lse)).sum();
        }
        node.value = scalar_matrix(loss);
        break;
    }
    case OpKind::l1_norm:
        expect_arity(kind, inputs, 1);
        node.value = scalar_matrix(val(0).cwiseAbs().sum());
        break;
    case OpKind::l21_norm:
        expect_arity(kind, inputs, 1);
        node.value = scalar_matrix(val(0).rowwise().norm().sum());
        break;
    case OpKind::scalar_combine: {
        if (attrs.coefficients.size() != inputs.size()) {
            throw ShapeError("scalar_combine needs one coefficient per input");
        }
        double total = 0.0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            expect_scalar(kind, val(k));
            total += attrs.coefficients[k] * val(k)(0, 0);
        }
        node.value = scalar_matrix(total);
        break;
    }
    case OpKind::sum:
        expect_arity(kind, inputs, 1);
        node.value = scalar_matrix(val(0).sum());
        break;
    case OpKind::edge_scatter: {
        expect_arity(kind, inputs, 1);
        if (val(0).cols() != 1 || val(0).rows() != static_cast<Index>(attrs.edges.size())) {
            throw ShapeError("edge_scatter expects a " + std::to_string(attrs.edges.size()) + "x1 input, got " +
                             shape(val(0)));
        }
        node.value = Matrix::Zero(attrs.size, attrs.size);
        for (std::size_t k = 0; k < attrs.edges.size(); ++k) {
            const auto& e = attrs.edges[k];
            if (e.u < 0 || e.v >= attrs.size || e.u == e.v) {
                throw ShapeError("edge_scatter edge out of range");
            }
            node.value(e.u, e.v) = val(0)(static_cast<Index>(k), 0);
            node.value(e.v, e.u) = val(0)(static_cast<Index>(k), 0);
        }
        break;
    }
    case OpKind::leaf:
    default:
        throw Error("record: unsupported op kind " + std::to_string(static_cast<int>(kind)));
    }
    node.attrs = std::move(attrs);
    return push(std::move(node));
}

Var Tape::matmul(Var a, Var b) {
    const Var in[] = {a, b};
    return record(OpKind::matmul, in);
}

Var Tape::sparse_matmul(std::shared_ptr<const SparseMatrix> lhs, Var b) {
    OpAttributes attrs;
    attrs.sparse = std::move(lhs);
    const Var in[] = {b};
    return record(OpKind::sparse_matmul, in, std::move(attrs));
}

Var Tape::add(Var a, Var b) {
    const Var in[] = {a, b};
    return record(OpKind::add, in);
}

Var Tape::hadamard(Var a, Var b) {
    const Var in[] = {a, b};
    return record(OpKind::hadamard, in);
}

Var Tape::sigmoid(Var a) {
    const Var in[] = {a};
    return record(OpKind::sigmoid, in);
}

Var Tape::relu(Var a) {
    const Var in[] = {a};
    return record(OpKind::relu, in);
}

Var Tape::concat_cols(std::span<const Var> parts) {
    return record(OpKind::concat_cols, parts);
}

Var Tape::row_select(Var a, Index row) {
    OpAttributes attrs;
    attrs.row = row;
    const Var in[] = {a};
    return record(OpKind::row_select, in, std::move(attrs));
}

Var Tape::gumbel_softmax_pair(Var logits, Matrix g1, Matrix g2, double temperature) {
    OpAttributes attrs;
    attrs.lhs_noise = std::move(g1);
    attrs.rhs_noise = std::move(g2);
    attrs.temperature = temperature;
    const Var in[] = {logits};
    return record(OpKind::gumbel_softmax_pair, in, std::move(attrs));
}

Var Tape::normalize_adjacency(Var a) {
    const Var in[] = {a};
    return record(OpKind::normalize_adjacency, in);
}

Var Tape::softmax_cross_entropy(Var logits, Matrix targets) {
    OpAttributes attrs;
    attrs.targets = std::move(targets);
    const Var in[] = {logits};
    return record(OpKind::softmax_cross_entropy, in, std::move(attrs));
}

Var Tape::l1_norm(Var a) {
    const Var in[] = {a};
    return record(OpKind::l1_norm, in);
}

Var Tape::l21_norm(Var a) {
    const Var in[] = {a};
    return record(OpKind::l21_norm, in);
}

Var Tape::scalar_combine(std::span<const Var> scalars, std::span<const double> coefficients) {
    OpAttributes attrs;
    attrs.coefficients.assign(coefficients.begin(), coefficients.end());
    return record(OpKind::scalar_combine, scalars, std::move(attrs));
}

Var Tape::sum(Var a) {
    const Var in[] = {a};
    return record(OpKind::sum, in);
}

Var Tape::edge_scatter(Var values, EdgeList edges, Index size) {
    OpAttributes attrs;
    attrs.edges = std::move(edges);
    attrs.size = size;
    const Var in[] = {values};
    return record(OpKind::edge_scatter, in, std::move(attrs));
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
    if (!nodes_[id].requires_grad) {
        return;
    }
    auto& adj = adjoints_[id];
    if (adj.size() == 0) {
        adj = delta;
    } else {
        adj += delta;
    }
}

void Tape::backward(Var seed) {
    if (seed.id >= nodes_.size()) {
        throw Error("backward: seed is not on this tape");
    }
    const auto& seed_value = nodes_[seed.id].value;
    if (seed_value.rows() != 1 || seed_value.cols() != 1) {
        throw ShapeError("backward needs a scalar seed, got " + shape(seed_value));
    }
    adjoints_.assign(nodes_.size(), Matrix());
    if (!nodes_[seed.id].requires_grad) {
        return;
    }
    adjoints_[seed.id] = Matrix::Ones(1, 1);
    for (std::size_t i = seed.id + 1; i-- > 0;) {
        if (adjoints_[i].size() == 0 || nodes_[i].kind == OpKind::leaf) {
            continue;
        }
        propagate(nodes_[i], adjoints_[i]);
    }
}

Matrix Tape::grad(Var v) const {
    const auto& val = nodes_.at(v.id).value;
    if (v.id < adjoints_.size() && adjoints_[v.id].size() != 0) {
        return adjoints_[v.id];
    }
    return Matrix::Zero(val.rows(), val.cols());
}

void Tape::propagate(const Node& node, const Matrix& g) {
    auto in = [&](std::size_t k) -> const Matrix& { return nodes_[node.inputs[k]].value; };
    auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };

    switch (node.kind) {
    case OpKind::matmul:
        if (wants(0)) accumulate(node.inputs[0], g * in(1).transpose());
        if (wants(1)) accumulate(node.inputs[1], in(0).transpose() * g);
        break;
    case OpKind::sparse_matmul:
        accumulate(node.inputs[0], node.attrs.sparse->transpose() * g);
        break;
    case OpKind::add:
        accumulate(node.inputs[0], g);
        accumulate(node.inputs[1], g);
        break;
    case OpKind::hadamard:
        if (wants(0)) accumulate(node.inputs[0], g.cwiseProduct(in(1)));
        if (wants(1)) accumulate(node.inputs[1], g.cwiseProduct(in(0)));
        break;
    case OpKind::sigmoid:
        accumulate(node.inputs[0], g.array() * node.value.array() * (1.0 - node.value.array()));
        break;
    case OpKind::relu:
        accumulate(node.inputs[0], (in(0).array() > 0.0).select(g, 0.0));
        break;
    case OpKind::concat_cols: {
        Index at = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const Index w = in(k).cols();
            if (wants(k)) accumulate(node.inputs[k], g.middleCols(at, w));
            at += w;
        }
        break;
    }
    case OpKind::row_select: {
        Matrix full = Matrix::Zero(in(0).rows(), in(0).cols());
        full.row(node.attrs.row) = g;
        accumulate(node.inputs[0], full);
        break;
    }
    case OpKind::gumbel_softmax_pair:
        accumulate(node.inputs[0],
                   g.array() * node.value.array() * (1.0 - node.value.array()) / node.attrs.temperature);
        break;
    case OpKind::normalize_adjacency: {
        // Â_ij = s_i B_ij s_j with B = A + I, s = d^(-1/2), d = rowsum(B).
        const Matrix& a = in(0);
        Vector degree = a.rowwise().sum();
        degree.array() += 1.0;
        const Vector s = degree.array().rsqrt();
        Matrix b = a;
        b.diagonal().array() += 1.0;
        const Matrix gb = g.cwiseProduct(b);
        // dL/ds_i = Σ_j G_ij B_ij s_j + Σ_j G_ji B_ji s_j
        const Vector ds = gb * s + gb.transpose() * s;
        const Vector dd = ds.array() * (-0.5) * s.array() / degree.array();
        Matrix da = s.asDiagonal() * g * s.asDiagonal();
        da.colwise() += dd;
        accumulate(node.inputs[0], da);
        break;
    }
    case OpKind::softmax_cross_entropy: {
        const Matrix& z = in(0);
        const Matrix& t = node.attrs.targets;
        const double scale = g(0, 0);
        Matrix dz = Matrix::Zero(z.rows(), z.cols());
        for (Index r = 0; r < z.rows(); ++r) {
            const double mass = t.row(r).sum();
            if (mass == 0.0) {
                continue;
            }
            const double mx = z.row(r).maxCoeff();
            Eigen::RowVectorXd p = (z.row(r).array() - mx).exp();
            p /= p.sum();
            dz.row(r) = scale * (mass * p - t.row(r));
        }
        accumulate(node.inputs[0], dz);
        break;
    }
    case OpKind::l1_norm:
        accumulate(node.inputs[0], g(0, 0) * in(0).array().sign().matrix());
        break;
    case OpKind::l21_norm: {
        const Matrix& x = in(0);
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for (Index r = 0; r < x.rows(); ++r) {
            const double norm = x.row(r).norm();
            if (norm > 0.0) {
                dx.row(r) = g(0, 0) * x.row(r) / norm;
            }
        }
        accumulate(node.inputs[0], dx);
        break;
    }
    case OpKind::scalar_combine:
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            if (wants(k)) accumulate(node.inputs[k], scalar_matrix(node.attrs.coefficients[k] * g(0, 0)));
        }
        break;
    case OpKind::sum:
        accumulate(node.inputs[0], Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
        break;
    case OpKind::edge_scatter: {
        Matrix dv(static_cast<Index>(node.attrs.edges.size()), 1);
        for (std::size_t k = 0; k < node.attrs.edges.size(); ++k) {
            const auto& e = node.attrs.edges[k];
            dv(static_cast<Index>(k), 0) = g(e.u, e.v) + g(e.v, e.u);
        }
        accumulate(node.inputs[0], dv);
        break;
    }
    case OpKind::leaf:
        break;
    }
}

void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads, double learning_rate,
              OptimizerState& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].rows() != grads[k].rows() || params[k].cols() != grads[k].cols()) {
            throw ShapeError("sgd_step: gradient " + std::to_string(k) + " is " + shape(grads[k]) +
                             ", parameter is " + shape(params[k]));
        }
        if (!grads[k].allFinite()) {
            throw DivergenceError("non-finite gradient for parameter " + std::to_string(k));
        }
    }

    ++state.step;
    if (state.kind == OptimizerKind::plain) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            params[k] -= learning_rate * grads[k];
        }
    } else {
        if (state.first_moment.size() != params.size()) {
            state.first_moment.clear();
            state.second_moment.clear();
            for (const auto& p : params) {
                state.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
                state.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
            }
        }
        const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
        const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& m = state.first_moment[k];
            auto& v = state.second_moment[k];
            m = state.beta1 * m + (1.0 - state.beta1) * grads[k];
            v = state.beta2 * v + (1.0 - state.beta2) * grads[k].cwiseAbs2();
            params[k].array() -=
                learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + state.epsilon);
        }
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k].allFinite()) {
            throw DivergenceError("parameter " + std::to_string(k) + " became non-finite");
        }
    }
}

} // namespace relex::diff
