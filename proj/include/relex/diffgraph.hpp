#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Sparse>

#include "relex/graph.hpp"

namespace relex::diff {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class OpKind {
    leaf,
    matmul,
    sparse_matmul, // constant sparse left operand, used for full-graph training
    add,
    hadamard,
    sigmoid,
    relu,
    concat_cols,
    row_select,
    gumbel_softmax_pair,
    normalize_adjacency,
    softmax_cross_entropy,
    l1_norm,
    l21_norm,
    scalar_combine,
    sum,
    edge_scatter, // per-edge column vector -> symmetric matrix
};

std::string_view op_name(OpKind kind);

/// Handle to a tape node.
struct Var {
    std::size_t id = 0;
};

/// Non-differentiable operands an op needs besides its inputs.
struct OpAttributes {
    Matrix lhs_noise;  // gumbel_softmax_pair: g1
    Matrix rhs_noise;  // gumbel_softmax_pair: g2
    Matrix targets;    // softmax_cross_entropy
    double temperature = 1.0;
    Index row = 0;
    Index size = 0;    // edge_scatter output dimension
    std::vector<double> coefficients;
    EdgeList edges;
    std::shared_ptr<const SparseMatrix> sparse;
};

/// Eager reverse-mode tape over dense matrices. Build one per loss evaluation.
class Tape {
public:
    /// Leaf that does not receive gradients.
    Var constant(Matrix value);
    /// Leaf whose gradient is retrievable after backward().
    Var variable(Matrix value);

    /// Generic entry point; validates arity and shapes, computes the value eagerly.
    Var record(OpKind kind, std::span<const Var> inputs, OpAttributes attrs = {});

    Var matmul(Var a, Var b);
    Var sparse_matmul(std::shared_ptr<const SparseMatrix> lhs, Var b);
    Var add(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var concat_cols(std::span<const Var> parts);
    Var row_select(Var a, Index row);
    /// Two-category concrete relaxation per entry: σ((w + g1 − g2) / τ).
    Var gumbel_softmax_pair(Var logits, Matrix g1, Matrix g2, double temperature);
    Var normalize_adjacency(Var a);
    /// −Σ_r Σ_c t_rc log softmax(z_r)_c; rows with all-zero targets contribute nothing.
    Var softmax_cross_entropy(Var logits, Matrix targets);
    Var l1_norm(Var a);
    /// Σ_i ||row_i||_2.
    Var l21_norm(Var a);
    /// Σ_k c_k s_k over 1×1 inputs.
    Var scalar_combine(std::span<const Var> scalars, std::span<const double> coefficients);
    Var sum(Var a);
    Var edge_scatter(Var values, EdgeList edges, Index size);

    [[nodiscard]] const Matrix& value(Var v) const;
    [[nodiscard]] double scalar(Var v) const;
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a 1×1 node. Throws ShapeError for a non-scalar seed.
    void backward(Var seed);
    /// Adjoint of `v` from the last backward(); zero if `v` was unreachable.
    [[nodiscard]] Matrix grad(Var v) const;

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::vector<std::size_t> inputs;
        OpAttributes attrs;
        Matrix value;
        bool requires_grad = false;
    };

    Var push(Node node);
    void accumulate(std::size_t id, const Matrix& delta);
    void propagate(const Node& node, const Matrix& g);

    std::vector<Node> nodes_;
    std::vector<Matrix> adjoints_;
};

enum class OptimizerKind { plain, adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    std::vector<Matrix> first_moment;
    std::vector<Matrix> second_moment;

    static OptimizerState plain() {
        OptimizerState s;
        s.kind = OptimizerKind::plain;
        return s;
    }
    static OptimizerState adam() { return {}; }
};

/// One descent step. Throws DivergenceError if any gradient or updated value is non-finite.
void sgd_step(std::span<Matrix> params, std::span<const Matrix> grads, double learning_rate,
              OptimizerState& state);

} // namespace relex::diff
