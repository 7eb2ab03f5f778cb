#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mgcn/tensor.hpp"

namespace mgcn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Tensor& value() const;
    const Tensor& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

enum class OpKind {
    Leaf,
    MatMul,
    Transpose,
    Hadamard,
    Add,
    Sub,
    AddRow,      // matrix + broadcast 1xcols row (bias)
    Scale,
    Relu,
    Sigmoid,
    Sum,
    Trace,
    Vectorize,   // row-major flatten to 1x(rows*cols)
    VStack,
    HStack,
    Mse,         // mean of squared differences
    L1Norm,
    SqFrobenius,
};

// The computation record. Nodes are appended in execution order, so the
// node list is already topologically sorted. A tape is single-threaded;
// distinct tapes share nothing.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Owned leaf. Parameters pass requires_grad = true.
    Var leaf(Tensor value, bool requires_grad);
    Var parameter(Tensor value) { return leaf(std::move(value), true); }
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    // Borrowed constant; `value` must outlive the tape and stay unchanged.
    Var constant_ref(const Tensor& value);

    const Tensor& value(std::size_t id) const;
    // Gradient of the last backward() loss. Nodes the loss does not reach
    // get a zero tensor of their own shape.
    const Tensor& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    OpKind kind(std::size_t id) const { return nodes_.at(id).op; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

    // Writable value of an owned leaf; call replay() afterwards.
    Tensor& leaf_value(Var v);

    void backward(Var loss);
    // Recomputes every non-leaf node from the current leaf values.
    void replay();

    std::size_t size() const { return nodes_.size(); }

    // Used by the op functions below.
    Var record(OpKind op, std::vector<std::size_t> inputs, double scalar = 0.0);

private:
    struct Node {
        OpKind op = OpKind::Leaf;
        std::vector<std::size_t> inputs;
        double scalar = 0.0;
        Tensor value;
        const Tensor* borrowed = nullptr;
        bool requires_grad = false;
        Tensor grad;
        bool has_grad = false;
    };

    const Tensor& node_value(const Node& n) const { return n.borrowed ? *n.borrowed : n.value; }
    Tensor compute(const Node& n) const;
    void propagate(std::size_t id);
    void accumulate(std::size_t id, const Tensor& g);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Differentiable primitives. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var relu(Var a);  // subgradient 0 at 0
Var sigmoid(Var a);
Var sum(Var a);
Var trace(Var a);
Var vectorize(Var a);
Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);
Var mse(Var prediction, Var target);
Var l1_norm(Var a);
Var sq_frobenius(Var a);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_entry = 0;
    bool passed = false;
};

// Compares the analytic gradient of `loss` w.r.t. the owned leaf `param`
// against central differences. Relative error per entry is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). Leaves the tape
// replayed at the original parameter values.
GradCheckResult gradient_check(Tape& tape, Var loss, Var param, double eps, double tol);

} // namespace mgcn
