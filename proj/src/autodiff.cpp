#include "mgcn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgcn/error.hpp"

namespace mgcn {

namespace {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::Hadamard: return "hadamard";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::AddRow: return "add_row";
        case OpKind::Scale: return "scale";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Sum: return "sum";
        case OpKind::Trace: return "trace";
        case OpKind::Vectorize: return "vectorize";
        case OpKind::VStack: return "vstack";
        case OpKind::HStack: return "hstack";
        case OpKind::Mse: return "mse";
        case OpKind::L1Norm: return "l1_norm";
        case OpKind::SqFrobenius: return "sq_frobenius";
    }
    return "?";
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tape& same_tape(Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw Error("autodiff: operands belong to different tapes");
    }
    return *a.tape();
}

Tape& tape_of(Var a) {
    if (!a.valid()) throw Error("autodiff: invalid variable");
    return *a.tape();
}

} // namespace

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (!value.all_finite()) throw NumericError("autodiff: non-finite leaf value");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Tensor& value) {
    if (!value.all_finite()) throw NumericError("autodiff: non-finite constant");
    Node n;
    n.borrowed = &value;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const { return node_value(nodes_.at(id)); }

const Tensor& Tape::grad(std::size_t id) const {
    if (!backward_done_) throw Error("autodiff: grad() requested before backward()");
    const Node& n = nodes_.at(id);
    if (!n.has_grad) {
        // Unreachable node: zero gradient, materialised lazily.
        auto& m = const_cast<Node&>(n);
        m.grad = Tensor(node_value(n).rows(), node_value(n).cols());
        m.has_grad = true;
    }
    return n.grad;
}

Tensor& Tape::leaf_value(Var v) {
    Node& n = nodes_.at(v.id());
    if (n.op != OpKind::Leaf || n.borrowed) throw Error("autodiff: leaf_value() needs an owned leaf");
    return n.value;
}

Var Tape::record(OpKind op, std::vector<std::size_t> inputs, double scalar) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.scalar = scalar;
    for (std::size_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_.at(in).requires_grad;
    n.value = compute(n);
    if (!n.value.all_finite()) {
        throw NumericError(std::string("autodiff: non-finite output from ") + op_name(op));
    }
    nodes_.push_back(std::move(n));
    backward_done_ = false;
    return Var(this, nodes_.size() - 1);
}

Tensor Tape::compute(const Node& n) const {
    auto in = [&](std::size_t i) -> const Tensor& { return value(n.inputs[i]); };
    switch (n.op) {
        case OpKind::Leaf: return n.value;
        case OpKind::MatMul: return dense::matmul(in(0), in(1));
        case OpKind::Transpose: return dense::transpose(in(0));
        case OpKind::Hadamard: return dense::hadamard(in(0), in(1));
        case OpKind::Add: return dense::add(in(0), in(1));
        case OpKind::Sub: return dense::sub(in(0), in(1));
        case OpKind::AddRow: {
            const Tensor& a = in(0);
            const Tensor& r = in(1);
            if (r.rows() != 1 || r.cols() != a.cols()) {
                throw ShapeError("add_row: " + a.shape_string() + " + " + r.shape_string());
            }
            Tensor out = a;
            for (std::size_t i = 0; i < out.rows(); ++i)
                for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r[j];
            return out;
        }
        case OpKind::Scale: return dense::scale(in(0), n.scalar);
        case OpKind::Relu: {
            Tensor out = in(0);
            for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
            return out;
        }
        case OpKind::Sigmoid: {
            Tensor out = in(0);
            for (double& v : out.values()) v = sigmoid_scalar(v);
            return out;
        }
        case OpKind::Sum: return Tensor::scalar(dense::sum(in(0)));
        case OpKind::Trace: return Tensor::scalar(dense::trace(in(0)));
        case OpKind::Vectorize: return Tensor(1, in(0).size(), in(0).values());
        case OpKind::VStack: {
            const std::size_t cols = in(0).cols();
            std::size_t rows = 0;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                if (in(i).cols() != cols) throw ShapeError("vstack: column mismatch");
                rows += in(i).rows();
            }
            std::vector<double> v;
            v.reserve(rows * cols);
            for (std::size_t i = 0; i < n.inputs.size(); ++i)
                v.insert(v.end(), in(i).values().begin(), in(i).values().end());
            return Tensor(rows, cols, std::move(v));
        }
        case OpKind::HStack: {
            const std::size_t rows = in(0).rows();
            std::size_t cols = 0;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                if (in(i).rows() != rows) throw ShapeError("hstack: row mismatch");
                cols += in(i).cols();
            }
            Tensor out(rows, cols);
            std::size_t offset = 0;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                const Tensor& part = in(i);
                for (std::size_t r = 0; r < rows; ++r)
                    std::copy(part.row(r).begin(), part.row(r).end(), out.row(r).begin() + offset);
                offset += part.cols();
            }
            return out;
        }
        case OpKind::Mse: {
            require_same_shape(in(0), in(1), "mse");
            if (in(0).empty()) throw ShapeError("mse: empty operands");
            double s = 0.0;
            for (std::size_t i = 0; i < in(0).size(); ++i) {
                const double d = in(0)[i] - in(1)[i];
                s += d * d;
            }
            return Tensor::scalar(s / static_cast<double>(in(0).size()));
        }
        case OpKind::L1Norm: {
            double s = 0.0;
            for (double v : in(0).values()) s += std::abs(v);
            return Tensor::scalar(s);
        }
        case OpKind::SqFrobenius: {
            double s = 0.0;
            for (double v : in(0).values()) s += v * v;
            return Tensor::scalar(s);
        }
    }
    throw Error("autodiff: unknown op");
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        dense::axpy(1.0, g, n.grad);
    }
}

void Tape::propagate(std::size_t id) {
    const Node& n = nodes_[id];
    if (!n.has_grad || n.op == OpKind::Leaf) return;
    const Tensor& g = n.grad;
    auto in = [&](std::size_t i) -> const Tensor& { return value(n.inputs[i]); };
    auto needs = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };

    switch (n.op) {
        case OpKind::Leaf: break;
        case OpKind::MatMul:
            if (needs(0)) accumulate(n.inputs[0], dense::matmul_nt(g, in(1)));
            if (needs(1)) accumulate(n.inputs[1], dense::matmul_tn(in(0), g));
            break;
        case OpKind::Transpose: accumulate(n.inputs[0], dense::transpose(g)); break;
        case OpKind::Hadamard:
            if (needs(0)) accumulate(n.inputs[0], dense::hadamard(g, in(1)));
            if (needs(1)) accumulate(n.inputs[1], dense::hadamard(g, in(0)));
            break;
        case OpKind::Add:
            accumulate(n.inputs[0], g);
            accumulate(n.inputs[1], g);
            break;
        case OpKind::Sub:
            accumulate(n.inputs[0], g);
            if (needs(1)) accumulate(n.inputs[1], dense::scale(g, -1.0));
            break;
        case OpKind::AddRow: {
            accumulate(n.inputs[0], g);
            if (needs(1)) {
                Tensor col(1, g.cols());
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) col[j] += g(i, j);
                accumulate(n.inputs[1], col);
            }
            break;
        }
        case OpKind::Scale: accumulate(n.inputs[0], dense::scale(g, n.scalar)); break;
        case OpKind::Relu: {
            Tensor d = g;
            const Tensor& x = in(0);
            for (std::size_t i = 0; i < d.size(); ++i)
                if (!(x[i] > 0.0)) d[i] = 0.0;
            accumulate(n.inputs[0], d);
            break;
        }
        case OpKind::Sigmoid: {
            Tensor d = g;
            const Tensor& y = n.value;
            for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
            accumulate(n.inputs[0], d);
            break;
        }
        case OpKind::Sum: {
            const Tensor& x = in(0);
            accumulate(n.inputs[0], Tensor(x.rows(), x.cols(), g.item()));
            break;
        }
        case OpKind::Trace: {
            const Tensor& x = in(0);
            Tensor d(x.rows(), x.cols());
            for (std::size_t i = 0; i < x.rows(); ++i) d(i, i) = g.item();
            accumulate(n.inputs[0], d);
            break;
        }
        case OpKind::Vectorize: {
            const Tensor& x = in(0);
            accumulate(n.inputs[0], Tensor(x.rows(), x.cols(), g.values()));
            break;
        }
        case OpKind::VStack: {
            std::size_t offset = 0;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                const Tensor& part = in(i);
                if (needs(i)) {
                    std::vector<double> v(g.values().begin() + offset * g.cols(),
                                          g.values().begin() + (offset + part.rows()) * g.cols());
                    accumulate(n.inputs[i], Tensor(part.rows(), part.cols(), std::move(v)));
                }
                offset += part.rows();
            }
            break;
        }
        case OpKind::HStack: {
            std::size_t offset = 0;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                const Tensor& part = in(i);
                if (needs(i)) {
                    Tensor d(part.rows(), part.cols());
                    for (std::size_t r = 0; r < part.rows(); ++r)
                        std::copy(g.row(r).begin() + offset, g.row(r).begin() + offset + part.cols(),
                                  d.row(r).begin());
                    accumulate(n.inputs[i], d);
                }
                offset += part.cols();
            }
            break;
        }
        case OpKind::Mse: {
            const Tensor& p = in(0);
            const Tensor& t = in(1);
            const double k = 2.0 * g.item() / static_cast<double>(p.size());
            Tensor d(p.rows(), p.cols());
            for (std::size_t i = 0; i < d.size(); ++i) d[i] = k * (p[i] - t[i]);
            if (needs(0)) accumulate(n.inputs[0], d);
            if (needs(1)) accumulate(n.inputs[1], dense::scale(d, -1.0));
            break;
        }
        case OpKind::L1Norm: {
            const Tensor& x = in(0);
            Tensor d(x.rows(), x.cols());
            for (std::size_t i = 0; i < d.size(); ++i)
                d[i] = x[i] > 0.0 ? g.item() : (x[i] < 0.0 ? -g.item() : 0.0);
            accumulate(n.inputs[0], d);
            break;
        }
        case OpKind::SqFrobenius:
            accumulate(n.inputs[0], dense::scale(in(0), 2.0 * g.item()));
            break;
    }
}

void Tape::backward(Var loss) {
    if (loss.tape() != this || loss.id() >= nodes_.size()) {
        throw Error("autodiff: backward() on a loss that was not recorded on this tape");
    }
    const Tensor& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ShapeError("autodiff: backward() needs a scalar loss, got " + lv.shape_string());
    }
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    Node& root = nodes_[loss.id()];
    root.grad = Tensor::scalar(1.0);
    root.has_grad = true;
    for (std::size_t id = loss.id() + 1; id-- > 0;) propagate(id);
    backward_done_ = true;
}

void Tape::replay() {
    for (Node& n : nodes_) {
        if (n.op == OpKind::Leaf) continue;
        n.value = compute(n);
        if (!n.value.all_finite()) {
            throw NumericError(std::string("autodiff: non-finite output from ") + op_name(n.op) +
                               " during replay");
        }
    }
    backward_done_ = false;
}

Var matmul(Var a, Var b) { return same_tape(a, b).record(OpKind::MatMul, {a.id(), b.id()}); }
Var transpose(Var a) { return tape_of(a).record(OpKind::Transpose, {a.id()}); }
Var hadamard(Var a, Var b) { return same_tape(a, b).record(OpKind::Hadamard, {a.id(), b.id()}); }
Var add(Var a, Var b) { return same_tape(a, b).record(OpKind::Add, {a.id(), b.id()}); }
Var sub(Var a, Var b) { return same_tape(a, b).record(OpKind::Sub, {a.id(), b.id()}); }
Var add_row(Var a, Var row) { return same_tape(a, row).record(OpKind::AddRow, {a.id(), row.id()}); }
Var scale(Var a, double s) { return tape_of(a).record(OpKind::Scale, {a.id()}, s); }
Var relu(Var a) { return tape_of(a).record(OpKind::Relu, {a.id()}); }
Var sigmoid(Var a) { return tape_of(a).record(OpKind::Sigmoid, {a.id()}); }
Var sum(Var a) { return tape_of(a).record(OpKind::Sum, {a.id()}); }
Var trace(Var a) { return tape_of(a).record(OpKind::Trace, {a.id()}); }
Var vectorize(Var a) { return tape_of(a).record(OpKind::Vectorize, {a.id()}); }

Var vstack(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("vstack: no operands");
    std::vector<std::size_t> ids;
    for (Var p : parts) {
        same_tape(parts.front(), p);
        ids.push_back(p.id());
    }
    return tape_of(parts.front()).record(OpKind::VStack, std::move(ids));
}

Var hstack(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("hstack: no operands");
    std::vector<std::size_t> ids;
    for (Var p : parts) {
        same_tape(parts.front(), p);
        ids.push_back(p.id());
    }
    return tape_of(parts.front()).record(OpKind::HStack, std::move(ids));
}

Var mse(Var prediction, Var target) {
    return same_tape(prediction, target).record(OpKind::Mse, {prediction.id(), target.id()});
}
Var l1_norm(Var a) { return tape_of(a).record(OpKind::L1Norm, {a.id()}); }
Var sq_frobenius(Var a) { return tape_of(a).record(OpKind::SqFrobenius, {a.id()}); }

GradCheckResult gradient_check(Tape& tape, Var loss, Var param, double eps, double tol) {
    if (!(eps > 0.0)) throw ValidationError("gradient_check: eps must be positive");
    tape.backward(loss);
    const Tensor analytic = tape.grad(param.id());
    Tensor& p = tape.leaf_value(param);

    GradCheckResult result;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + eps;
        tape.replay();
        const double plus = tape.value(loss.id()).item();
        p[i] = orig - eps;
        tape.replay();
        const double minus = tape.value(loss.id()).item();
        p[i] = orig;
        if (!std::isfinite(plus) || !std::isfinite(minus)) {
            throw NumericError("gradient_check: non-finite perturbed loss");
        }
        const double numeric = (plus - minus) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_entry = i;
        }
    }
    tape.replay();
    result.passed = result.max_rel_error < tol;
    return result;
}

} // namespace mgcn
