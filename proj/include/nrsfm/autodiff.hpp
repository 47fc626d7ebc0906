#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nrsfm/errors.hpp"
#include "nrsfm/matrix.hpp"

namespace nrsfm {

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape owns the nodes of one computation graph; a Var is an index into it.
// Creation order is a topological order, so backward() is a single reverse
// sweep. Values are immutable once a node is created. Graphs are built fresh
// per training step and thrown away.

enum class OpKind : uint8_t {
    Leaf,
    Matmul,
    Add,
    Subtract,
    ScalarMultiply,
    Hadamard,
    Divide,
    ConcatRows,
    SliceRows,
    Transpose,
    LeakyRelu,
    Sum,
    Mean,
    FrobeniusNorm,
    L1Norm,
    Reshape,
    Rodrigues, // axis-angle (3x1) -> rotation matrix (3x3); see note below
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Matmul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Subtract: return "subtract";
        case OpKind::ScalarMultiply: return "scalar-multiply";
        case OpKind::Hadamard: return "hadamard";
        case OpKind::Divide: return "divide";
        case OpKind::ConcatRows: return "concat-rows";
        case OpKind::SliceRows: return "slice-rows";
        case OpKind::Transpose: return "transpose";
        case OpKind::LeakyRelu: return "leaky-relu";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::FrobeniusNorm: return "frobenius-norm";
        case OpKind::L1Norm: return "l1-norm";
        case OpKind::Reshape: return "reshape";
        case OpKind::Rodrigues: return "rodrigues";
    }
    return "?";
}

struct OpAttrs {
    double scalar = 0.0; // scalar-multiply factor, leaky-relu slope
    int i0 = 0;          // slice begin / reshape rows
    int i1 = 0;          // slice count / reshape cols
};

class Tape;

struct Var {
    int32_t index = -1;
    Tape* tape = nullptr;

    bool valid() const { return tape != nullptr && index >= 0; }
    const Matrix& value() const;
};

struct Node {
    Matrix value;
    OpKind op = OpKind::Leaf;
    bool requires_grad = false;
    std::vector<int32_t> parents;
    OpAttrs attrs;
};

class Tape {
public:
    Tape() { nodes_.reserve(256); }

    Var leaf(Matrix value, bool requires_grad = true) {
        Node n;
        n.value = std::move(value);
        n.op = OpKind::Leaf;
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    Var constant(Matrix value) { return leaf(std::move(value), false); }

    size_t size() const { return nodes_.size(); }
    const Node& node(int32_t i) const { return nodes_[i]; }
    const Matrix& value(int32_t i) const { return nodes_[i].value; }

    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1), this};
    }

private:
    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape->value(index); }

// Gradient of a scalar loss with respect to requires-grad leaves, keyed by
// node identity. Leaves not reached by backpropagation are absent.
class GradientMap {
public:
    const Matrix* find(Var v) const {
        auto it = grads_.find(v.index);
        return it == grads_.end() ? nullptr : &it->second;
    }
    bool contains(Var v) const { return grads_.count(v.index) != 0; }
    size_t size() const { return grads_.size(); }
    void insert(int32_t index, Matrix g) { grads_.emplace(index, std::move(g)); }

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    std::unordered_map<int32_t, Matrix> grads_;
};

namespace detail {

inline void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape)
        throw UsageError(std::string(op) + ": operands belong to different tapes");
}

inline bool any_requires_grad(const Tape& t, const std::vector<int32_t>& parents) {
    for (int32_t p : parents)
        if (t.node(p).requires_grad) return true;
    return false;
}

// Axis-angle rotation and its coefficient functions. R = I + a*K + b*K^2
// with K = skew(omega), theta = |omega|, a = sin(theta)/theta,
// b = (1-cos(theta))/theta^2. Series forms keep everything smooth at 0.
struct RodriguesCoeffs {
    double a, b;   // R coefficients
    double ga, gb; // a'(theta)/theta, b'(theta)/theta (for the VJP)
};

inline RodriguesCoeffs rodrigues_coeffs(double theta) {
    RodriguesCoeffs c;
    if (theta < 1e-4) {
        const double t2 = theta * theta;
        c.a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
        c.b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
        c.ga = -1.0 / 3.0 + t2 / 30.0;
        c.gb = -1.0 / 12.0 + t2 / 180.0;
    } else {
        const double s = std::sin(theta), co = std::cos(theta);
        const double t2 = theta * theta, t3 = t2 * theta, t4 = t3 * theta;
        c.a = s / theta;
        c.b = (1.0 - co) / t2;
        c.ga = (theta * co - s) / t3;
        c.gb = (theta * s - 2.0 * (1.0 - co)) / t4;
    }
    return c;
}

inline Matrix skew3(double x, double y, double z) {
    Matrix k(3, 3);
    k(0, 1) = -z; k(0, 2) = y;
    k(1, 0) = z;  k(1, 2) = -x;
    k(2, 0) = -y; k(2, 1) = x;
    return k;
}

inline Matrix rodrigues_value(const Matrix& omega) {
    const double x = omega.data()[0], y = omega.data()[1], z = omega.data()[2];
    const double theta = std::sqrt(x * x + y * y + z * z);
    const RodriguesCoeffs c = rodrigues_coeffs(theta);
    const Matrix k = skew3(x, y, z);
    const Matrix k2 = multiply(k, k);
    Matrix r = Matrix::identity(3);
    for (int i = 0; i < 9; ++i)
        r.data()[i] += c.a * k.data()[i] + c.b * k2.data()[i];
    return r;
}

// d loss / d omega_i = <upstream, dR/d omega_i> with
// dR/d omega_i = ga*omega_i*K + a*E_i + gb*omega_i*K^2 + b*(E_i K + K E_i),
// E_i = skew(e_i).
inline Matrix rodrigues_vjp(const Matrix& omega, const Matrix& upstream) {
    const double x = omega.data()[0], y = omega.data()[1], z = omega.data()[2];
    const double theta = std::sqrt(x * x + y * y + z * z);
    const RodriguesCoeffs c = rodrigues_coeffs(theta);
    const Matrix k = skew3(x, y, z);
    const Matrix k2 = multiply(k, k);

    const double dot_k = [&] {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) s += upstream.data()[i] * k.data()[i];
        return s;
    }();
    const double dot_k2 = [&] {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) s += upstream.data()[i] * k2.data()[i];
        return s;
    }();

    Matrix grad(3, 1);
    for (int i = 0; i < 3; ++i) {
        Matrix ei = skew3(i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0);
        double dot_ei = 0.0, dot_mix = 0.0;
        // E_i K + K E_i
        Matrix mix = multiply(ei, k);
        add_multiply(mix, k, ei);
        for (int j = 0; j < 9; ++j) {
            dot_ei += upstream.data()[j] * ei.data()[j];
            dot_mix += upstream.data()[j] * mix.data()[j];
        }
        const double wi = omega.data()[i];
        grad(i, 0) = c.ga * wi * dot_k + c.a * dot_ei + c.gb * wi * dot_k2 + c.b * dot_mix;
    }
    return grad;
}

} // namespace detail

inline Var make_op(OpKind op, std::vector<int32_t> parents, Matrix value, Tape& tape,
                   OpAttrs attrs = {}) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.parents = std::move(parents);
    n.attrs = attrs;
    n.requires_grad = detail::any_requires_grad(tape, n.parents);
    return tape.push(std::move(n));
}

inline Var matmul(Var a, Var b) {
    detail::require_same_tape(a, b, "matmul");
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    if (va.cols() != vb.rows())
        throw DimensionError(std::string("matmul: incompatible shapes ") + va.shape_str() +
                             " x " + vb.shape_str());
    return make_op(OpKind::Matmul, {a.index, b.index}, multiply(va, vb), *a.tape);
}

inline Var add(Var a, Var b) {
    detail::require_same_tape(a, b, "add");
    if (!a.value().same_shape(b.value()))
        throw DimensionError("add: shape mismatch " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    return make_op(OpKind::Add, {a.index, b.index}, nrsfm::add(a.value(), b.value()), *a.tape);
}

inline Var subtract(Var a, Var b) {
    detail::require_same_tape(a, b, "subtract");
    if (!a.value().same_shape(b.value()))
        throw DimensionError("subtract: shape mismatch " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    return make_op(OpKind::Subtract, {a.index, b.index}, nrsfm::subtract(a.value(), b.value()),
                   *a.tape);
}

inline Var scalar_multiply(Var a, double s) {
    OpAttrs attrs;
    attrs.scalar = s;
    return make_op(OpKind::ScalarMultiply, {a.index}, scale(a.value(), s), *a.tape, attrs);
}

inline Var hadamard(Var a, Var b) {
    detail::require_same_tape(a, b, "hadamard");
    if (!a.value().same_shape(b.value()))
        throw DimensionError("hadamard: shape mismatch " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    Matrix v = a.value();
    for (int i = 0; i < v.size(); ++i) v.data()[i] *= b.value().data()[i];
    return make_op(OpKind::Hadamard, {a.index, b.index}, std::move(v), *a.tape);
}

inline Var divide(Var a, Var b) {
    detail::require_same_tape(a, b, "divide");
    if (!a.value().same_shape(b.value()))
        throw DimensionError("divide: shape mismatch " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    Matrix v = a.value();
    for (int i = 0; i < v.size(); ++i) v.data()[i] /= b.value().data()[i];
    return make_op(OpKind::Divide, {a.index, b.index}, std::move(v), *a.tape);
}

inline Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw UsageError("concat-rows: empty operand list");
    Tape* tape = parts[0].tape;
    int cols = parts[0].value().cols();
    int rows = 0;
    std::vector<int32_t> parents;
    for (Var p : parts) {
        detail::require_same_tape(parts[0], p, "concat-rows");
        if (p.value().cols() != cols)
            throw DimensionError("concat-rows: column mismatch " + p.value().shape_str());
        rows += p.value().rows();
        parents.push_back(p.index);
    }
    Matrix v(rows, cols);
    int at = 0;
    for (Var p : parts) {
        const Matrix& pv = p.value();
        for (int i = 0; i < pv.rows(); ++i)
            for (int j = 0; j < cols; ++j) v(at + i, j) = pv(i, j);
        at += pv.rows();
    }
    return make_op(OpKind::ConcatRows, std::move(parents), std::move(v), *tape);
}

inline Var concat_rows(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat_rows(std::span<const Var>(v));
}

inline Var slice_rows(Var a, int begin, int count) {
    const Matrix& av = a.value();
    if (begin < 0 || count < 1 || begin + count > av.rows())
        throw DimensionError("slice-rows: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of " + av.shape_str());
    Matrix v(count, av.cols());
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < av.cols(); ++j) v(i, j) = av(begin + i, j);
    OpAttrs attrs;
    attrs.i0 = begin;
    attrs.i1 = count;
    return make_op(OpKind::SliceRows, {a.index}, std::move(v), *a.tape, attrs);
}

inline Var transpose(Var a) {
    return make_op(OpKind::Transpose, {a.index}, nrsfm::transpose(a.value()), *a.tape);
}

inline Var leaky_relu(Var a, double slope = 0.01) {
    Matrix v = a.value();
    for (int i = 0; i < v.size(); ++i)
        if (v.data()[i] < 0.0) v.data()[i] *= slope;
    OpAttrs attrs;
    attrs.scalar = slope;
    return make_op(OpKind::LeakyRelu, {a.index}, std::move(v), *a.tape, attrs);
}

inline Var sum(Var a) {
    Matrix v(1, 1);
    v(0, 0) = sum_entries(a.value());
    return make_op(OpKind::Sum, {a.index}, std::move(v), *a.tape);
}

inline Var mean(Var a) {
    Matrix v(1, 1);
    v(0, 0) = sum_entries(a.value()) / a.value().size();
    return make_op(OpKind::Mean, {a.index}, std::move(v), *a.tape);
}

inline Var frobenius_norm(Var a) {
    Matrix v(1, 1);
    v(0, 0) = nrsfm::frobenius_norm(a.value());
    return make_op(OpKind::FrobeniusNorm, {a.index}, std::move(v), *a.tape);
}

inline Var l1_norm(Var a) {
    Matrix v(1, 1);
    v(0, 0) = nrsfm::l1_norm(a.value());
    return make_op(OpKind::L1Norm, {a.index}, std::move(v), *a.tape);
}

inline Var reshape(Var a, int rows, int cols) {
    const Matrix& av = a.value();
    if (rows * cols != av.size())
        throw DimensionError("reshape: cannot view " + av.shape_str() + " as " +
                             Matrix::shape_str(rows, cols));
    Matrix v(rows, cols, std::vector<double>(av.data(), av.data() + av.size()));
    OpAttrs attrs;
    attrs.i0 = rows;
    attrs.i1 = cols;
    return make_op(OpKind::Reshape, {a.index}, std::move(v), *a.tape, attrs);
}

// Axis-angle exponential map as a single differentiable op. This is the one
// composite the engine ships beyond the elementwise/linear kernel set: the
// rotation head needs d(rotation)/d(axis-angle) and the closed-form VJP is
// both cheaper and better conditioned than a trig-primitive decomposition.
inline Var rodrigues_op(Var omega) {
    const Matrix& v = omega.value();
    if (v.rows() != 3 || v.cols() != 1)
        throw DimensionError("rodrigues: want 3x1 axis-angle, got " + v.shape_str());
    return make_op(OpKind::Rodrigues, {omega.index}, detail::rodrigues_value(v), *omega.tape);
}

// Value copy with gradient flow severed: no parents, never receives gradient.
inline Var detach(Var a) {
    return a.tape->leaf(a.value(), false);
}

// Generic dispatcher mirroring the op table; the typed wrappers above are
// what library code calls.
inline Var apply(OpKind op, std::span<const Var> operands, const OpAttrs& attrs = {}) {
    if (operands.empty()) throw UsageError("apply: empty operand list");
    auto unary = [&](const char* name) -> Var {
        if (operands.size() != 1)
            throw UsageError(std::string("apply: ") + name + " takes one operand");
        return operands[0];
    };
    auto binary = [&](const char* name) -> std::pair<Var, Var> {
        if (operands.size() != 2)
            throw UsageError(std::string("apply: ") + name + " takes two operands");
        return {operands[0], operands[1]};
    };
    switch (op) {
        case OpKind::Matmul: { auto [a, b] = binary("matmul"); return matmul(a, b); }
        case OpKind::Add: { auto [a, b] = binary("add"); return add(a, b); }
        case OpKind::Subtract: { auto [a, b] = binary("subtract"); return subtract(a, b); }
        case OpKind::ScalarMultiply: return scalar_multiply(unary("scalar-multiply"), attrs.scalar);
        case OpKind::Hadamard: { auto [a, b] = binary("hadamard"); return hadamard(a, b); }
        case OpKind::Divide: { auto [a, b] = binary("divide"); return divide(a, b); }
        case OpKind::ConcatRows: return concat_rows(operands);
        case OpKind::SliceRows: return slice_rows(unary("slice-rows"), attrs.i0, attrs.i1);
        case OpKind::Transpose: return transpose(unary("transpose"));
        case OpKind::LeakyRelu: return leaky_relu(unary("leaky-relu"), attrs.scalar);
        case OpKind::Sum: return sum(unary("sum"));
        case OpKind::Mean: return mean(unary("mean"));
        case OpKind::FrobeniusNorm: return frobenius_norm(unary("frobenius-norm"));
        case OpKind::L1Norm: return l1_norm(unary("l1-norm"));
        case OpKind::Reshape: return reshape(unary("reshape"), attrs.i0, attrs.i1);
        case OpKind::Rodrigues: return rodrigues_op(unary("rodrigues"));
        case OpKind::Leaf: break;
    }
    throw UsageError("apply: not an op kind");
}

namespace detail {

inline void accumulate_vjp(const Tape& tape, const Node& n, const Matrix& g,
                           std::vector<Matrix>& grads) {
    auto slot = [&](int32_t p) -> Matrix* {
        if (!tape.node(p).requires_grad) return nullptr;
        Matrix& m = grads[p];
        if (m.empty()) m = Matrix(tape.value(p).rows(), tape.value(p).cols());
        return &m;
    };
    switch (n.op) {
        case OpKind::Leaf:
            return;
        case OpKind::Matmul: {
            const Matrix& a = tape.value(n.parents[0]);
            const Matrix& b = tape.value(n.parents[1]);
            if (Matrix* ga = slot(n.parents[0])) add_multiply_nt(*ga, g, b);
            if (Matrix* gb = slot(n.parents[1])) add_multiply_tn(*gb, a, g);
            return;
        }
        case OpKind::Add: {
            for (int k = 0; k < 2; ++k)
                if (Matrix* gp = slot(n.parents[k]))
                    for (int i = 0; i < g.size(); ++i) gp->data()[i] += g.data()[i];
            return;
        }
        case OpKind::Subtract: {
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i];
            if (Matrix* gb = slot(n.parents[1]))
                for (int i = 0; i < g.size(); ++i) gb->data()[i] -= g.data()[i];
            return;
        }
        case OpKind::ScalarMultiply: {
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.size(); ++i) ga->data()[i] += n.attrs.scalar * g.data()[i];
            return;
        }
        case OpKind::Hadamard: {
            const Matrix& a = tape.value(n.parents[0]);
            const Matrix& b = tape.value(n.parents[1]);
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i] * b.data()[i];
            if (Matrix* gb = slot(n.parents[1]))
                for (int i = 0; i < g.size(); ++i) gb->data()[i] += g.data()[i] * a.data()[i];
            return;
        }
        case OpKind::Divide: {
            const Matrix& a = tape.value(n.parents[0]);
            const Matrix& b = tape.value(n.parents[1]);
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i] / b.data()[i];
            if (Matrix* gb = slot(n.parents[1]))
                for (int i = 0; i < g.size(); ++i)
                    gb->data()[i] -= g.data()[i] * a.data()[i] / (b.data()[i] * b.data()[i]);
            return;
        }
        case OpKind::ConcatRows: {
            int at = 0;
            for (int32_t p : n.parents) {
                const Matrix& pv = tape.value(p);
                if (Matrix* gp = slot(p))
                    for (int i = 0; i < pv.rows(); ++i)
                        for (int j = 0; j < pv.cols(); ++j) (*gp)(i, j) += g(at + i, j);
                at += pv.rows();
            }
            return;
        }
        case OpKind::SliceRows: {
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < n.attrs.i1; ++i)
                    for (int j = 0; j < g.cols(); ++j) (*ga)(n.attrs.i0 + i, j) += g(i, j);
            return;
        }
        case OpKind::Transpose: {
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) (*ga)(j, i) += g(i, j);
            return;
        }
        case OpKind::LeakyRelu: {
            const Matrix& a = tape.value(n.parents[0]);
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.size(); ++i)
                    ga->data()[i] += g.data()[i] * (a.data()[i] > 0.0 ? 1.0 : n.attrs.scalar);
            return;
        }
        case OpKind::Sum: {
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < ga->size(); ++i) ga->data()[i] += g.data()[0];
            return;
        }
        case OpKind::Mean: {
            if (Matrix* ga = slot(n.parents[0])) {
                const double c = g.data()[0] / ga->size();
                for (int i = 0; i < ga->size(); ++i) ga->data()[i] += c;
            }
            return;
        }
        case OpKind::FrobeniusNorm: {
            const Matrix& a = tape.value(n.parents[0]);
            const double norm = n.value.data()[0];
            if (Matrix* ga = slot(n.parents[0])) {
                if (norm > 0.0) {
                    const double c = g.data()[0] / norm;
                    for (int i = 0; i < ga->size(); ++i) ga->data()[i] += c * a.data()[i];
                }
                // norm == 0: subgradient 0
            }
            return;
        }
        case OpKind::L1Norm: {
            const Matrix& a = tape.value(n.parents[0]);
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < ga->size(); ++i) {
                    const double x = a.data()[i];
                    ga->data()[i] += g.data()[0] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
                }
            return;
        }
        case OpKind::Reshape: {
            if (Matrix* ga = slot(n.parents[0]))
                for (int i = 0; i < g.size(); ++i) ga->data()[i] += g.data()[i];
            return;
        }
        case OpKind::Rodrigues: {
            const Matrix& omega = tape.value(n.parents[0]);
            if (Matrix* ga = slot(n.parents[0])) {
                Matrix d = rodrigues_vjp(omega, g);
                for (int i = 0; i < 3; ++i) ga->data()[i] += d.data()[i];
            }
            return;
        }
    }
}

} // namespace detail

// Reverse sweep from a scalar loss. Gradients over multiple uses of a node
// accumulate by summation. Returns gradients for every requires-grad leaf
// the loss actually depends on.
inline GradientMap backward(Var loss) {
    if (!loss.valid()) throw UsageError("backward: invalid loss node");
    const Tape& tape = *loss.tape;
    const Matrix& lv = loss.value();
    if (lv.rows() != 1 || lv.cols() != 1)
        throw UsageError("backward: loss must be scalar (1x1), got " + lv.shape_str());

    std::vector<Matrix> grads(tape.size());
    if (tape.node(loss.index).requires_grad) {
        grads[loss.index] = Matrix(1, 1);
        grads[loss.index](0, 0) = 1.0;
    }

    for (int32_t i = loss.index; i >= 0; --i) {
        const Node& n = tape.node(i);
        if (!n.requires_grad || grads[i].empty()) continue;
        detail::accumulate_vjp(tape, n, grads[i], grads);
    }

    GradientMap out;
    for (int32_t i = 0; i <= loss.index; ++i) {
        const Node& n = tape.node(i);
        if (n.op != OpKind::Leaf || !n.requires_grad || grads[i].empty()) continue;
        if (!grads[i].all_finite())
            throw NumericError(std::string("backward: non-finite gradient at node ") +
                               std::to_string(i) + " (" + op_name(n.op) + ")");
        out.insert(i, std::move(grads[i]));
    }
    return out;
}

// Max relative disagreement between the analytic gradient of f and central
// finite differences with the given step, over all coordinates of `point`.
inline double grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& point,
                         double step) {
    if (step <= 0.0) throw UsageError("grad_check: step must be positive");

    Tape tape;
    Var x = tape.leaf(point, true);
    Var loss = f(tape, x);
    const Matrix& lv = loss.value();
    if (lv.rows() != 1 || lv.cols() != 1)
        throw UsageError("grad_check: function must produce a scalar");
    GradientMap gm = backward(loss);
    const Matrix* found = gm.find(x);
    Matrix analytic = found ? *found : Matrix(point.rows(), point.cols());

    auto eval = [&](const Matrix& p) {
        Tape t;
        Var v = t.leaf(p, false);
        double y = f(t, v).value()(0, 0);
        if (!std::isfinite(y)) throw NumericError("grad_check: non-finite evaluation");
        return y;
    };

    Matrix p = point;
    double worst = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        const double orig = p.data()[i];
        p.data()[i] = orig + step;
        const double fp = eval(p);
        p.data()[i] = orig - step;
        const double fm = eval(p);
        p.data()[i] = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double a = analytic.data()[i];
        worst = std::max(worst, std::fabs(a - fd) / std::max(1.0, std::fabs(a)));
    }
    return worst;
}

} // namespace nrsfm
