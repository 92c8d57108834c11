#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Named trainable tensors, ordered by name so iteration order is stable.
using ParameterSet = std::map<std::string, Tensor>;
using Gradients = std::map<std::string, Tensor>;
using BoundParameters = std::map<std::string, Var>;

/// Append-only record of primitive operations for reverse-mode differentiation.
///
/// Nodes are stored in creation order, which is a topological order because an
/// operation can only consume handles that already exist. backward() walks the
/// nodes once, from the loss towards the leaves.
class Tape {
public:
    /// Receives the gradient flowing into the node's output.
    using Backprop = std::function<void(Tape&, const Tensor&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    Var parameter(const std::string& name, Tensor value);
    BoundParameters bind(const ParameterSet& params);
    /// Binds parameters as constants: usable in expressions, never differentiated.
    BoundParameters bind_constants(const ParameterSet& params);

    /// Records an operation. The backprop rule is dropped when no input needs a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop);

    /// Gradients of a 1x1 loss with respect to every parameter bound on this tape.
    /// Parameters the loss does not reach map to zero tensors.
    Gradients backward(Var loss);

    /// Gradient of the last backward() loss with respect to v (zeros if unreachable).
    Tensor grad(Var v) const;

    void accumulate(Var v, const Tensor& g);
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    const Tensor& value(Var v) const { return nodes_[v.id()].value; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Backprop backprop;
    };

    Var push(Tensor value, bool requires_grad);

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, std::size_t>> parameters_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

// Primitives. Elementwise binaries broadcast rank-2 operands along unit rows/columns.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Per-row sum, (rows x 1).
Var row_sum(Var a);
/// Mean of all entries, 1x1.
Var mean(Var a);

// Structural helpers (no arithmetic).
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var concat_cols(Var a, Var b);
/// Stacks `times` copies of a vertically.
Var tile_rows(Var a, std::size_t times);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator*(double s, Var a);
Var operator+(Var a, double s);
Var operator-(Var a, double s);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate.
/// Non-finite evaluations of f show up as non-finite entries of the result.
Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

}  // namespace svae
