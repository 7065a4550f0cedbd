#pragma once

// Define-by-run reverse-mode autodiff. A Tape records every tracked op in
// execution order; backward() walks it once in reverse and accumulates
// gradients by summation when a value feeds several consumers.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "quic/ops.hpp"
#include "quic/tensor.hpp"

namespace quic {

using NodeId = std::size_t;

class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    NodeId id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

// Passed to a node's backward function.
class BackwardContext {
public:
    BackwardContext(Tape& tape, NodeId node, const Tensor& grad) : tape_(tape), node_(node), grad_(grad) {}

    const Tensor& grad() const noexcept { return grad_; }
    const Tensor& input(std::size_t slot) const;
    const Tensor& output() const;
    bool needs(std::size_t slot) const;
    std::size_t input_count() const;
    // Adds g to the gradient of input `slot` (ignored for untracked inputs).
    void accumulate(std::size_t slot, Tensor g) const;

private:
    Tape& tape_;
    NodeId node_;
    const Tensor& grad_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Gradients {
public:
    explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

    bool has(const Var& v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }
    // Gradient of a tracked value; zeros when the loss does not depend on it.
    Tensor of(const Var& v) const;

private:
    std::vector<std::optional<Tensor>> grads_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var variable(Tensor value);   // tracked leaf
    Var constant(Tensor value);   // untracked leaf

    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and propagates to every tracked node.
    Gradients backward(const Var& loss);

private:
    friend class BackwardContext;

    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
    std::vector<std::optional<Tensor>>* grads_ = nullptr;  // live only inside backward()
};

// ---- tracked ops -----------------------------------------------------------

Var matmul(const Var& a, const Var& b);      // [m x k] * [k x n]
Var matmul_nt(const Var& a, const Var& b);   // [m x k] * [n x k]^T

// Identical shapes, or one single-element operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, float s);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var add_bias(const Var& x, const Var& bias);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x, std::optional<std::size_t> axis = std::nullopt);
Var mean(const Var& x, std::optional<std::size_t> axis = std::nullopt);

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

Var l2_normalize_rows(const Var& z, float eps = 1e-12f);
Var scale_channels(const Var& x, const Var& gate);

Var quadratic_form(const Var& z, const Var& m);
Var symmetric_quadratic_form(const Var& z, const Var& a);
Var bilinear_descriptor(const Var& z, std::size_t max_elements);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace quic
