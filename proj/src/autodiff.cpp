#include "quic/autodiff.hpp"

#include <memory>
#include <string>

#include "quic/error.hpp"

namespace quic {

const Tensor& Var::value() const {
    if (!tape_) throw UsageError("use of an unbound Var");
    return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

const Tensor& BackwardContext::input(std::size_t slot) const {
    return tape_.nodes_[tape_.nodes_[node_].inputs.at(slot)].value;
}

std::size_t BackwardContext::input_count() const { return tape_.nodes_[node_].inputs.size(); }

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

bool BackwardContext::needs(std::size_t slot) const {
    return tape_.nodes_[tape_.nodes_[node_].inputs.at(slot)].requires_grad;
}

void BackwardContext::accumulate(std::size_t slot, Tensor g) const {
    const NodeId target = tape_.nodes_[node_].inputs.at(slot);
    if (!tape_.nodes_[target].requires_grad) return;
    const Tensor& v = tape_.nodes_[target].value;
    if (!g.same_shape(v)) {
        throw DimensionError("gradient of shape " + shape_str(g.shape()) + " for value of shape " +
                             shape_str(v.shape()));
    }
    auto& slot_grad = (*tape_.grads_)[target];
    if (!slot_grad) {
        slot_grad = std::move(g);
    } else {
        slot_grad = ops::add(*slot_grad, g);
    }
}

Tensor Gradients::of(const Var& v) const {
    if (has(v)) return *grads_[v.id()];
    return Tensor::zeros(v.shape());
}

Var Tape::variable(Tensor value) {
    nodes_.push_back({std::move(value), {}, {}, true});
    return {this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    nodes_.push_back({std::move(value), {}, {}, false});
    return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n{std::move(value), {}, {}, false};
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        if (in.tape() != this) throw UsageError("op mixes values from different tapes");
        n.inputs.push_back(in.id());
        n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Gradients Tape::backward(const Var& loss) {
    if (loss.tape() != this) throw UsageError("backward() on a value from another tape");
    const Tensor& lv = value(loss.id());
    if (lv.numel() != 1) throw UsageError("backward() needs a scalar loss, got shape " + shape_str(lv.shape()));
    if (!requires_grad(loss.id())) throw UsageError("backward() on a loss that does not depend on any variable");

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[loss.id()] = Tensor::full(lv.shape(), 1.0f);
    grads_ = &grads;
    try {
        for (NodeId id = loss.id() + 1; id-- > 0;) {
            if (!grads[id] || !nodes_[id].backward) continue;
            // Inputs always precede their consumer, so this slot is never written while in use.
            nodes_[id].backward(BackwardContext(*this, id, *grads[id]));
        }
    } catch (...) {
        grads_ = nullptr;
        throw;
    }
    grads_ = nullptr;
    return Gradients(std::move(grads));
}

// ---- tracked ops -----------------------------------------------------------

namespace {

Tape& tape_of(const Var& a) {
    if (!a.tape()) throw UsageError("use of an unbound Var");
    return *a.tape();
}

// Gradient for an operand that may have been broadcast from one element.
Tensor reduce_like(const Tensor& g, const Tensor& operand) {
    if (g.same_shape(operand)) return g;
    return ops::sum(g).reshaped(operand.shape());
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    return tape_of(a).record(ops::matmul(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
        if (ctx.needs(0)) ctx.accumulate(0, ops::matmul_nt(ctx.grad(), ctx.input(1)));
        if (ctx.needs(1)) ctx.accumulate(1, ops::matmul_tn(ctx.input(0), ctx.grad()));
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    return tape_of(a).record(ops::matmul_nt(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
        // C = A B^T: dA = dC B, dB = dC^T A
        if (ctx.needs(0)) ctx.accumulate(0, ops::matmul(ctx.grad(), ctx.input(1)));
        if (ctx.needs(1)) ctx.accumulate(1, ops::matmul_tn(ctx.grad(), ctx.input(0)));
    });
}

Var add(const Var& a, const Var& b) {
    return tape_of(a).record(ops::add(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
        if (ctx.needs(0)) ctx.accumulate(0, reduce_like(ctx.grad(), ctx.input(0)));
        if (ctx.needs(1)) ctx.accumulate(1, reduce_like(ctx.grad(), ctx.input(1)));
    });
}

Var sub(const Var& a, const Var& b) {
    return tape_of(a).record(ops::sub(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
        if (ctx.needs(0)) ctx.accumulate(0, reduce_like(ctx.grad(), ctx.input(0)));
        if (ctx.needs(1)) ctx.accumulate(1, reduce_like(ops::scale(ctx.grad(), -1.0f), ctx.input(1)));
    });
}

Var mul(const Var& a, const Var& b) {
    return tape_of(a).record(ops::mul(a.value(), b.value()), {a, b}, [](const BackwardContext& ctx) {
        if (ctx.needs(0)) ctx.accumulate(0, reduce_like(ops::mul(ctx.grad(), ctx.input(1)), ctx.input(0)));
        if (ctx.needs(1)) ctx.accumulate(1, reduce_like(ops::mul(ctx.grad(), ctx.input(0)), ctx.input(1)));
    });
}

Var scale(const Var& x, float s) {
    return tape_of(x).record(ops::scale(x.value(), s), {x},
                             [s](const BackwardContext& ctx) { ctx.accumulate(0, ops::scale(ctx.grad(), s)); });
}

Var relu(const Var& x) {
    return tape_of(x).record(ops::relu(x.value()), {x}, [](const BackwardContext& ctx) {
        ctx.accumulate(0, ops::relu_backward(ctx.input(0), ctx.grad()));
    });
}

Var sigmoid(const Var& x) {
    return tape_of(x).record(ops::sigmoid(x.value()), {x}, [](const BackwardContext& ctx) {
        const Tensor& s = ctx.output();
        Tensor g(s.shape());
        for (std::size_t i = 0; i < s.numel(); ++i) {
            g[i] = static_cast<float>(static_cast<double>(ctx.grad()[i]) * s[i] * (1.0 - static_cast<double>(s[i])));
        }
        ctx.accumulate(0, std::move(g));
    });
}

Var add_bias(const Var& x, const Var& bias) {
    return tape_of(x).record(ops::add_bias(x.value(), bias.value()), {x, bias}, [](const BackwardContext& ctx) {
        if (ctx.needs(0)) ctx.accumulate(0, ctx.grad());
        if (ctx.needs(1)) ctx.accumulate(1, ops::sum_to_bias(ctx.grad(), ctx.input(1).numel()));
    });
}

Var reshape(const Var& x, Shape shape) {
    return tape_of(x).record(x.value().reshaped(std::move(shape)), {x}, [](const BackwardContext& ctx) {
        ctx.accumulate(0, ctx.grad().reshaped(ctx.input(0).shape()));
    });
}

Var sum(const Var& x, std::optional<std::size_t> axis) {
    return tape_of(x).record(ops::sum(x.value(), axis), {x}, [axis](const BackwardContext& ctx) {
        ctx.accumulate(0, ops::expand_reduced(ctx.grad(), ctx.input(0).shape(), axis, 1.0f));
    });
}

Var mean(const Var& x, std::optional<std::size_t> axis) {
    const Tensor& v = x.value();
    const std::size_t n = axis ? v.dim(*axis) : v.numel();
    return tape_of(x).record(ops::mean(v, axis), {x}, [axis, n](const BackwardContext& ctx) {
        const float f = static_cast<float>(1.0 / static_cast<double>(n));
        ctx.accumulate(0, ops::expand_reduced(ctx.grad(), ctx.input(0).shape(), axis, f));
    });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
    auto ce = ops::softmax_cross_entropy(logits.value(), labels);
    auto probs = std::make_shared<Tensor>(std::move(ce.probs));
    auto ys = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
    return tape_of(logits).record(Tensor::scalar(ce.loss), {logits}, [probs, ys](const BackwardContext& ctx) {
        const std::size_t batch = probs->dim(0), classes = probs->dim(1);
        const double scale = static_cast<double>(ctx.grad().item()) / static_cast<double>(batch);
        Tensor g(probs->shape());
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t k = 0; k < classes; ++k) {
                const double onehot = static_cast<std::size_t>((*ys)[b]) == k ? 1.0 : 0.0;
                g[b * classes + k] = static_cast<float>(((*probs)[b * classes + k] - onehot) * scale);
            }
        }
        ctx.accumulate(0, std::move(g));
    });
}

Var l2_normalize_rows(const Var& z, float eps) {
    return tape_of(z).record(ops::l2_normalize_rows(z.value(), eps), {z}, [eps](const BackwardContext& ctx) {
        ctx.accumulate(0, ops::l2_normalize_rows_backward(ctx.grad(), ctx.input(0), eps));
    });
}

Var scale_channels(const Var& x, const Var& gate) {
    return tape_of(x).record(ops::scale_channels(x.value(), gate.value()), {x, gate}, [](const BackwardContext& ctx) {
        const Tensor& xv = ctx.input(0);
        const Tensor& gv = ctx.input(1);
        if (ctx.needs(0)) ctx.accumulate(0, ops::scale_channels(ctx.grad(), gv));
        if (ctx.needs(1)) {
            const std::size_t hw = xv.dim(2) * xv.dim(3);
            Tensor dg(gv.shape());
            for (std::size_t i = 0; i < gv.numel(); ++i) {
                double s = 0.0;
                for (std::size_t p = 0; p < hw; ++p) s += static_cast<double>(ctx.grad()[i * hw + p]) * xv[i * hw + p];
                dg[i] = static_cast<float>(s);
            }
            ctx.accumulate(1, std::move(dg));
        }
    });
}

Var quadratic_form(const Var& z, const Var& m) {
    return tape_of(z).record(ops::quadratic_form(z.value(), m.value()), {z, m}, [](const BackwardContext& ctx) {
        auto g = ops::quadratic_form_backward(ctx.grad(), ctx.input(0), ctx.input(1));
        if (ctx.needs(0)) ctx.accumulate(0, std::move(g.dz));
        if (ctx.needs(1)) ctx.accumulate(1, std::move(g.dm));
    });
}

Var symmetric_quadratic_form(const Var& z, const Var& a) {
    return tape_of(z).record(ops::symmetric_quadratic_form(z.value(), a.value()), {z, a},
                             [](const BackwardContext& ctx) {
                                 auto g = ops::symmetric_quadratic_form_backward(ctx.grad(), ctx.input(0),
                                                                                 ctx.input(1));
                                 if (ctx.needs(0)) ctx.accumulate(0, std::move(g.dz));
                                 if (ctx.needs(1)) ctx.accumulate(1, std::move(g.dm));
                             });
}

Var bilinear_descriptor(const Var& z, std::size_t max_elements) {
    return tape_of(z).record(ops::bilinear_descriptor(z.value(), max_elements), {z}, [](const BackwardContext& ctx) {
        ctx.accumulate(0, ops::bilinear_descriptor_backward(ctx.grad(), ctx.input(0)));
    });
}

}  // namespace quic
