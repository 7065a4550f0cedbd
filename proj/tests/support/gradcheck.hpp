#pragma once

// Central finite differences on a double-precision reference, compared with
// the tape's float gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "quic/autodiff.hpp"
#include "quic/rng.hpp"
#include "reference.hpp"

namespace gradcheck {

constexpr double kStep = 1e-4;

// Scalar objective over double copies of the inputs.
using RefObjective = std::function<double(const std::vector<ref::DTensor>&)>;

inline std::vector<ref::DTensor> numeric_grads(const RefObjective& f, std::vector<ref::DTensor> inputs,
                                               double h = kStep) {
    std::vector<ref::DTensor> grads;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        ref::DTensor g(inputs[t].shape);
        for (std::size_t i = 0; i < inputs[t].numel(); ++i) {
            const double x0 = inputs[t][i];
            inputs[t][i] = x0 + h;
            const double fp = f(inputs);
            inputs[t][i] = x0 - h;
            const double fm = f(inputs);
            inputs[t][i] = x0;
            g[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// Largest elementwise |a - n| / max(|a|, |n|, floor), where floor is 1e-2 of
// the tensor's largest numeric gradient (so entries that are zero up to
// rounding do not dominate).
inline double max_relative_error(const quic::Tensor& analytic, const ref::DTensor& numeric) {
    double scale = 0.0;
    for (double v : numeric.v) scale = std::max(scale, std::abs(v));
    const double floor = std::max(1e-2 * scale, 1e-6);
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.numel(); ++i) {
        const double a = analytic[i], n = numeric[i];
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
    }
    return worst;
}

// Random projection weights so every output element contributes to the loss.
inline quic::Tensor projection(const quic::Shape& shape, quic::Rng& rng) {
    quic::Tensor r(shape);
    for (auto& v : r.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return r;
}

inline double project(const ref::DTensor& y, const quic::Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
    return s;
}

inline quic::Var project(const quic::Var& y, const quic::Tensor& r) {
    return quic::sum(quic::mul(y, y.tape()->constant(r)));
}

inline quic::Tensor random_tensor(const quic::Shape& shape, quic::Rng& rng, double scale = 1.0) {
    quic::Tensor t(shape);
    for (auto& v : t.data()) v = static_cast<float>(scale * rng.normal());
    return t;
}

// Values on a 1/64 grid, shuffled, so max-pool windows never hold near-ties.
inline quic::Tensor distinct_tensor(const quic::Shape& shape, quic::Rng& rng) {
    quic::Tensor t(shape);
    std::vector<float> vals(t.numel());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        vals[i] = static_cast<float>(static_cast<double>(i) - 0.5 * static_cast<double>(vals.size())) / 64.0f;
    }
    rng.shuffle(std::span<float>(vals));
    std::copy(vals.begin(), vals.end(), t.data().begin());
    return t;
}

struct CheckResult {
    double worst = 0.0;
    std::string detail;
};

// Compares d(sum R*y)/d(wrt[i]) on the tape with finite differences of
// `reference` (projected by the same random R) at the float `inputs`.
inline CheckResult check_graph(quic::Tape& tape, const quic::Var& y, const std::vector<quic::Var>& wrt,
                               const std::vector<quic::Tensor>& inputs,
                               const std::function<ref::DTensor(const std::vector<ref::DTensor>&)>& reference,
                               quic::Rng& rng, double h = kStep) {
    const quic::Tensor r = projection(y.shape(), rng);
    const quic::Var loss = project(y, r);
    const quic::Gradients g = tape.backward(loss);
    std::vector<ref::DTensor> dins;
    for (const auto& t : inputs) dins.push_back(ref::from(t));
    const auto numeric = numeric_grads([&](const std::vector<ref::DTensor>& x) { return project(reference(x), r); },
                                       dins, h);
    CheckResult res;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        const double e = max_relative_error(g.of(wrt[i]), numeric[i]);
        if (e >= res.worst) {
            res.worst = e;
            res.detail = "input " + std::to_string(i);
        }
    }
    return res;
}

// One tape variable per input, in order.
inline CheckResult check(const std::vector<quic::Tensor>& inputs,
                         const std::function<quic::Var(const std::vector<quic::Var>&)>& tracked,
                         const std::function<ref::DTensor(const std::vector<ref::DTensor>&)>& reference,
                         quic::Rng& rng, double h = kStep) {
    quic::Tape tape;
    std::vector<quic::Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    const quic::Var y = tracked(vars);
    return check_graph(tape, y, vars, inputs, reference, rng, h);
}

}  // namespace gradcheck
