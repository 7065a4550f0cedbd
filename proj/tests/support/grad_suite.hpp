#pragma once

// Finite-difference checks for every differentiable op, shared by the unit
// tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <functional>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "quic/heads.hpp"
#include "quic/layers.hpp"

namespace gradsuite {

using quic::Rng;
using quic::Shape;
using quic::Tensor;
using quic::Var;
using ref::DTensor;

struct OpResult {
    std::string op;
    int instances = 0;
    double worst = 0.0;
};

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

using Case = std::function<gradcheck::CheckResult(Rng&)>;

inline std::vector<std::pair<std::string, Case>> gradient_cases() {
    using gradcheck::check;
    using gradcheck::distinct_tensor;
    using gradcheck::random_tensor;
    std::vector<std::pair<std::string, Case>> cases;

    cases.emplace_back("matmul", [](Rng& rng) {
        const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 6), n = pick(rng, 1, 5);
        return check({random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                     [](const std::vector<Var>& v) { return quic::matmul(v[0], v[1]); },
                     [](const std::vector<DTensor>& x) { return ref::matmul(x[0], x[1]); }, rng);
    });

    cases.emplace_back("matmul_nt", [](Rng& rng) {
        const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 6), n = pick(rng, 1, 5);
        return check({random_tensor({m, k}, rng), random_tensor({n, k}, rng)},
                     [](const std::vector<Var>& v) { return quic::matmul_nt(v[0], v[1]); },
                     [](const std::vector<DTensor>& x) { return ref::matmul_nt(x[0], x[1]); }, rng);
    });

    cases.emplace_back("conv2d", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 2), ci = pick(rng, 1, 3), co = pick(rng, 1, 3);
        const std::size_t h = pick(rng, 3, 6), w = pick(rng, 3, 6), kk = pick(rng, 1, 3);
        const std::size_t stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
        const quic::ops::Conv2dGeometry geo{stride, pad};
        return check({random_tensor({b, ci, h, w}, rng), random_tensor({co, ci, kk, kk}, rng), random_tensor({co}, rng)},
                     [geo](const std::vector<Var>& v) { return quic::conv2d(v[0], v[1], &v[2], geo); },
                     [stride, pad](const std::vector<DTensor>& x) { return ref::conv2d(x[0], x[1], &x[2], stride, pad); },
                     rng);
    });

    cases.emplace_back("batch_norm_train", [](Rng& rng) {
        const std::size_t b = pick(rng, 2, 6), n = pick(rng, 1, 5);
        auto state = std::make_shared<quic::BatchNormState>(n);
        return check({random_tensor({b, n}, rng, 2.0), random_tensor({n}, rng), random_tensor({n}, rng)},
                     [state](const std::vector<Var>& v) {
                         return quic::batch_norm_1d(v[0], v[1], v[2], *state, quic::Mode::train);
                     },
                     [](const std::vector<DTensor>& x) { return ref::batch_norm_train(x[0], x[1], x[2], 1e-5); }, rng);
    });

    cases.emplace_back("batch_norm_eval", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 5), n = pick(rng, 1, 5);
        auto state = std::make_shared<quic::BatchNormState>(n);
        for (std::size_t j = 0; j < n; ++j) {
            state->running_mean[j] = static_cast<float>(rng.normal());
            state->running_var[j] = static_cast<float>(rng.uniform(0.5, 2.0));
        }
        const DTensor mean = ref::from(state->running_mean), var = ref::from(state->running_var);
        return check({random_tensor({b, n}, rng), random_tensor({n}, rng), random_tensor({n}, rng)},
                     [state](const std::vector<Var>& v) {
                         return quic::batch_norm_1d(v[0], v[1], v[2], *state, quic::Mode::eval);
                     },
                     [mean, var](const std::vector<DTensor>& x) {
                         return ref::batch_norm_eval(x[0], x[1], x[2], mean, var, 1e-5);
                     },
                     rng);
    });

    cases.emplace_back("max_pool2d", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 2), c = pick(rng, 1, 3), h = pick(rng, 2, 6), w = pick(rng, 2, 6);
        return check({distinct_tensor({b, c, h, w}, rng)},
                     [](const std::vector<Var>& v) { return quic::max_pool2d(v[0], 2, 2); },
                     [](const std::vector<DTensor>& x) { return ref::max_pool2d(x[0], 2, 2); }, rng);
    });

    cases.emplace_back("global_avg_pool", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 4), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
        return check({random_tensor({b, c, h, w}, rng)},
                     [](const std::vector<Var>& v) { return quic::global_avg_pool(v[0]); },
                     [](const std::vector<DTensor>& x) { return ref::global_avg_pool(x[0]); }, rng);
    });

    cases.emplace_back("quadratic_form", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 4), c = pick(rng, 1, 6), k = pick(rng, 1, 4);
        return check({random_tensor({b, c}, rng), random_tensor({k, c, c}, rng)},
                     [](const std::vector<Var>& v) { return quic::quadratic_form(v[0], v[1]); },
                     [](const std::vector<DTensor>& x) { return ref::quadratic_form(x[0], x[1]); }, rng);
    });

    cases.emplace_back("symmetric_quadratic_form", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 4), c = pick(rng, 1, 6), k = pick(rng, 1, 4);
        return check({random_tensor({b, c}, rng), random_tensor({k, c, c}, rng)},
                     [](const std::vector<Var>& v) { return quic::symmetric_quadratic_form(v[0], v[1]); },
                     [](const std::vector<DTensor>& x) { return ref::quadratic_form(x[0], ref::symmetrize(x[1])); },
                     rng);
    });

    cases.emplace_back("softmax_cross_entropy", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 5), k = pick(rng, 2, 6);
        auto labels = std::make_shared<std::vector<int>>();
        for (std::size_t i = 0; i < b; ++i) labels->push_back(static_cast<int>(rng.index(k)));
        return check({random_tensor({b, k}, rng, 2.0)},
                     [labels](const std::vector<Var>& v) { return quic::softmax_cross_entropy(v[0], *labels); },
                     [labels](const std::vector<DTensor>& x) {
                         DTensor out(Shape{});
                         out[0] = ref::softmax_cross_entropy(x[0], *labels);
                         return out;
                     },
                     rng);
    });

    cases.emplace_back("quic_forward", [](Rng& rng) {
        // C = 1 with l2 normalization makes every row +-1 and the quadratic term constant.
        const std::size_t b = pick(rng, 2, 5), c = pick(rng, 2, 5), k = pick(rng, 2, 4);
        const bool l2 = rng.coin();
        const bool bn = rng.index(4) != 0;
        std::vector<Tensor> in{random_tensor({b, c}, rng), random_tensor({k, c}, rng), random_tensor({k, c, c}, rng, 0.5),
                               random_tensor({k}, rng), random_tensor({k}, rng), random_tensor({k}, rng)};
        quic::QuICHeadParams p;
        p.W = in[1];
        p.A = in[2];
        p.b = in[3];
        p.bn = quic::BatchNormState(k);
        p.bn.gamma = in[4];
        p.bn.beta = in[5];
        p.l2_normalize = l2;
        p.logit_bn = bn;
        quic::Tape tape;
        quic::Binder bind(tape);
        const Var z = tape.variable(in[0]);
        const Var y = quic::quic_forward(z, p, bind, quic::Mode::train);
        std::vector<Var> wrt{z, *bind.find(&p.W), *bind.find(&p.A), *bind.find(&p.b)};
        if (bn) {
            wrt.push_back(*bind.find(&p.bn.gamma));
            wrt.push_back(*bind.find(&p.bn.beta));
        }
        return gradcheck::check_graph(
            tape, y, wrt, in,
            [l2, bn](const std::vector<DTensor>& x) {
                ref::QuicParams rp{x[1], x[2], x[3], x[4], x[5], 1e-5, bn, l2};
                return ref::quic_forward(x[0], rp);
            },
            rng);
    });

    cases.emplace_back("relu", [](Rng& rng) {
        const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 6);
        Tensor x = random_tensor({m, n}, rng);
        for (auto& v : x.data())
            if (std::abs(v) < 0.05f) v = v < 0.0f ? -0.05f : 0.05f;  // off the kink
        return check({x}, [](const std::vector<Var>& v) { return quic::relu(v[0]); },
                     [](const std::vector<DTensor>& d) { return ref::relu(d[0]); }, rng);
    });

    cases.emplace_back("sigmoid", [](Rng& rng) {
        const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 6);
        return check({random_tensor({m, n}, rng, 2.0)}, [](const std::vector<Var>& v) { return quic::sigmoid(v[0]); },
                     [](const std::vector<DTensor>& d) { return ref::sigmoid(d[0]); }, rng);
    });

    cases.emplace_back("l2_normalize_rows", [](Rng& rng) {
        const std::size_t m = pick(rng, 1, 4), n = pick(rng, 1, 6);
        return check({random_tensor({m, n}, rng)}, [](const std::vector<Var>& v) { return quic::l2_normalize_rows(v[0]); },
                     [](const std::vector<DTensor>& d) { return ref::l2_normalize_rows(d[0], 1e-12); }, rng);
    });

    cases.emplace_back("scale_channels", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 4), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
        return check({random_tensor({b, c, h, w}, rng), random_tensor({b, c}, rng)},
                     [](const std::vector<Var>& v) { return quic::scale_channels(v[0], v[1]); },
                     [](const std::vector<DTensor>& d) { return ref::scale_channels(d[0], d[1]); }, rng);
    });

    cases.emplace_back("bilinear_descriptor", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 4), c = pick(rng, 1, 6);
        return check({random_tensor({b, c}, rng)},
                     [](const std::vector<Var>& v) { return quic::bilinear_descriptor(v[0], 1u << 20); },
                     [](const std::vector<DTensor>& d) { return ref::bilinear_descriptor(d[0]); }, rng);
    });

    cases.emplace_back("se_forward", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 4), c = pick(rng, 1, 6), hdim = pick(rng, 1, 3);
        std::vector<Tensor> in;
        for (;;) {
            in = {random_tensor({b, c}, rng), random_tensor({hdim, c}, rng), random_tensor({c, hdim}, rng)};
            const DTensor pre = ref::matmul_nt(ref::from(in[0]), ref::from(in[1]));
            double nearest = 1e9;
            for (double v : pre.v) nearest = std::min(nearest, std::abs(v));
            if (nearest > 0.05) break;
        }
        quic::SEBlockParams p{in[1], in[2]};
        quic::Tape tape;
        quic::Binder bind(tape);
        const Var z = tape.variable(in[0]);
        const Var y = quic::se_forward(z, p, bind);
        return gradcheck::check_graph(
            tape, y, {z, *bind.find(&p.W1), *bind.find(&p.W2)}, in,
            [](const std::vector<DTensor>& x) {
                const DTensor gate = ref::sigmoid(ref::matmul_nt(ref::relu(ref::matmul_nt(x[0], x[1])), x[2]));
                return ref::mul(x[0], gate);
            },
            rng);
    });

    cases.emplace_back("bcnn_oracle_forward", [](Rng& rng) {
        const std::size_t b = pick(rng, 1, 4), c = pick(rng, 1, 4), k = pick(rng, 2, 4);
        std::vector<Tensor> in{random_tensor({b, c}, rng), random_tensor({k, c}, rng), random_tensor({k, c * c}, rng),
                               random_tensor({k}, rng)};
        quic::BCNNHeadParams p{in[1], in[2], in[3], 1u << 20};
        quic::Tape tape;
        quic::Binder bind(tape);
        const Var z = tape.variable(in[0]);
        const Var y = quic::bcnn_oracle_forward(z, p, bind);
        return gradcheck::check_graph(
            tape, y, {z, *bind.find(&p.W), *bind.find(&p.Wbig), *bind.find(&p.b)}, in,
            [](const std::vector<DTensor>& x) {
                DTensor s = ref::matmul_nt(x[0], x[1]);
                const DTensor q = ref::matmul_nt(ref::bilinear_descriptor(x[0]), x[2]);
                for (std::size_t i = 0; i < s.numel(); ++i) s[i] += q[i];
                return ref::add_bias(s, x[3]);
            },
            rng);
    });

    cases.emplace_back("add_sub_mul_bias", [](Rng& rng) {
        const std::size_t m = pick(rng, 1, 4), n = pick(rng, 1, 5);
        return check({random_tensor({m, n}, rng), random_tensor({m, n}, rng), random_tensor({n}, rng)},
                     [](const std::vector<Var>& v) { return quic::add_bias((v[0] + v[1]) * (v[0] - v[1]), v[2]); },
                     [](const std::vector<DTensor>& d) {
                         DTensor out(d[0].shape);
                         for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (d[0][i] + d[1][i]) * (d[0][i] - d[1][i]);
                         return ref::add_bias(out, d[2]);
                     },
                     rng);
    });

    return cases;
}

// Runs every case `instances` times; reports the worst relative error per op.
inline std::vector<OpResult> run_gradient_suite(std::uint64_t seed, int instances) {
    std::vector<OpResult> out;
    std::uint64_t stream = 0;
    for (const auto& [name, fn] : gradient_cases()) {
        OpResult r{name, 0, 0.0};
        for (int i = 0; i < instances; ++i) {
            Rng rng(quic::derive_seed(seed, stream++));
            r.worst = std::max(r.worst, fn(rng).worst);
            ++r.instances;
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace gradsuite
