#include "quic/layers.hpp"

#include <cmath>
#include <memory>

#include "quic/error.hpp"

namespace quic {

BatchNormState::BatchNormState(std::size_t features, float eps_, float momentum_)
    : gamma(Tensor::full({features}, 1.0f)),
      beta(Tensor::zeros({features})),
      running_mean(Tensor::zeros({features})),
      running_var(Tensor::full({features}, 1.0f)),
      eps(eps_),
      momentum(momentum_) {
    if (!(eps > 0.0f)) throw ConfigError("batch norm eps must be > 0");
    if (!(momentum >= 0.0f && momentum <= 1.0f)) throw ConfigError("batch norm momentum must lie in [0, 1]");
}

Var linear(const Var& x, const Var& w, const Var& b) { return add_bias(matmul_nt(x, w), b); }

Var linear(const Var& x, const Var& w) { return matmul_nt(x, w); }

Var conv2d(const Var& x, const Var& kernels, const Var* bias, ops::Conv2dGeometry geo) {
    Tape& tape = *x.tape();
    Tensor out = ops::conv2d(x.value(), kernels.value(), bias ? &bias->value() : nullptr, geo);
    std::vector<Var> inputs{x, kernels};
    if (bias) inputs.push_back(*bias);
    return tape.record(std::move(out), std::move(inputs), [geo](const BackwardContext& ctx) {
        const Tensor& xv = ctx.input(0);
        const Tensor& wv = ctx.input(1);
        if (ctx.needs(0)) ctx.accumulate(0, ops::conv2d_backward_input(ctx.grad(), wv, xv.shape(), geo));
        if (ctx.needs(1)) ctx.accumulate(1, ops::conv2d_backward_weight(ctx.grad(), xv, wv.shape(), geo));
        if (ctx.input_count() > 2 && ctx.needs(2)) {
            ctx.accumulate(2, ops::conv2d_backward_bias(ctx.grad()));
        }
    });
}

Var global_avg_pool(const Var& x) {
    return x.tape()->record(ops::global_avg_pool(x.value()), {x}, [](const BackwardContext& ctx) {
        ctx.accumulate(0, ops::global_avg_pool_backward(ctx.grad(), ctx.input(0).shape()));
    });
}

Var max_pool2d(const Var& x, std::size_t window, std::size_t stride) {
    auto r = ops::max_pool2d(x.value(), window, stride);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(std::move(r.argmax));
    return x.tape()->record(std::move(r.out), {x}, [argmax](const BackwardContext& ctx) {
        ctx.accumulate(0, ops::max_pool2d_backward(ctx.grad(), *argmax, ctx.input(0).shape()));
    });
}

Var batch_norm_1d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.dim(1) != state.features()) {
        throw DimensionError("batch_norm_1d: input " + shape_str(xv.shape()) + " for " +
                             std::to_string(state.features()) + " features");
    }
    Tape& tape = *x.tape();
    if (mode == Mode::eval) {
        Tensor out = ops::batch_norm_eval(xv, gamma.value(), beta.value(), state.running_mean, state.running_var,
                                          state.eps);
        const float eps = state.eps;
        auto rm = std::make_shared<Tensor>(state.running_mean);
        auto rv = std::make_shared<Tensor>(state.running_var);
        return tape.record(std::move(out), {x, gamma, beta}, [eps, rm, rv](const BackwardContext& ctx) {
            const Tensor& g = ctx.grad();
            const Tensor& xin = ctx.input(0);
            const Tensor& gm = ctx.input(1);
            const std::size_t batch = g.dim(0), n = g.dim(1);
            Tensor dx(g.shape()), dgamma({n}), dbeta({n});
            for (std::size_t j = 0; j < n; ++j) {
                const double inv = 1.0 / std::sqrt(static_cast<double>((*rv)[j]) + eps);
                double sg = 0.0, sgx = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double gv = g[b * n + j];
                    sg += gv;
                    sgx += gv * (static_cast<double>(xin[b * n + j]) - (*rm)[j]) * inv;
                    dx[b * n + j] = static_cast<float>(gv * gm[j] * inv);
                }
                dgamma[j] = static_cast<float>(sgx);
                dbeta[j] = static_cast<float>(sg);
            }
            if (ctx.needs(0)) ctx.accumulate(0, std::move(dx));
            if (ctx.needs(1)) ctx.accumulate(1, std::move(dgamma));
            if (ctx.needs(2)) ctx.accumulate(2, std::move(dbeta));
        });
    }

    const std::size_t batch = xv.dim(0);
    if (batch < 2) throw UsageError("batch_norm_1d in train mode needs a batch of at least 2 rows, got 1");
    auto fwd = std::make_shared<ops::BatchNormForward>(ops::batch_norm_train(xv, gamma.value(), beta.value(), state.eps));
    const double m = state.momentum;
    const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    for (std::size_t j = 0; j < state.features(); ++j) {
        state.running_mean[j] = static_cast<float>((1.0 - m) * state.running_mean[j] + m * fwd->mean[j]);
        state.running_var[j] = static_cast<float>((1.0 - m) * state.running_var[j] + m * fwd->variance[j] * unbias);
    }
    Tensor out = std::move(fwd->out);
    return tape.record(std::move(out), {x, gamma, beta}, [fwd](const BackwardContext& ctx) {
        auto g = ops::batch_norm_train_backward(ctx.grad(), *fwd, ctx.input(1));
        if (ctx.needs(0)) ctx.accumulate(0, std::move(g.dx));
        if (ctx.needs(1)) ctx.accumulate(1, std::move(g.dgamma));
        if (ctx.needs(2)) ctx.accumulate(2, std::move(g.dbeta));
    });
}

}  // namespace quic
