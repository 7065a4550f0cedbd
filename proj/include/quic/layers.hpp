#pragma once

#include <cstddef>

#include "quic/autodiff.hpp"

namespace quic {

enum class Mode { train, eval };

// Batch normalization over the columns of a [B x K] matrix.
//
// Train mode normalizes with the biased batch variance and updates the running
// statistics (running_var with the unbiased estimate); eval mode uses only the
// running statistics.
struct BatchNormState {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    float eps = 1e-5f;
    float momentum = 0.1f;

    BatchNormState() = default;
    explicit BatchNormState(std::size_t features, float eps = 1e-5f, float momentum = 0.1f);
    std::size_t features() const { return gamma.numel(); }
};

// x[B x Cin] * w[Cout x Cin]^T + b[Cout]
Var linear(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w);

Var conv2d(const Var& x, const Var& kernels, const Var* bias, ops::Conv2dGeometry geo);
Var global_avg_pool(const Var& x);
Var max_pool2d(const Var& x, std::size_t window, std::size_t stride);

// gamma and beta are the tape bindings of state.gamma / state.beta. Train mode
// mutates state's running statistics.
Var batch_norm_1d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, Mode mode);

}  // namespace quic
