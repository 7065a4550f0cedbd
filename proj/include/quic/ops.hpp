#pragma once

// Untracked tensor operations. These are the forward and backward building
// blocks of the autodiff layer and are also used directly for inference and
// the activation audit. All reductions and matrix products accumulate in
// double and round once per output element.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "quic/tensor.hpp"

namespace quic::ops {

// a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// a[m x k] * b[n x k]^T; row-dot form, no packed copy of b.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a[k x m]^T * b[k x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

// c[m x n] (+)= a[m x k] * b[n x k]^T on raw buffers.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc, bool accumulate);

// Binary ops accept identical shapes, or a single-element operand on either side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad);
Tensor sigmoid(const Tensor& x);

// x[..., n] + bias[n] broadcast over the trailing axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Sum of every leading slice: g[..., n] -> [n].
Tensor sum_to_bias(const Tensor& g, std::size_t n);

Tensor sum(const Tensor& x, std::optional<std::size_t> axis = std::nullopt);
Tensor mean(const Tensor& x, std::optional<std::size_t> axis = std::nullopt);
// Broadcast a reduced gradient back over `axis` (or over everything) to `shape`.
Tensor expand_reduced(const Tensor& g, const Shape& shape, std::optional<std::size_t> axis, float factor);

struct Conv2dGeometry {
    std::size_t stride = 1;
    std::size_t padding = 0;
};

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, Conv2dGeometry geo);
Tensor conv2d_backward_input(const Tensor& grad, const Tensor& w, const Shape& x_shape, Conv2dGeometry geo);
Tensor conv2d_backward_weight(const Tensor& grad, const Tensor& x, const Shape& w_shape, Conv2dGeometry geo);
// Sum of grad[B x C x H x W] over batch and space -> [C].
Tensor conv2d_backward_bias(const Tensor& grad);

struct MaxPoolResult {
    Tensor out;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
};
MaxPoolResult max_pool2d(const Tensor& x, std::size_t window, std::size_t stride);
Tensor max_pool2d_backward(const Tensor& grad, std::span<const std::uint32_t> argmax, const Shape& x_shape);

Tensor global_avg_pool(const Tensor& x);                           // [B x C x H x W] -> [B x C]
Tensor global_avg_pool_backward(const Tensor& grad, const Shape& x_shape);

// x[B x C x H x W] * gate[B x C] per channel.
Tensor scale_channels(const Tensor& x, const Tensor& gate);

struct SoftmaxCrossEntropy {
    float loss = 0.0f;
    Tensor probs;  // [B x K]
};
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct BatchNormForward {
    Tensor out;
    std::vector<double> xhat;       // normalized input [B x K], row-major
    std::vector<double> mean;       // per-column batch mean
    std::vector<double> variance;   // biased batch variance
    std::vector<double> inv_std;
};
BatchNormForward batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, float eps);
struct BatchNormGrads {
    Tensor dx, dgamma, dbeta;
};
BatchNormGrads batch_norm_train_backward(const Tensor& grad, const BatchNormForward& fwd, const Tensor& gamma);

// Per-row L2 normalization z / sqrt(|z|^2 + eps).
Tensor l2_normalize_rows(const Tensor& z, float eps);
Tensor l2_normalize_rows_backward(const Tensor& grad, const Tensor& z, float eps);

// (A + A^T) / 2 for every class slice of A[K x C x C].
Tensor symmetrize(const Tensor& a);

// out[b,k] = sum_ij z[b,i] M[k,i,j] z[b,j]. Transient memory: one B x C
// double row block reused across classes; no B x C x C intermediate.
Tensor quadratic_form(const Tensor& z, const Tensor& m);
struct QuadraticFormGrads {
    Tensor dz, dm;
};
QuadraticFormGrads quadratic_form_backward(const Tensor& grad, const Tensor& z, const Tensor& m);

// quadratic_form(z, symmetrize(a)) with the symmetrized row formed on the
// fly, bit-identical to materializing symmetrize(a) first. Transient memory:
// B x C doubles plus one C-float row.
Tensor symmetric_quadratic_form(const Tensor& z, const Tensor& a);
QuadraticFormGrads symmetric_quadratic_form_backward(const Tensor& grad, const Tensor& z, const Tensor& a);

// Explicit bilinear descriptor vec(z z^T) per row: [B x C] -> [B x C*C].
// Throws ResourceError when B*C*C exceeds max_elements.
Tensor bilinear_descriptor(const Tensor& z, std::size_t max_elements);
Tensor bilinear_descriptor_backward(const Tensor& grad, const Tensor& z);

bool all_finite(const Tensor& t) noexcept;

}  // namespace quic::ops
