#include "quic/kernels.hpp"
#include "quic/tracking.hpp"

namespace quic::kernels {
namespace {

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    TrackedVector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) acc[j] = accumulate ? static_cast<double>(crow[j]) : 0.0;
        const float* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
    }
}

void axpy_acc(std::size_t n, double alpha, const float* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

double dot_acc(std::size_t n, const float* x, const double* y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
    return s;
}

double dot(std::size_t n, const float* x, const float* y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return s;
}

double sum(std::size_t n, const float* x) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void add(std::size_t n, const float* a, const float* b, float* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(std::size_t n, const float* a, const float* b, float* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(std::size_t n, const float* a, const float* b, float* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(std::size_t n, float s, const float* x, float* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = s * x[i];
}

void relu(std::size_t n, const float* x, float* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* g, float* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

constexpr KernelTable kTable{
    Isa::scalar, "scalar", gemm, axpy_acc, dot_acc, dot, sum, add, sub, mul, scale, relu, relu_backward,
};

}  // namespace

const KernelTable& scalar_table() noexcept { return kTable; }

}  // namespace quic::kernels
