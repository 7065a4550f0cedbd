// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only reached after a runtime CPU check in dispatch.cpp.

#include <immintrin.h>

#include "quic/kernels.hpp"

namespace quic::kernels {
namespace {

inline __m256d load4_pd(const float* p) { return _mm256_cvtps_pd(_mm_loadu_ps(p)); }

inline void store4_ps(float* p, __m256d v) { _mm_storeu_ps(p, _mm256_cvtpd_ps(v)); }

// Scalar tail with the reference operation order.
inline void gemm_tail(std::size_t i, std::size_t j0, std::size_t j1, std::size_t k, const float* a, std::size_t lda,
                      const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    for (std::size_t j = j0; j < j1; ++j) {
        double acc = accumulate ? static_cast<double>(c[i * ldc + j]) : 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            acc += static_cast<double>(a[i * lda + p]) * static_cast<double>(b[p * ldb + j]);
        }
        c[i * ldc + j] = static_cast<float>(acc);
    }
}

// 2 rows x 16 columns register tile: 8 double accumulators.
void gemm_block_2x16(std::size_t i, std::size_t j, std::size_t k, const float* a, std::size_t lda, const float* b,
                     std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    float* c0 = c + i * ldc + j;
    float* c1 = c0 + ldc;
    __m256d r00, r01, r02, r03, r10, r11, r12, r13;
    if (accumulate) {
        r00 = load4_pd(c0);
        r01 = load4_pd(c0 + 4);
        r02 = load4_pd(c0 + 8);
        r03 = load4_pd(c0 + 12);
        r10 = load4_pd(c1);
        r11 = load4_pd(c1 + 4);
        r12 = load4_pd(c1 + 8);
        r13 = load4_pd(c1 + 12);
    } else {
        r00 = r01 = r02 = r03 = r10 = r11 = r12 = r13 = _mm256_setzero_pd();
    }
    const float* a0 = a + i * lda;
    const float* a1 = a0 + lda;
    for (std::size_t p = 0; p < k; ++p) {
        const float* bp = b + p * ldb + j;
        const __m256d b0 = load4_pd(bp);
        const __m256d b1 = load4_pd(bp + 4);
        const __m256d b2 = load4_pd(bp + 8);
        const __m256d b3 = load4_pd(bp + 12);
        const __m256d x0 = _mm256_set1_pd(static_cast<double>(a0[p]));
        const __m256d x1 = _mm256_set1_pd(static_cast<double>(a1[p]));
        r00 = _mm256_fmadd_pd(x0, b0, r00);
        r01 = _mm256_fmadd_pd(x0, b1, r01);
        r02 = _mm256_fmadd_pd(x0, b2, r02);
        r03 = _mm256_fmadd_pd(x0, b3, r03);
        r10 = _mm256_fmadd_pd(x1, b0, r10);
        r11 = _mm256_fmadd_pd(x1, b1, r11);
        r12 = _mm256_fmadd_pd(x1, b2, r12);
        r13 = _mm256_fmadd_pd(x1, b3, r13);
    }
    store4_ps(c0, r00);
    store4_ps(c0 + 4, r01);
    store4_ps(c0 + 8, r02);
    store4_ps(c0 + 12, r03);
    store4_ps(c1, r10);
    store4_ps(c1 + 4, r11);
    store4_ps(c1 + 8, r12);
    store4_ps(c1 + 12, r13);
}

void gemm_block_1x16(std::size_t i, std::size_t j, std::size_t k, const float* a, std::size_t lda, const float* b,
                     std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    float* c0 = c + i * ldc + j;
    __m256d r0, r1, r2, r3;
    if (accumulate) {
        r0 = load4_pd(c0);
        r1 = load4_pd(c0 + 4);
        r2 = load4_pd(c0 + 8);
        r3 = load4_pd(c0 + 12);
    } else {
        r0 = r1 = r2 = r3 = _mm256_setzero_pd();
    }
    const float* a0 = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
        const float* bp = b + p * ldb + j;
        const __m256d x0 = _mm256_set1_pd(static_cast<double>(a0[p]));
        r0 = _mm256_fmadd_pd(x0, load4_pd(bp), r0);
        r1 = _mm256_fmadd_pd(x0, load4_pd(bp + 4), r1);
        r2 = _mm256_fmadd_pd(x0, load4_pd(bp + 8), r2);
        r3 = _mm256_fmadd_pd(x0, load4_pd(bp + 12), r3);
    }
    store4_ps(c0, r0);
    store4_ps(c0 + 4, r1);
    store4_ps(c0 + 8, r2);
    store4_ps(c0 + 12, r3);
}

void gemm_block_1x4(std::size_t i, std::size_t j, std::size_t k, const float* a, std::size_t lda, const float* b,
                    std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    float* c0 = c + i * ldc + j;
    __m256d r0 = accumulate ? load4_pd(c0) : _mm256_setzero_pd();
    const float* a0 = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
        r0 = _mm256_fmadd_pd(_mm256_set1_pd(static_cast<double>(a0[p])), load4_pd(b + p * ldb + j), r0);
    }
    store4_ps(c0, r0);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    const std::size_t n16 = n - n % 16;
    const std::size_t n4 = n - n % 4;
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        for (std::size_t j = 0; j < n16; j += 16) gemm_block_2x16(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
        for (std::size_t r = i; r < i + 2; ++r) {
            for (std::size_t j = n16; j < n4; j += 4) gemm_block_1x4(r, j, k, a, lda, b, ldb, c, ldc, accumulate);
            gemm_tail(r, n4, n, k, a, lda, b, ldb, c, ldc, accumulate);
        }
    }
    for (; i < m; ++i) {
        for (std::size_t j = 0; j < n16; j += 16) gemm_block_1x16(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
        for (std::size_t j = n16; j < n4; j += 4) gemm_block_1x4(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
        gemm_tail(i, n4, n, k, a, lda, b, ldb, c, ldc, accumulate);
    }
}

void axpy_acc(std::size_t n, double alpha, const float* x, double* y) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, load4_pd(x + i), _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(va, load4_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_acc(std::size_t n, const float* x, const double* y) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(load4_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(load4_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) s += static_cast<double>(x[i]) * y[i];
    return s;
}

double dot(std::size_t n, const float* x, const float* y) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(load4_pd(x + i), load4_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(load4_pd(x + i + 4), load4_pd(y + i + 4), s1);
    }
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) s += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return s;
}

double sum(std::size_t n, const float* x) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_add_pd(s0, load4_pd(x + i));
        s1 = _mm256_add_pd(s1, load4_pd(x + i + 4));
    }
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) s += x[i];
    return s;
}

template <typename VecOp, typename ScalarOp>
inline void binary(std::size_t n, const float* a, const float* b, float* out, VecOp vop, ScalarOp sop) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, vop(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add(std::size_t n, const float* a, const float* b, float* out) {
    binary(n, a, b, out, [](__m256 x, __m256 y) { return _mm256_add_ps(x, y); },
           [](float x, float y) { return x + y; });
}

void sub(std::size_t n, const float* a, const float* b, float* out) {
    binary(n, a, b, out, [](__m256 x, __m256 y) { return _mm256_sub_ps(x, y); },
           [](float x, float y) { return x - y; });
}

void mul(std::size_t n, const float* a, const float* b, float* out) {
    binary(n, a, b, out, [](__m256 x, __m256 y) { return _mm256_mul_ps(x, y); },
           [](float x, float y) { return x * y; });
}

void scale(std::size_t n, float s, const float* x, float* out) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, _mm256_mul_ps(vs, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = s * x[i];
}

void relu(std::size_t n, const float* x, float* out) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 v = _mm256_loadu_ps(x + i);
        _mm256_storeu_ps(out + i, _mm256_and_ps(v, _mm256_cmp_ps(v, zero, _CMP_GT_OQ)));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* g, float* out) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, _mm256_and_ps(_mm256_loadu_ps(g + i), mask));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

constexpr KernelTable kTable{
    Isa::avx2, "avx2", gemm, axpy_acc, dot_acc, dot, sum, add, sub, mul, scale, relu, relu_backward,
};

}  // namespace

const KernelTable& avx2_table() noexcept { return kTable; }

}  // namespace quic::kernels
