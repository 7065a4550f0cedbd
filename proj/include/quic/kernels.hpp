#pragma once

// Inner-loop arithmetic kernels with a scalar reference implementation and
// SIMD variants selected at runtime.
//
// Contract shared by every variant:
//  - gemm / axpy_acc / elementwise kernels compute each output element with the
//    same operation order as the scalar reference. Products of two floats are
//    exact in double, so fused multiply-add in double rounds identically to
//    separate multiply then add; these kernels are therefore bit-identical
//    across variants.
//  - dot / dot_acc / sum are reductions whose lane-split order differs per
//    variant; they agree with the reference to double rounding error only.
//  - All loads are unaligned; no alignment preconditions on callers.

#include <cstddef>
#include <string_view>

namespace quic::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    const char* name;

    // C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n], row-major with
    // leading dimensions; accumulation in double, one rounding per output.
    void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
                 const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);

    // y[i] += alpha * x[i]
    void (*axpy_acc)(std::size_t n, double alpha, const float* x, double* y);

    double (*dot_acc)(std::size_t n, const float* x, const double* y);
    double (*dot)(std::size_t n, const float* x, const float* y);
    double (*sum)(std::size_t n, const float* x);

    void (*add)(std::size_t n, const float* a, const float* b, float* out);
    void (*sub)(std::size_t n, const float* a, const float* b, float* out);
    void (*mul)(std::size_t n, const float* a, const float* b, float* out);
    void (*scale)(std::size_t n, float s, const float* x, float* out);
    void (*relu)(std::size_t n, const float* x, float* out);
    // out[i] = x[i] > 0 ? g[i] : 0
    void (*relu_backward)(std::size_t n, const float* x, const float* g, float* out);
};

const KernelTable& scalar_table() noexcept;
#if defined(QUIC_HAVE_AVX2_KERNELS)
const KernelTable& avx2_table() noexcept;
#endif

// True when the variant is compiled in and the running CPU supports it.
bool available(Isa isa) noexcept;

// Table used by every tensor op. Chosen on first use: the widest available
// variant, unless the environment variable QUIC_KERNELS=scalar forces the
// reference path.
const KernelTable& active() noexcept;

// Overrides the active table; throws UsageError if unavailable.
void select(Isa isa);

std::string_view isa_name(Isa isa) noexcept;

// RAII override used by equivalence tests.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa);
    ~ScopedIsa();
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    const KernelTable* previous_;
};

}  // namespace quic::kernels
