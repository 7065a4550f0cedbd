#include <cstdlib>
#include <cstring>
#include <string>

#include "quic/error.hpp"
#include "quic/kernels.hpp"

namespace quic::kernels {
namespace {

bool cpu_has_avx2() noexcept {
#if defined(QUIC_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* initial_table() noexcept {
    const char* forced = std::getenv("QUIC_KERNELS");
    if (forced && std::strcmp(forced, "scalar") == 0) return &scalar_table();
#if defined(QUIC_HAVE_AVX2_KERNELS)
    if (cpu_has_avx2()) return &avx2_table();
#endif
    return &scalar_table();
}

const KernelTable*& current() noexcept {
    static const KernelTable* table = initial_table();
    return table;
}

}  // namespace

bool available(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
            return cpu_has_avx2();
    }
    return false;
}

const KernelTable& active() noexcept { return *current(); }

void select(Isa isa) {
    if (!available(isa)) {
        throw UsageError("kernel variant '" + std::string(isa_name(isa)) + "' is not available on this CPU/build");
    }
    switch (isa) {
        case Isa::scalar:
            current() = &scalar_table();
            break;
        case Isa::avx2:
#if defined(QUIC_HAVE_AVX2_KERNELS)
            current() = &avx2_table();
#endif
            break;
    }
}

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
    }
    return "unknown";
}

ScopedIsa::ScopedIsa(Isa isa) : previous_(&active()) { select(isa); }

ScopedIsa::~ScopedIsa() { current() = previous_; }

}  // namespace quic::kernels
