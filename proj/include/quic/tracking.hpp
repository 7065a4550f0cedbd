#pragma once

// Element-count allocation tracking for activation-memory audits.
//
// Every tensor payload and every scratch buffer used by the head kernels is
// allocated through TrackingAllocator, which bumps thread-local live/peak
// counters. Counts are in elements (not bytes) regardless of element type, so
// a double scratch row of length C counts as C.

#include <cstddef>
#include <new>
#include <vector>

namespace quic {

struct AllocationCounters {
    std::size_t live = 0;
    std::size_t peak = 0;
};

AllocationCounters& allocation_counters() noexcept;

template <typename T>
struct TrackingAllocator {
    using value_type = T;

    TrackingAllocator() noexcept = default;
    template <typename U>
    TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        auto& c = allocation_counters();
        c.live += n;
        if (c.live > c.peak) c.peak = c.live;
        return static_cast<T*>(::operator new(n * sizeof(T)));
    }

    void deallocate(T* p, std::size_t n) noexcept {
        allocation_counters().live -= n;
        ::operator delete(p);
    }

    template <typename U>
    bool operator==(const TrackingAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using TrackedVector = std::vector<T, TrackingAllocator<T>>;

// Measures the high-water mark of tracked elements allocated since
// construction, relative to the live count at construction.
class AllocationProbe {
public:
    AllocationProbe() noexcept;
    ~AllocationProbe();
    AllocationProbe(const AllocationProbe&) = delete;
    AllocationProbe& operator=(const AllocationProbe&) = delete;

    std::size_t peak_elements() const noexcept;
    std::size_t live_elements() const noexcept;

private:
    std::size_t baseline_;
    std::size_t saved_peak_;
};

}  // namespace quic
