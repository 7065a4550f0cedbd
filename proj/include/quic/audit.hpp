#pragma once

// Parameter counts, peak transient activation, MAC estimates and head timing.

#include <cstddef>
#include <string>
#include <vector>

#include "quic/heads.hpp"
#include "quic/model.hpp"

namespace quic {

struct HeadDims {
    std::size_t batch = 16;
    std::size_t features = 512;  // C
    std::size_t classes = 200;   // K
    std::size_t side = 1;        // feature map is side x side; 1 feeds pooled features directly
    std::size_t se_reduction = 16;
};

HeadConfig head_config_for(HeadKind kind, const HeadDims& dims);

// Trainable parameters (BN running statistics excluded).
std::size_t count_params(HeadKind kind, const HeadDims& dims);
std::size_t count_params(const BackboneSpec& spec, const Shape& sample_shape);
std::size_t bilinear_descriptor_length(std::size_t features) noexcept;
std::size_t macs_per_sample(HeadKind kind, const HeadDims& dims);

struct ActivationMeasurement {
    std::size_t peak_transient = 0;  // tracked elements live beyond the inputs, output excluded
    std::size_t output = 0;          // B x K
};

// Measured by the allocation tracker over one eval-mode forward of the head.
ActivationMeasurement peak_activation(HeadKind kind, const HeadDims& dims);

struct AuditRow {
    HeadKind head;
    std::size_t params;
    std::size_t peak_act_elems;
    std::size_t macs_per_sample;
    double fwd_bwd_ms_median;
};

struct AuditReport {
    HeadDims dims;
    std::vector<AuditRow> rows;
    std::string to_csv() const;
};

struct BenchOptions {
    std::size_t trials = 5;
    std::size_t warmup = 1;
    double min_trial_ms = 20.0;  // inner repetitions grow until one trial lasts this long
    std::uint64_t seed = 0;
};

// Median training-step (forward + backward) time of one head in milliseconds.
double time_head(HeadKind kind, const HeadDims& dims, const BenchOptions& opts);
AuditReport bench_heads(const HeadDims& dims, const std::vector<HeadKind>& heads, const BenchOptions& opts);

}  // namespace quic
