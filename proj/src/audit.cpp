#include "quic/audit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "quic/error.hpp"
#include "quic/tracking.hpp"

namespace quic {
namespace {

struct HeadInputs {
    Tensor pooled;
    std::optional<Tensor> map;
    std::vector<int> labels;
};

HeadInputs make_inputs(const HeadDims& d, std::uint64_t seed) {
    Rng rng(seed);
    HeadInputs in;
    if (d.side > 1) {
        in.map = normal_tensor({d.batch, d.features, d.side, d.side}, 1.0, rng);
        in.pooled = ops::global_avg_pool(*in.map);
    } else {
        in.pooled = normal_tensor({d.batch, d.features}, 1.0, rng);
    }
    for (std::size_t b = 0; b < d.batch; ++b) in.labels.push_back(static_cast<int>(b % d.classes));
    return in;
}

void check_dims(const HeadDims& d) {
    if (d.batch == 0 || d.features == 0 || d.side == 0) throw ConfigError("audit dims must be positive");
    if (d.classes < 2) throw ConfigError("audit needs at least 2 classes");
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

HeadConfig head_config_for(HeadKind kind, const HeadDims& dims) {
    HeadConfig h;
    h.kind = kind;
    h.features = dims.features;
    h.classes = dims.classes;
    h.spatial = dims.side * dims.side;
    h.se_reduction = dims.se_reduction;
    h.max_descriptor_elements = std::max(h.max_descriptor_elements, dims.batch * dims.features * dims.features);
    return h;
}

std::size_t bilinear_descriptor_length(std::size_t features) noexcept { return features * features; }

std::size_t count_params(HeadKind kind, const HeadDims& d) {
    const std::size_t c = d.features, k = d.classes;
    switch (kind) {
        case HeadKind::fc: return k * c * d.side * d.side + k;
        case HeadKind::gap: return k * c + k;
        case HeadKind::se: return k * c + k + 2 * c * se_hidden_width(c, d.se_reduction);
        case HeadKind::quic: return k * c + k * c * c + k + 2 * k;
        case HeadKind::bcnn_oracle: return k * c + k * c * c + k;
    }
    return 0;
}

std::size_t count_params(const BackboneSpec& spec, const Shape& sample_shape) {
    std::size_t total = 0;
    std::size_t in = sample_shape.empty() ? 0 : sample_shape[0];
    auto layers = spec.resolved_widths();
    if (spec.kind == BackboneKind::identity) return 0;
    layers.push_back(spec.features);
    const std::size_t taps = spec.kind == BackboneKind::tiny_cnn ? 9 : 1;
    for (auto out : layers) {
        total += out * in * taps + out;
        in = out;
    }
    return total;
}

std::size_t macs_per_sample(HeadKind kind, const HeadDims& d) {
    const std::size_t c = d.features, k = d.classes;
    switch (kind) {
        case HeadKind::fc: return k * c * d.side * d.side;
        case HeadKind::gap: return k * c;
        case HeadKind::se: return k * c + 2 * c * se_hidden_width(c, d.se_reduction) + c;
        case HeadKind::quic: return k * c + k * (c * c + c);
        case HeadKind::bcnn_oracle: return k * c + c * c + k * c * c;
    }
    return 0;
}

ActivationMeasurement peak_activation(HeadKind kind, const HeadDims& dims) {
    check_dims(dims);
    Rng rng(0);
    const Head head(head_config_for(kind, dims), rng);
    const HeadInputs in = make_inputs(dims, 1);
    ActivationMeasurement m;
    AllocationProbe probe;
    const Tensor out = head.infer(in.pooled, in.map ? &*in.map : nullptr);
    m.output = out.numel();
    m.peak_transient = probe.peak_elements() - m.output;
    return m;
}

double time_head(HeadKind kind, const HeadDims& dims, const BenchOptions& opts) {
    check_dims(dims);
    if (opts.trials < 5) throw ConfigError("benchmarks need at least 5 trials");
    Rng rng(opts.seed);
    Head head(head_config_for(kind, dims), rng);
    const HeadInputs in = make_inputs(dims, derive_seed(opts.seed, 1));

    auto step = [&] {
        Tape tape;
        Binder bind(tape);
        FeatureBundle f;
        if (in.map) {
            f.map = tape.variable(*in.map);
            f.pooled = global_avg_pool(*f.map);
        } else {
            f.pooled = tape.variable(in.pooled);
        }
        const Var loss = softmax_cross_entropy(head.forward(f, bind, Mode::train), in.labels);
        const Gradients g = tape.backward(loss);
        (void)g;
    };

    for (std::size_t i = 0; i < opts.warmup; ++i) step();
    auto t0 = std::chrono::steady_clock::now();
    step();
    const double once = std::max(elapsed_ms(t0), 1e-3);
    const auto reps = static_cast<std::size_t>(std::max(1.0, std::ceil(opts.min_trial_ms / once)));

    std::vector<double> trials;
    for (std::size_t t = 0; t < opts.trials; ++t) {
        t0 = std::chrono::steady_clock::now();
        for (std::size_t r = 0; r < reps; ++r) step();
        trials.push_back(elapsed_ms(t0) / static_cast<double>(reps));
    }
    std::sort(trials.begin(), trials.end());
    const std::size_t n = trials.size();
    return n % 2 ? trials[n / 2] : 0.5 * (trials[n / 2 - 1] + trials[n / 2]);
}

AuditReport bench_heads(const HeadDims& dims, const std::vector<HeadKind>& heads, const BenchOptions& opts) {
    AuditReport report{dims, {}};
    for (auto kind : heads) {
        report.rows.push_back({kind, count_params(kind, dims), peak_activation(kind, dims).peak_transient,
                               macs_per_sample(kind, dims), time_head(kind, dims, opts)});
    }
    return report;
}

std::string AuditReport::to_csv() const {
    std::string out = "head,params,peak_act_elems,macs_per_sample,fwd_bwd_ms_median\n";
    for (const auto& r : rows) {
        char ms[32];
        std::snprintf(ms, sizeof ms, "%.4f", r.fwd_bwd_ms_median);
        out += std::string(head_name(r.head)) + "," + std::to_string(r.params) + "," + std::to_string(r.peak_act_elems) +
               "," + std::to_string(r.macs_per_sample) + "," + ms + "\n";
    }
    return out;
}

}  // namespace quic
