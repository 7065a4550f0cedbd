#include "quic/heads.hpp"

#include <algorithm>
#include <cmath>

#include "quic/error.hpp"
#include "quic/kernels.hpp"
#include "quic/ops.hpp"

namespace quic {
namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

void require_features(const Tensor& z, std::size_t c, const char* who) {
    if (z.rank() != 2 || z.dim(1) != c) {
        throw DimensionError(std::string(who) + ": expected [B x " + std::to_string(c) + "] features, got " +
                             shape_str(z.shape()));
    }
}

void require_finite(const Tensor& z, const char* who) {
    if (!ops::all_finite(z)) throw DataError(std::string(who) + ": features contain NaN or infinity");
}

Shape flat_shape(const Shape& s) {
    std::size_t rest = 1;
    for (std::size_t i = 1; i < s.size(); ++i) rest *= s[i];
    return {s[0], rest};
}

// x is rows x width, row-major; returns x W^T + b without copying x.
Tensor affine_rows(const float* x, std::size_t rows, std::size_t width, const Tensor& W, const Tensor& b) {
    if (W.rank() != 2 || W.dim(1) != width) {
        throw DimensionError("head weights " + shape_str(W.shape()) + " do not take inputs of width " + std::to_string(width));
    }
    const std::size_t k = W.dim(0);
    Tensor out({rows, k});
    ops::gemm_nt(rows, k, width, x, width, W.ptr(), width, out.ptr(), k, false);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i % k];
    return out;
}

}  // namespace

std::string_view head_name(HeadKind kind) noexcept {
    switch (kind) {
        case HeadKind::fc: return "fc";
        case HeadKind::gap: return "gap";
        case HeadKind::se: return "se";
        case HeadKind::quic: return "quic";
        case HeadKind::bcnn_oracle: return "bcnn_oracle";
    }
    return "?";
}

HeadKind parse_head_kind(std::string_view name) {
    for (auto k : kHeadKinds)
        if (head_name(k) == name) return k;
    throw ConfigError("unknown head '" + std::string(name) + "' (expected fc, gap, se, quic or bcnn_oracle)");
}

std::string_view interaction_init_name(InteractionInit init) noexcept {
    return init == InteractionInit::zeros ? "zeros" : "small_normal";
}

InteractionInit parse_interaction_init(std::string_view name) {
    if (name == "zeros") return InteractionInit::zeros;
    if (name == "small_normal") return InteractionInit::small_normal;
    throw ConfigError("unknown interaction init '" + std::string(name) + "' (expected zeros or small_normal)");
}

void HeadConfig::validate() const {
    if (features == 0) throw ConfigError("head feature dimension must be positive");
    if (classes < 2) throw ConfigError("a classifier head needs at least 2 classes");
    if (spatial == 0) throw ConfigError("head spatial size must be positive");
    if (se_reduction == 0) throw ConfigError("se reduction must be positive");
    if (!(bn_eps > 0.0f)) throw ConfigError("bn eps must be > 0");
    if (!(bn_momentum >= 0.0f && bn_momentum <= 1.0f)) throw ConfigError("bn momentum must lie in [0, 1]");
}

std::size_t se_hidden_width(std::size_t features, std::size_t reduction) {
    const std::size_t r = std::max<std::size_t>(1, std::min(reduction, features / 4));
    return std::max<std::size_t>(1, features / r);
}

Var se_gate(const Var& z, SEBlockParams& p, Binder& bind) {
    return sigmoid(linear(relu(linear(z, bind(p.W1))), bind(p.W2)));
}

Var se_forward(const Var& z, SEBlockParams& p, Binder& bind) { return z * se_gate(z, p, bind); }

Var quic_scores(const Var& z, const Var& W, const Var& A) {
    return matmul_nt(z, W) + symmetric_quadratic_form(z, A);
}

Var quic_forward(const Var& z, QuICHeadParams& p, Binder& bind, Mode mode) {
    require_features(z.value(), p.W.dim(1), "quic_forward");
    require_finite(z.value(), "quic_forward");
    const Var zn = p.l2_normalize ? l2_normalize_rows(z) : z;
    Var s = quic_scores(zn, bind(p.W), bind(p.A));
    if (p.logit_bn) s = batch_norm_1d(s, bind(p.bn.gamma), bind(p.bn.beta), p.bn, mode);
    return add_bias(s, bind(p.b));
}

Var bcnn_oracle_forward(const Var& z, BCNNHeadParams& p, Binder& bind) {
    require_features(z.value(), p.W.dim(1), "bcnn_oracle_forward");
    const Var desc = bilinear_descriptor(z, p.max_descriptor_elements);
    return add_bias(matmul_nt(z, bind(p.W)) + matmul_nt(desc, bind(p.Wbig)), bind(p.b));
}

Tensor quic_infer(const Tensor& z_in, const QuICHeadParams& p) {
    require_features(z_in, p.W.dim(1), "quic_infer");
    require_finite(z_in, "quic_infer");
    std::optional<Tensor> zn;
    if (p.l2_normalize) zn = ops::l2_normalize_rows(z_in, 1e-12f);
    const Tensor& z = zn ? *zn : z_in;
    Tensor out = ops::matmul_nt(z, p.W);
    {
        const Tensor q = ops::symmetric_quadratic_form(z, p.A);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += q[i];
    }
    const std::size_t batch = out.dim(0), k = out.dim(1);
    for (std::size_t j = 0; j < k; ++j) {
        // Same arithmetic as the tracked eval-mode batch norm.
        double a = 1.0, c = 0.0;
        if (p.logit_bn) {
            a = p.bn.gamma[j] * (1.0 / std::sqrt(static_cast<double>(p.bn.running_var[j]) + static_cast<double>(p.bn.eps)));
            c = p.bn.beta[j] - p.bn.running_mean[j] * a;
        }
        for (std::size_t b = 0; b < batch; ++b) {
            float& v = out[b * k + j];
            if (p.logit_bn) v = static_cast<float>(v * a + c);
            v += p.b[j];
        }
    }
    return out;
}

Tensor bcnn_oracle_infer(const Tensor& z, const BCNNHeadParams& p) {
    require_features(z, p.W.dim(1), "bcnn_oracle_infer");
    Tensor out = ops::matmul_nt(z, p.W);
    {
        const Tensor desc = ops::bilinear_descriptor(z, p.max_descriptor_elements);
        const std::size_t c2 = desc.dim(1);
        ops::gemm_nt(out.dim(0), out.dim(1), c2, desc.ptr(), c2, p.Wbig.ptr(), c2, out.ptr(), out.dim(1), true);
    }
    const std::size_t k = out.dim(1);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += p.b[i % k];
    return out;
}

Head::Head(const HeadConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t c = cfg_.features, k = cfg_.classes;
    // W is always drawn first so heads that share a backbone and seed start
    // from the same linear weights.
    switch (cfg_.kind) {
        case HeadKind::fc:
            params_ = LinearHeadParams{kaiming_uniform({k, c * cfg_.spatial}, c * cfg_.spatial, rng), Tensor::zeros({k})};
            break;
        case HeadKind::gap:
            params_ = LinearHeadParams{kaiming_uniform({k, c}, c, rng), Tensor::zeros({k})};
            break;
        case HeadKind::se: {
            LinearHeadParams out{kaiming_uniform({k, c}, c, rng), Tensor::zeros({k})};
            const std::size_t h = se_hidden_width(c, cfg_.se_reduction);
            SEBlockParams se{kaiming_uniform({h, c}, c, rng), kaiming_uniform({c, h}, h, rng)};
            params_ = SEHeadParams{std::move(se), std::move(out)};
            break;
        }
        case HeadKind::quic: {
            QuICHeadParams p;
            p.W = kaiming_uniform({k, c}, c, rng);
            p.A = cfg_.interaction_init == InteractionInit::zeros
                      ? Tensor::zeros({k, c, c})
                      : normal_tensor({k, c, c}, 1e-3 / std::sqrt(static_cast<double>(c)), rng);
            p.b = Tensor::zeros({k});
            p.bn = BatchNormState(k, cfg_.bn_eps, cfg_.bn_momentum);
            p.l2_normalize = cfg_.l2_normalize;
            p.logit_bn = cfg_.logit_bn;
            params_ = std::move(p);
            break;
        }
        case HeadKind::bcnn_oracle: {
            BCNNHeadParams p;
            p.W = kaiming_uniform({k, c}, c, rng);
            p.Wbig = cfg_.interaction_init == InteractionInit::zeros
                         ? Tensor::zeros({k, c * c})
                         : normal_tensor({k, c * c}, 1e-3 / std::sqrt(static_cast<double>(c)), rng);
            p.b = Tensor::zeros({k});
            p.max_descriptor_elements = cfg_.max_descriptor_elements;
            params_ = std::move(p);
            break;
        }
    }
}

Var Head::forward(const FeatureBundle& f, Binder& bind, Mode mode) {
    return std::visit(
        overloaded{
            [&](LinearHeadParams& p) {
                if (cfg_.kind == HeadKind::fc && f.map) return linear(reshape(*f.map, flat_shape(f.map->shape())), bind(p.W), bind(p.b));
                return linear(f.pooled, bind(p.W), bind(p.b));
            },
            [&](SEHeadParams& p) {
                Var z = f.map ? global_avg_pool(scale_channels(*f.map, se_gate(f.pooled, p.se, bind)))
                              : se_forward(f.pooled, p.se, bind);
                return linear(z, bind(p.out.W), bind(p.out.b));
            },
            [&](QuICHeadParams& p) {
                if (cfg_.freeze_interaction) bind.freeze(&p.A);
                return quic_forward(f.pooled, p, bind, mode);
            },
            [&](BCNNHeadParams& p) {
                if (cfg_.freeze_interaction) bind.freeze(&p.Wbig);
                return bcnn_oracle_forward(f.pooled, p, bind);
            },
        },
        params_);
}

Tensor Head::infer(const Tensor& pooled, const Tensor* map) const {
    return std::visit(
        overloaded{
            [&](const LinearHeadParams& p) {
                if (cfg_.kind == HeadKind::fc && map) {
                    return affine_rows(map->ptr(), map->dim(0), map->numel() / map->dim(0), p.W, p.b);
                }
                return affine_rows(pooled.ptr(), pooled.dim(0), pooled.numel() / pooled.dim(0), p.W, p.b);
            },
            [&](const SEHeadParams& p) {
                const Tensor gate =
                    ops::sigmoid(ops::matmul_nt(ops::relu(ops::matmul_nt(pooled, p.se.W1)), p.se.W2));
                const Tensor z = map ? ops::global_avg_pool(ops::scale_channels(*map, gate)) : ops::mul(pooled, gate);
                return affine_rows(z.ptr(), z.dim(0), z.dim(1), p.out.W, p.out.b);
            },
            [&](const QuICHeadParams& p) { return quic_infer(pooled, p); },
            [&](const BCNNHeadParams& p) { return bcnn_oracle_infer(pooled, p); },
        },
        params_);
}

void Head::collect(ParamList& out) {
    std::visit(overloaded{
                   [&](LinearHeadParams& p) {
                       out.push_back({"head.W", &p.W, ParamRole::weight});
                       out.push_back({"head.b", &p.b, ParamRole::bias});
                   },
                   [&](SEHeadParams& p) {
                       out.push_back({"head.se.W1", &p.se.W1, ParamRole::weight});
                       out.push_back({"head.se.W2", &p.se.W2, ParamRole::weight});
                       out.push_back({"head.W", &p.out.W, ParamRole::weight});
                       out.push_back({"head.b", &p.out.b, ParamRole::bias});
                   },
                   [&](QuICHeadParams& p) {
                       out.push_back({"head.W", &p.W, ParamRole::weight});
                       out.push_back({"head.A", &p.A, ParamRole::weight});
                       out.push_back({"head.b", &p.b, ParamRole::bias});
                       out.push_back({"head.bn.gamma", &p.bn.gamma, ParamRole::norm_affine});
                       out.push_back({"head.bn.beta", &p.bn.beta, ParamRole::norm_affine});
                       out.push_back({"head.bn.running_mean", &p.bn.running_mean, ParamRole::buffer});
                       out.push_back({"head.bn.running_var", &p.bn.running_var, ParamRole::buffer});
                   },
                   [&](BCNNHeadParams& p) {
                       out.push_back({"head.W", &p.W, ParamRole::weight});
                       out.push_back({"head.Wbig", &p.Wbig, ParamRole::weight});
                       out.push_back({"head.b", &p.b, ParamRole::bias});
                   },
               },
               params_);
}

}  // namespace quic
