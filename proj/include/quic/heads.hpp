#pragma once

// Classification heads that turn backbone features into K logits.
//
//   fc           flatten the feature map, one linear layer
//   gap          global average pool, one linear layer
//   se           squeeze-excitation gate on the channels, then gap
//   quic         y = BN(z W^T + q(z)) + b, q_k(z) = z^T M_k z, M_k = (A_k + A_k^T)/2
//   bcnn_oracle  explicit vec(z z^T) descriptor with a dense K x C^2 layer

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "quic/layers.hpp"
#include "quic/params.hpp"

namespace quic {

enum class HeadKind { fc, gap, se, quic, bcnn_oracle };

inline constexpr std::array<HeadKind, 5> kHeadKinds{HeadKind::fc, HeadKind::gap, HeadKind::se, HeadKind::quic,
                                                    HeadKind::bcnn_oracle};

std::string_view head_name(HeadKind kind) noexcept;
HeadKind parse_head_kind(std::string_view name);  // throws ConfigError

enum class InteractionInit { zeros, small_normal };

std::string_view interaction_init_name(InteractionInit init) noexcept;
InteractionInit parse_interaction_init(std::string_view name);

struct HeadConfig {
    HeadKind kind = HeadKind::quic;
    std::size_t features = 0;  // C
    std::size_t classes = 0;   // K
    std::size_t spatial = 1;   // H*W of the feature map fed to the fc head

    bool l2_normalize = false;        // quic: unit-normalize z before scoring
    bool logit_bn = true;             // quic: batch-normalize the K scores
    bool freeze_interaction = false;  // quic/bcnn_oracle: keep A (or Wbig) fixed
    InteractionInit interaction_init = InteractionInit::zeros;
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;
    std::size_t se_reduction = 16;
    std::size_t max_descriptor_elements = std::size_t{1} << 26;

    void validate() const;  // throws ConfigError
};

// Features handed to a head: pooled [B x C] and, for spatial backbones, the
// map [B x C x H x W] it was pooled from.
struct FeatureBundle {
    Var pooled;
    std::optional<Var> map;
};

struct LinearHeadParams {
    Tensor W;  // [K x D]
    Tensor b;  // [K]
};

// gate(z) = sigmoid(W2 relu(W1 z)), no biases.
struct SEBlockParams {
    Tensor W1;  // [H x C]
    Tensor W2;  // [C x H]
};

struct SEHeadParams {
    SEBlockParams se;
    LinearHeadParams out;
};

struct QuICHeadParams {
    Tensor W;  // [K x C]
    Tensor A;  // [K x C x C], symmetrized on every use
    Tensor b;  // [K]
    BatchNormState bn;
    bool l2_normalize = false;
    bool logit_bn = true;
};

struct BCNNHeadParams {
    Tensor W;     // [K x C]
    Tensor Wbig;  // [K x C*C]
    Tensor b;     // [K]
    std::size_t max_descriptor_elements = std::size_t{1} << 26;
};

// Squeeze width for reduction r, with r clamped so the width stays >= 4
// whenever C allows it.
std::size_t se_hidden_width(std::size_t features, std::size_t reduction);

Var se_gate(const Var& z, SEBlockParams& p, Binder& bind);
Var se_forward(const Var& z, SEBlockParams& p, Binder& bind);  // z * gate(z)

// Pre-normalization scores z W^T + q(z).
Var quic_scores(const Var& z, const Var& W, const Var& A);
Var quic_forward(const Var& z, QuICHeadParams& p, Binder& bind, Mode mode);

Var bcnn_oracle_forward(const Var& z, BCNNHeadParams& p, Binder& bind);

// Untracked eval-mode evaluation used by the audit and for inference.
// quic_infer keeps its transient memory to one B x K block plus the
// quadratic-form scratch.
Tensor quic_infer(const Tensor& z, const QuICHeadParams& p);
Tensor bcnn_oracle_infer(const Tensor& z, const BCNNHeadParams& p);

class Head {
public:
    Head(const HeadConfig& cfg, Rng& rng);

    const HeadConfig& config() const noexcept { return cfg_; }
    HeadKind kind() const noexcept { return cfg_.kind; }

    Var forward(const FeatureBundle& features, Binder& bind, Mode mode);
    // Eval-mode logits without a tape; map may be null for non-spatial inputs.
    Tensor infer(const Tensor& pooled, const Tensor* map) const;

    void collect(ParamList& out);

    using Params = std::variant<LinearHeadParams, SEHeadParams, QuICHeadParams, BCNNHeadParams>;
    Params& params() noexcept { return params_; }
    const Params& params() const noexcept { return params_; }

private:
    HeadConfig cfg_;
    Params params_;
};

}  // namespace quic
