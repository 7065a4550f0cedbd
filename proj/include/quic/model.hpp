#pragma once

// Backbones (identity, mlp, tiny_cnn) and the backbone + head model.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "quic/heads.hpp"
#include "quic/qten.hpp"

namespace quic {

enum class BackboneKind { identity, mlp, tiny_cnn };

std::string_view backbone_name(BackboneKind kind) noexcept;
BackboneKind parse_backbone_kind(std::string_view name);

struct BackboneSpec {
    BackboneKind kind = BackboneKind::mlp;
    std::size_t features = 32;  // C, width of the pooled output
    // mlp: hidden widths. tiny_cnn: channels of the first blocks; the last
    // block always has `features` channels. Empty means the default plan.
    std::vector<std::size_t> widths;

    std::vector<std::size_t> resolved_widths() const;
};

class Backbone {
public:
    // sample_shape: [D] for identity/mlp, [channels x H x W] for tiny_cnn.
    Backbone(const BackboneSpec& spec, const Shape& sample_shape, Rng& rng);

    const BackboneSpec& spec() const noexcept { return spec_; }
    std::size_t features() const noexcept { return spec_.features; }
    // H*W of the map handed to the head (1 when there is no spatial map).
    std::size_t spatial() const noexcept { return out_h_ * out_w_; }

    FeatureBundle forward(const Var& x, Binder& bind);
    struct Inference {
        Tensor pooled;
        std::optional<Tensor> map;
    };
    Inference infer(const Tensor& x) const;

    void collect(ParamList& out);

private:
    struct Layer {
        Tensor W, b;
    };
    BackboneSpec spec_;
    Shape sample_shape_;
    std::vector<Layer> layers_;
    std::size_t out_h_ = 1, out_w_ = 1;
};

struct ModelConfig {
    BackboneSpec backbone;
    HeadConfig head;  // features and spatial are filled in from the backbone
    Shape sample_shape;
};

struct ModelOutput {
    Var logits;
    Var features;  // pooled backbone output
};

class Model {
public:
    Model(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg, Rng(seed)) {}
    Model(const ModelConfig& cfg, Rng&& rng);

    const ModelConfig& config() const noexcept { return cfg_; }
    Backbone& backbone() noexcept { return backbone_; }
    Head& head() noexcept { return head_; }
    const Head& head() const noexcept { return head_; }

    ModelOutput forward(const Tensor& inputs, Binder& bind, Mode mode);
    // Eval-mode logits without a tape.
    Tensor infer(const Tensor& inputs) const;
    // Eval-mode pooled backbone features.
    Tensor embed(const Tensor& inputs) const;

    // Every named tensor, buffers included, in a stable order.
    ParamList parameters();
    std::size_t trainable_parameter_count();

    Checkpoint to_checkpoint(const std::string& extra_meta_json = "{}");
    static Model from_checkpoint(const Checkpoint& ckpt);
    // Overwrites this model's tensors with the matching checkpoint entries.
    void load_state(const Checkpoint& ckpt);

private:
    ModelConfig cfg_;
    Backbone backbone_;
    Head head_;
};

// JSON text for a ModelConfig and back; used for checkpoint metadata.
std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace quic
