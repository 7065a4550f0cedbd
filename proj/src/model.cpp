#include "quic/model.hpp"

#include <json.hpp>

#include "quic/error.hpp"

namespace quic {
namespace {

using json = nlohmann::json;

constexpr ops::Conv2dGeometry kConv3x3{1, 1};

void check_batch(const Tensor& x, const Shape& sample, const char* who) {
    bool ok = x.rank() == sample.size() + 1;
    for (std::size_t i = 0; ok && i < sample.size(); ++i) ok = x.dim(i + 1) == sample[i];
    if (!ok) {
        throw DimensionError(std::string(who) + ": input " + shape_str(x.shape()) + " does not match sample shape " +
                             shape_str(sample));
    }
}

HeadConfig resolved_head(const ModelConfig& cfg, const Backbone& bb) {
    HeadConfig h = cfg.head;
    h.features = bb.features();
    h.spatial = bb.spatial();
    return h;
}

}  // namespace

std::string_view backbone_name(BackboneKind kind) noexcept {
    switch (kind) {
        case BackboneKind::identity: return "identity";
        case BackboneKind::mlp: return "mlp";
        case BackboneKind::tiny_cnn: return "tiny_cnn";
    }
    return "?";
}

BackboneKind parse_backbone_kind(std::string_view name) {
    if (name == "identity") return BackboneKind::identity;
    if (name == "mlp") return BackboneKind::mlp;
    if (name == "tiny_cnn") return BackboneKind::tiny_cnn;
    throw ConfigError("unknown backbone '" + std::string(name) + "' (expected identity, mlp or tiny_cnn)");
}

std::vector<std::size_t> BackboneSpec::resolved_widths() const {
    if (!widths.empty()) return widths;
    switch (kind) {
        case BackboneKind::identity: return {};
        case BackboneKind::mlp: return {64, 64};
        case BackboneKind::tiny_cnn: return {16, 32};
    }
    return {};
}

Backbone::Backbone(const BackboneSpec& spec, const Shape& sample_shape, Rng& rng)
    : spec_(spec), sample_shape_(sample_shape) {
    if (spec_.features == 0) throw ConfigError("backbone feature width must be positive");
    const auto widths = spec_.resolved_widths();
    for (auto w : widths)
        if (w == 0) throw ConfigError("backbone widths must be positive");

    switch (spec_.kind) {
        case BackboneKind::identity:
            if (sample_shape_.size() != 1 || sample_shape_[0] != spec_.features) {
                throw ConfigError("identity backbone needs flat samples of width " + std::to_string(spec_.features) +
                                  ", got " + shape_str(sample_shape_));
            }
            break;
        case BackboneKind::mlp: {
            if (sample_shape_.size() != 1) throw ConfigError("mlp backbone needs flat samples, got " + shape_str(sample_shape_));
            std::size_t in = sample_shape_[0];
            auto add = [&](std::size_t out) {
                layers_.push_back({kaiming_uniform({out, in}, in, rng), Tensor::zeros({out})});
                in = out;
            };
            for (auto w : widths) add(w);
            add(spec_.features);
            break;
        }
        case BackboneKind::tiny_cnn: {
            if (sample_shape_.size() != 3) {
                throw ConfigError("tiny_cnn backbone needs [channels x H x W] samples, got " + shape_str(sample_shape_));
            }
            std::size_t in = sample_shape_[0];
            std::size_t h = sample_shape_[1], w = sample_shape_[2];
            auto add = [&](std::size_t out) {
                if (h < 2 || w < 2) throw ConfigError("tiny_cnn: image " + shape_str(sample_shape_) + " is too small");
                layers_.push_back({kaiming_uniform({out, in, 3, 3}, in * 9, rng), Tensor::zeros({out})});
                in = out;
                h /= 2;
                w /= 2;
            };
            for (auto c : widths) add(c);
            add(spec_.features);
            out_h_ = h;
            out_w_ = w;
            break;
        }
    }
}

FeatureBundle Backbone::forward(const Var& x, Binder& bind) {
    check_batch(x.value(), sample_shape_, "backbone");
    switch (spec_.kind) {
        case BackboneKind::identity: return {x, std::nullopt};
        case BackboneKind::mlp: {
            Var h = x;
            for (std::size_t i = 0; i < layers_.size(); ++i) {
                h = linear(h, bind(layers_[i].W), bind(layers_[i].b));
                if (i + 1 < layers_.size()) h = relu(h);
            }
            return {h, std::nullopt};
        }
        case BackboneKind::tiny_cnn: {
            Var h = x;
            for (auto& layer : layers_) {
                const Var b = bind(layer.b);
                h = max_pool2d(relu(conv2d(h, bind(layer.W), &b, kConv3x3)), 2, 2);
            }
            return {global_avg_pool(h), h};
        }
    }
    throw UsageError("unreachable backbone kind");
}

Backbone::Inference Backbone::infer(const Tensor& x) const {
    check_batch(x, sample_shape_, "backbone");
    switch (spec_.kind) {
        case BackboneKind::identity: return {x, std::nullopt};
        case BackboneKind::mlp: {
            Tensor h = x;
            for (std::size_t i = 0; i < layers_.size(); ++i) {
                h = ops::add_bias(ops::matmul_nt(h, layers_[i].W), layers_[i].b);
                if (i + 1 < layers_.size()) h = ops::relu(h);
            }
            return {std::move(h), std::nullopt};
        }
        case BackboneKind::tiny_cnn: {
            Tensor h = x;
            for (const auto& layer : layers_) {
                h = ops::max_pool2d(ops::relu(ops::conv2d(h, layer.W, &layer.b, kConv3x3)), 2, 2).out;
            }
            Tensor pooled = ops::global_avg_pool(h);
            return {std::move(pooled), std::move(h)};
        }
    }
    throw UsageError("unreachable backbone kind");
}

void Backbone::collect(ParamList& out) {
    const char* stem = spec_.kind == BackboneKind::tiny_cnn ? "backbone.conv" : "backbone.fc";
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string base = stem + std::to_string(i);
        out.push_back({base + ".W", &layers_[i].W, ParamRole::weight});
        out.push_back({base + ".b", &layers_[i].b, ParamRole::bias});
    }
}

Model::Model(const ModelConfig& cfg, Rng&& rng)
    : cfg_(cfg), backbone_(cfg.backbone, cfg.sample_shape, rng), head_(resolved_head(cfg, backbone_), rng) {
    cfg_.head = head_.config();
}

ModelOutput Model::forward(const Tensor& inputs, Binder& bind, Mode mode) {
    const Var x = bind.input(inputs);
    const FeatureBundle f = backbone_.forward(x, bind);
    return {head_.forward(f, bind, mode), f.pooled};
}

Tensor Model::infer(const Tensor& inputs) const {
    const auto f = backbone_.infer(inputs);
    return head_.infer(f.pooled, f.map ? &*f.map : nullptr);
}

Tensor Model::embed(const Tensor& inputs) const { return backbone_.infer(inputs).pooled; }

ParamList Model::parameters() {
    ParamList out;
    backbone_.collect(out);
    head_.collect(out);
    return out;
}

std::size_t Model::trainable_parameter_count() { return total_elements(parameters(), true); }

Checkpoint Model::to_checkpoint(const std::string& extra_meta_json) {
    json meta;
    meta["model"] = json::parse(model_config_json(cfg_));
    meta["run"] = json::parse(extra_meta_json);
    Checkpoint ckpt;
    ckpt.meta = meta.dump();
    for (const auto& p : parameters()) ckpt.tensors.emplace_back(p.name, *p.tensor);
    return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
    json meta;
    try {
        meta = json::parse(ckpt.meta);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    if (!meta.contains("model")) throw FormatError("checkpoint metadata has no model description");
    Model m(model_config_from_json(meta["model"].dump()), 0);
    m.load_state(ckpt);
    return m;
}

void Model::load_state(const Checkpoint& ckpt) {
    for (const auto& p : parameters()) {
        const Tensor& src = ckpt.at(p.name);
        if (src.shape() != p.tensor->shape()) {
            throw FormatError("checkpoint tensor '" + p.name + "' has shape " + shape_str(src.shape()) + ", model expects " +
                              shape_str(p.tensor->shape()));
        }
        *p.tensor = src;
    }
}

std::string model_config_json(const ModelConfig& cfg) {
    const HeadConfig& h = cfg.head;
    json j;
    j["backbone"] = {{"kind", backbone_name(cfg.backbone.kind)},
                     {"features", cfg.backbone.features},
                     {"widths", cfg.backbone.resolved_widths()}};
    j["head"] = {{"kind", head_name(h.kind)},
                 {"classes", h.classes},
                 {"l2_normalize", h.l2_normalize},
                 {"logit_bn", h.logit_bn},
                 {"freeze_interaction", h.freeze_interaction},
                 {"interaction_init", interaction_init_name(h.interaction_init)},
                 {"bn_eps", h.bn_eps},
                 {"bn_momentum", h.bn_momentum},
                 {"se_reduction", h.se_reduction},
                 {"max_descriptor_elements", h.max_descriptor_elements}};
    j["sample_shape"] = cfg.sample_shape;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ModelConfig cfg;
        const auto& b = j.at("backbone");
        cfg.backbone.kind = parse_backbone_kind(b.at("kind").get<std::string>());
        cfg.backbone.features = b.at("features").get<std::size_t>();
        cfg.backbone.widths = b.at("widths").get<std::vector<std::size_t>>();
        const auto& h = j.at("head");
        cfg.head.kind = parse_head_kind(h.at("kind").get<std::string>());
        cfg.head.classes = h.at("classes").get<std::size_t>();
        cfg.head.l2_normalize = h.at("l2_normalize").get<bool>();
        cfg.head.logit_bn = h.at("logit_bn").get<bool>();
        cfg.head.freeze_interaction = h.at("freeze_interaction").get<bool>();
        cfg.head.interaction_init = parse_interaction_init(h.at("interaction_init").get<std::string>());
        cfg.head.bn_eps = h.at("bn_eps").get<float>();
        cfg.head.bn_momentum = h.at("bn_momentum").get<float>();
        cfg.head.se_reduction = h.at("se_reduction").get<std::size_t>();
        cfg.head.max_descriptor_elements = h.at("max_descriptor_elements").get<std::size_t>();
        cfg.sample_shape = j.at("sample_shape").get<Shape>();
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model description: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("malformed model description: ") + e.what());
    }
}

}  // namespace quic
