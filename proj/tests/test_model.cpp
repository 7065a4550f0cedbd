#include <doctest.h>

#include <sstream>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "quic/audit.hpp"
#include "quic/error.hpp"
#include "quic/model.hpp"
#include "quic/ops.hpp"
#include "quic/qten.hpp"

using namespace quic;
using gradcheck::random_tensor;

namespace {

ModelConfig make_config(BackboneKind bk, HeadKind hk, Shape sample, std::size_t features, std::size_t classes) {
    ModelConfig cfg;
    cfg.backbone.kind = bk;
    cfg.backbone.features = features;
    cfg.head.kind = hk;
    cfg.head.classes = classes;
    cfg.sample_shape = std::move(sample);
    return cfg;
}

std::string bytes_of(const Checkpoint& c) {
    std::ostringstream ss;
    write_checkpoint(ss, c);
    return ss.str();
}

}  // namespace

TEST_CASE("backbone names") {
    for (auto k : {BackboneKind::identity, BackboneKind::mlp, BackboneKind::tiny_cnn})
        CHECK(parse_backbone_kind(backbone_name(k)) == k);
    CHECK_THROWS_AS(parse_backbone_kind("resnet"), ConfigError);
}

TEST_CASE("backbone output shapes") {
    Rng rng(1);
    SUBCASE("identity") {
        Model m(make_config(BackboneKind::identity, HeadKind::quic, {6}, 6, 2), 1);
        CHECK(m.infer(random_tensor({3, 6}, rng)).shape() == Shape{3, 2});
        CHECK(m.embed(random_tensor({3, 6}, rng)).shape() == Shape{3, 6});
    }
    SUBCASE("mlp") {
        Model m(make_config(BackboneKind::mlp, HeadKind::gap, {10}, 8, 3), 1);
        CHECK(m.embed(random_tensor({4, 10}, rng)).shape() == Shape{4, 8});
    }
    SUBCASE("tiny_cnn") {
        Model m(make_config(BackboneKind::tiny_cnn, HeadKind::fc, {1, 16, 16}, 8, 3), 1);
        CHECK(m.backbone().spatial() == 2 * 2);
        CHECK(m.head().config().spatial == 4);
        CHECK(m.infer(random_tensor({2, 1, 16, 16}, rng)).shape() == Shape{2, 3});
    }
}

TEST_CASE("identity backbone needs matching feature count") {
    CHECK_THROWS_AS(Model(make_config(BackboneKind::identity, HeadKind::quic, {6}, 5, 2), 1), ConfigError);
    CHECK_THROWS_AS(Model(make_config(BackboneKind::tiny_cnn, HeadKind::quic, {6}, 5, 2), 1), ConfigError);
}

TEST_CASE("backbone parameter counts match enumeration") {
    for (auto [kind, shape] : {std::pair<BackboneKind, Shape>{BackboneKind::mlp, {10}},
                               {BackboneKind::tiny_cnn, {1, 16, 16}},
                               {BackboneKind::identity, {8}}}) {
        BackboneSpec spec;
        spec.kind = kind;
        spec.features = 8;
        Rng rng(2);
        Backbone bb(spec, shape, rng);
        ParamList ps;
        bb.collect(ps);
        CHECK(total_elements(ps, true) == count_params(spec, shape));
    }
}

TEST_CASE("tracked and untracked forwards agree in eval mode") {
    Rng rng(3);
    for (HeadKind hk : kHeadKinds) {
        INFO(head_name(hk));
        Model m(make_config(BackboneKind::tiny_cnn, hk, {1, 16, 16}, 8, 3), 4);
        const Tensor x = random_tensor({3, 1, 16, 16}, rng);
        Tape tape;
        Binder bind(tape);
        const Tensor y = m.forward(x, bind, Mode::eval).logits.value();
        CHECK(fixtures::max_rel_diff(y, m.infer(x), 1e-5) < 1e-5);
    }
}

TEST_CASE("fixed-seed construction and forward are bit-reproducible") {
    Rng rng(5);
    const Tensor x = random_tensor({4, 12}, rng);
    const auto cfg = make_config(BackboneKind::mlp, HeadKind::quic, {12}, 6, 3);
    Model a(cfg, 9), b(cfg, 9), c(cfg, 10);
    CHECK(a.infer(x).identical(b.infer(x)));
    CHECK_FALSE(a.infer(x).identical(c.infer(x)));
    CHECK(bytes_of(a.to_checkpoint()) == bytes_of(b.to_checkpoint()));
}

TEST_CASE("checkpoint round trip restores every tensor") {
    Rng rng(6);
    auto cfg = make_config(BackboneKind::tiny_cnn, HeadKind::quic, {1, 16, 16}, 8, 3);
    cfg.backbone.widths = {4};
    cfg.head.interaction_init = InteractionInit::small_normal;
    Model m(cfg, 3);
    for (auto& p : m.parameters())
        if (p.role == ParamRole::buffer) *p.tensor = ops::add(*p.tensor, Tensor::scalar(0.5f));
    const Checkpoint ck = m.to_checkpoint(R"({"note":"x"})");
    Model r = Model::from_checkpoint(ck);
    CHECK(bytes_of(r.to_checkpoint(R"({"note":"x"})")) == bytes_of(ck));
    const Tensor x = random_tensor({2, 1, 16, 16}, rng);
    CHECK(r.infer(x).identical(m.infer(x)));
    CHECK(r.config().backbone.widths == std::vector<std::size_t>{4});
}

TEST_CASE("load_state rejects incompatible checkpoints") {
    Model a(make_config(BackboneKind::identity, HeadKind::quic, {6}, 6, 3), 1);
    Model b(make_config(BackboneKind::identity, HeadKind::quic, {6}, 6, 4), 1);
    CHECK_THROWS_AS(a.load_state(b.to_checkpoint()), FormatError);
    Checkpoint bad;
    bad.meta = "{not json";
    CHECK_THROWS_AS(Model::from_checkpoint(bad), FormatError);
}

TEST_CASE("model config json round trip") {
    auto cfg = make_config(BackboneKind::mlp, HeadKind::se, {12}, 6, 3);
    cfg.backbone.widths = {5, 7};
    cfg.head.se_reduction = 2;
    cfg.head.bn_eps = 1e-3f;
    Model m(cfg, 1);
    const std::string text = model_config_json(m.config());
    const ModelConfig back = model_config_from_json(text);
    CHECK(model_config_json(back) == text);
    CHECK(back.backbone.features == 6);
    CHECK_THROWS_AS(model_config_from_json("[]"), FormatError);
}

TEST_CASE("trainable count excludes running statistics") {
    Model m(make_config(BackboneKind::identity, HeadKind::quic, {64}, 64, 10), 1);
    CHECK(m.trainable_parameter_count() == 41630);
    CHECK(total_elements(m.parameters(), false) == 41650);
}
