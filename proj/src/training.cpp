#include "quic/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include <json.hpp>

namespace quic {
namespace {

constexpr std::size_t kEvalChunk = 256;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

bool has_train_mode_bn(const Model& m) {
    const auto& h = m.head().config();
    return h.kind == HeadKind::quic && h.logit_bn;
}

template <typename Fn>
void for_each_chunk(const Dataset& ds, Fn&& fn) {
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < ds.size(); start += kEvalChunk) {
        const std::size_t end = std::min(ds.size(), start + kEvalChunk);
        rows.resize(end - start);
        for (std::size_t i = start; i < end; ++i) rows[i - start] = i;
        fn(gather(ds, rows));
    }
}

}  // namespace

TrainConfig TrainConfig::full_protocol() {
    TrainConfig cfg;
    cfg.epochs = 50;
    return cfg;
}

void TrainConfig::validate() const {
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight decay must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr decay factor must lie in (0, 1]");
    if (lr_decay_every == 0) throw ConfigError("lr decay interval must be positive");
    if (!(bn_eps > 0.0f)) throw ConfigError("bn eps must be > 0");
    if (!(bn_momentum >= 0.0f && bn_momentum <= 1.0f)) throw ConfigError("bn momentum must lie in [0, 1]");
    if (se_reduction == 0) throw ConfigError("se reduction must be positive");
}

ModelConfig model_config_for(const TrainConfig& cfg, const Shape& sample_shape, std::size_t classes) {
    ModelConfig m;
    m.backbone = cfg.backbone;
    m.sample_shape = sample_shape;
    m.head.kind = cfg.head;
    m.head.classes = classes;
    m.head.l2_normalize = cfg.l2_normalize;
    m.head.logit_bn = cfg.logit_bn;
    m.head.freeze_interaction = cfg.freeze_interaction;
    m.head.interaction_init = cfg.interaction_init;
    m.head.bn_eps = cfg.bn_eps;
    m.head.bn_momentum = cfg.bn_momentum;
    m.head.se_reduction = cfg.se_reduction;
    return m;
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg) {
    return cfg.lr0 * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum, double weight_decay) {
    if (!param.same_shape(grad) || !param.same_shape(velocity)) {
        throw DimensionError("sgd_step: param " + shape_str(param.shape()) + ", grad " + shape_str(grad.shape()) +
                             ", velocity " + shape_str(velocity.shape()));
    }
    for (std::size_t i = 0; i < param.numel(); ++i) {
        if (!std::isfinite(grad[i])) throw DivergenceError("non-finite gradient entry at index " + std::to_string(i));
    }
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad[i]) + weight_decay * param[i];
        const double v = momentum * velocity[i] + g;
        velocity[i] = static_cast<float>(v);
        param[i] = static_cast<float>(param[i] - lr * v);
        if (!std::isfinite(param[i])) throw DivergenceError("parameter overflow at index " + std::to_string(i));
    }
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
    std::string out = "epoch,lr,train_loss,test_top1\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "," + fmt("%.9g", e.lr) + "," + fmt("%.9g", e.train_loss) + "," +
               fmt("%.6f", e.test_top1) + "\n";
    }
    return out;
}

std::vector<int> predict(const Tensor& logits) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (logits[b * k + j] > logits[b * k + best]) best = j;
        out[b] = static_cast<int>(best);
    }
    return out;
}

EvalReport make_report(std::span<const int> labels, std::span<const int> predictions, std::size_t classes) {
    if (labels.size() != predictions.size()) throw DimensionError("make_report: label and prediction counts differ");
    EvalReport r;
    r.total = labels.size();
    r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto t = static_cast<std::size_t>(labels[i]), p = static_cast<std::size_t>(predictions[i]);
        if (t >= classes || p >= classes) throw DataError("class index outside [0, " + std::to_string(classes) + ")");
        ++r.confusion[t][p];
        correct += t == p;
    }
    r.top1 = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
    for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a + 1; b < classes; ++b) {
            const std::size_t n = r.confusion[a][b] + r.confusion[b][a];
            if (n) r.top_confused_pairs.emplace_back(a, b, n);
        }
    std::stable_sort(r.top_confused_pairs.begin(), r.top_confused_pairs.end(),
                     [](const auto& x, const auto& y) { return std::get<2>(x) > std::get<2>(y); });
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["top1"] = top1;
    j["total"] = total;
    j["confusion"] = confusion;
    auto pairs = nlohmann::json::array();
    for (const auto& [a, b, n] : top_confused_pairs) pairs.push_back({{"a", a}, {"b", b}, {"count", n}});
    j["top_confused_pairs"] = pairs;
    return j.dump(2);
}

std::string EvalReport::confusion_csv() const {
    std::string out = "true";
    for (std::size_t p = 0; p < confusion.size(); ++p) out += ",pred_" + std::to_string(p);
    out += "\n";
    for (std::size_t t = 0; t < confusion.size(); ++t) {
        out += std::to_string(t);
        for (auto n : confusion[t]) out += "," + std::to_string(n);
        out += "\n";
    }
    return out;
}

EvalReport evaluate(const Model& model, const Dataset& ds) {
    std::vector<int> preds;
    preds.reserve(ds.size());
    for_each_chunk(ds, [&](const LabeledBatch& b) {
        auto p = predict(model.infer(b.inputs));
        preds.insert(preds.end(), p.begin(), p.end());
    });
    return make_report(ds.labels, preds, model.head().config().classes);
}

double mean_loss(const Model& model, const Dataset& ds) {
    double total = 0.0;
    for_each_chunk(ds, [&](const LabeledBatch& b) {
        total += ops::softmax_cross_entropy(model.infer(b.inputs), b.labels).loss * static_cast<double>(b.size());
    });
    return ds.size() ? total / static_cast<double>(ds.size()) : 0.0;
}

TrainResult train(const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    train_set.validate();
    Model model(model_config_for(cfg, train_set.sample_shape(), train_set.num_classes), cfg.seed);
    return train(std::move(model), train_set, test_set, cfg, on_epoch);
}

TrainResult train(Model model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    train_set.validate();
    if (test_set.size()) test_set.validate();
    if (train_set.sample_shape() != model.config().sample_shape) {
        throw ConfigError("dataset samples " + shape_str(train_set.sample_shape()) + " do not fit a model built for " +
                          shape_str(model.config().sample_shape));
    }
    if (train_set.num_classes != model.head().config().classes) {
        throw ConfigError("dataset has " + std::to_string(train_set.num_classes) + " classes, model head has " +
                          std::to_string(model.head().config().classes));
    }

    TrainResult result{model, {}, mean_loss(model, train_set)};
    Model last_good = model;
    ParamList params = result.model.parameters();
    std::vector<Tensor> velocity;
    velocity.reserve(params.size());
    for (const auto& p : params) velocity.push_back(Tensor::zeros(p.tensor->shape()));
    const bool skip_singletons = has_train_mode_bn(result.model);

    auto diverged = [&](const std::string& why) {
        return TrainingDiverged(why, last_good.to_checkpoint(), result.log);
    };

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const double lr = lr_at_epoch(e, cfg);
        BatchStream stream(train_set, cfg.batch_size, derive_seed(cfg.seed, e));
        LabeledBatch batch;
        double loss_sum = 0.0;
        std::size_t steps = 0;
        while (stream.next(batch)) {
            if (skip_singletons && batch.size() < 2) continue;
            Tape tape;
            Binder bind(tape);
            std::optional<Var> loss;
            try {
                loss = softmax_cross_entropy(result.model.forward(batch.inputs, bind, Mode::train).logits, batch.labels);
            } catch (const DataError& err) {
                // Inputs were validated up front, so non-finite features come from the weights.
                throw diverged(std::string(err.what()) + " in epoch " + std::to_string(e + 1));
            }
            const double lv = loss->value().item();
            if (!std::isfinite(lv)) throw diverged("loss became non-finite in epoch " + std::to_string(e + 1));
            const Gradients grads = tape.backward(*loss);
            for (std::size_t i = 0; i < params.size(); ++i) {
                const ParamRef& p = params[i];
                if (!trainable(p.role)) continue;
                const Var* v = bind.find(p.tensor);
                if (!v || !v->requires_grad()) continue;
                const double wd = p.role == ParamRole::weight ? cfg.weight_decay : 0.0;
                try {
                    sgd_step(*p.tensor, grads.of(*v), velocity[i], lr, cfg.momentum, wd);
                } catch (const DivergenceError& err) {
                    throw diverged(p.name + ": " + err.what() + " in epoch " + std::to_string(e + 1));
                }
            }
            loss_sum += lv;
            ++steps;
        }
        const double test_top1 = test_set.size() ? evaluate(result.model, test_set).top1 : 0.0;
        result.log.push_back({e + 1, lr, steps ? loss_sum / static_cast<double>(steps) : 0.0, test_top1});
        last_good = result.model;
        if (on_epoch) on_epoch(result.log.back());
    }
    return result;
}

}  // namespace quic
