#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "quic/data.hpp"
#include "quic/error.hpp"
#include "quic/model.hpp"

namespace quic {

struct TrainConfig {
    double lr0 = 0.001;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double lr_decay_factor = 0.1;
    std::size_t lr_decay_every = 15;
    std::uint64_t seed = 0;

    HeadKind head = HeadKind::quic;
    BackboneSpec backbone;
    bool l2_normalize = false;
    bool logit_bn = true;
    bool freeze_interaction = false;
    InteractionInit interaction_init = InteractionInit::zeros;
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;
    std::size_t se_reduction = 16;

    // 50 epochs, otherwise the defaults above.
    static TrainConfig full_protocol();
    void validate() const;  // throws ConfigError
};

ModelConfig model_config_for(const TrainConfig& cfg, const Shape& sample_shape, std::size_t classes);

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg);

// g' = g + wd * p; v <- momentum * v + g'; p <- p - lr * v.
// Throws DivergenceError on a non-finite gradient.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum, double weight_decay);

struct EpochLog {
    std::size_t epoch;  // 1-based
    double lr;
    double train_loss;  // running mean over the epoch's batches
    double test_top1;
};

std::string epoch_log_csv(const std::vector<EpochLog>& log);

struct EvalReport {
    double top1 = 0.0;
    std::size_t total = 0;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> top_confused_pairs;  // (a < b, count)

    std::string to_json() const;
    std::string confusion_csv() const;
};

// Argmax per row, lowest index on ties.
std::vector<int> predict(const Tensor& logits);
EvalReport make_report(std::span<const int> labels, std::span<const int> predictions, std::size_t classes);
// Eval-mode forward over the whole dataset in fixed-size chunks.
EvalReport evaluate(const Model& model, const Dataset& ds);
// Mean cross-entropy of the eval-mode model.
double mean_loss(const Model& model, const Dataset& ds);

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
    double initial_loss;  // eval-mode mean training loss before any update
};

// Thrown when a loss or gradient becomes non-finite; carries the state at
// the end of the last completed epoch.
class TrainingDiverged : public DivergenceError {
public:
    TrainingDiverged(const std::string& what, Checkpoint last_good, std::vector<EpochLog> log)
        : DivergenceError(what), last_good_(std::move(last_good)), log_(std::move(log)) {}
    const Checkpoint& last_good() const noexcept { return last_good_; }
    const std::vector<EpochLog>& log() const noexcept { return log_; }

private:
    Checkpoint last_good_;
    std::vector<EpochLog> log_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});
// Continues training an existing model (used for matched-initialization runs).
TrainResult train(Model model, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace quic
