#pragma once

// Synthetic second-order datasets, dataset directories, splits and batching.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "quic/tensor.hpp"

namespace quic {

enum class DatasetKind { cooc_tabular, texture_pair_image, file };

std::string_view dataset_kind_name(DatasetKind kind) noexcept;
DatasetKind parse_dataset_kind(std::string_view name);  // accepts "cooc" and "texture" too

struct DatasetSpec {
    DatasetKind kind = DatasetKind::cooc_tabular;
    std::size_t num_classes = 2;
    std::size_t samples_per_class = 1000;
    std::size_t feature_dim = 32;  // cooc_tabular
    std::size_t image_size = 32;   // texture_pair_image: square, one channel
    std::size_t motif_size = 8;    // texture_pair_image
    double noise = 0.3;            // additive Gaussian sigma
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    double test_fraction = 0.2;
    // cooc_tabular feature pairs; empty selects (0,1), (2,3), ... as needed.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::filesystem::path path;  // file

    void validate() const;  // throws ConfigError
    Shape sample_shape() const;
    std::vector<std::pair<std::size_t, std::size_t>> resolved_pairs() const;
};

struct Dataset {
    Tensor inputs;            // [N x sample_shape...]
    std::vector<int> labels;  // N entries in [0, K)
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    Shape sample_shape() const;
    Dataset subset(std::span<const std::size_t> rows) const;
    void validate() const;  // throws DataError
};

struct LabeledBatch {
    Tensor inputs;
    std::vector<int> labels;
    std::size_t size() const noexcept { return labels.size(); }
};

// Canonical variant (K = 2): label 1 iff the clean signs of the designated
// pair agree. With more classes, bit p of the class index fixes the sign of
// the product on pair p. Every single-feature marginal is class-independent.
Dataset gen_cooc_tabular(const DatasetSpec& spec);

// Four texture motifs; each class is one way of splitting them into two
// pairs, and an image shows one pair of its class stamped at two separated
// locations. Each motif occurs equally often in every class, so only the
// pairing carries the label.
Dataset gen_texture_pair_image(const DatasetSpec& spec);

enum class Motif { fine_checker, coarse_checker, horizontal_stripes, vertical_stripes };
float motif_value(Motif motif, std::size_t row, std::size_t col) noexcept;
// The two motif pairs making up class `label`.
std::array<std::pair<Motif, Motif>, 2> texture_class_pairs(std::size_t label);

// Dispatches on spec.kind; `file` loads spec.path.
Dataset make_dataset(const DatasetSpec& spec);

struct DatasetSplit {
    Dataset train, test;
};
// Per-class split; rows keep their original relative order.
DatasetSplit stratified_split(const Dataset& ds, double train_fraction, std::uint64_t seed);

// Directory layout: inputs.qten, labels.qten (f32), meta.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const std::string& meta_json);
Dataset load_qten_dataset(const std::filesystem::path& dir);
std::string dataset_meta_json(const DatasetSpec& spec, const Dataset& ds);

std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed);

// Mini-batches over a seeded permutation; the final short batch is kept.
class BatchStream {
public:
    BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed);

    bool next(LabeledBatch& out);
    std::size_t batch_count() const noexcept;
    const std::vector<std::size_t>& order() const noexcept { return order_; }

private:
    const Dataset& ds_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

LabeledBatch gather(const Dataset& ds, std::span<const std::size_t> rows);

}  // namespace quic
