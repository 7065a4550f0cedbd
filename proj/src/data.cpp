#include "quic/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "quic/error.hpp"
#include "quic/ops.hpp"
#include "quic/qten.hpp"
#include "quic/rng.hpp"

namespace quic {
namespace {

using json = nlohmann::json;

std::size_t pairs_needed(std::size_t classes) {
    std::size_t p = 0;
    while ((std::size_t{1} << p) < classes) ++p;
    return std::max<std::size_t>(p, 1);
}

// Generators emit rows class by class; this interleaves them.
Dataset shuffled(Dataset ds, Rng& rng) {
    auto perm = std::vector<std::size_t>(ds.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    return ds.subset(perm);
}

constexpr std::array<std::array<std::pair<Motif, Motif>, 2>, 3> kMatchings{{
    {{{Motif::fine_checker, Motif::coarse_checker}, {Motif::horizontal_stripes, Motif::vertical_stripes}}},
    {{{Motif::fine_checker, Motif::horizontal_stripes}, {Motif::coarse_checker, Motif::vertical_stripes}}},
    {{{Motif::fine_checker, Motif::vertical_stripes}, {Motif::coarse_checker, Motif::horizontal_stripes}}},
}};

}  // namespace

std::string_view dataset_kind_name(DatasetKind kind) noexcept {
    switch (kind) {
        case DatasetKind::cooc_tabular: return "cooc_tabular";
        case DatasetKind::texture_pair_image: return "texture_pair_image";
        case DatasetKind::file: return "file";
    }
    return "?";
}

DatasetKind parse_dataset_kind(std::string_view name) {
    if (name == "cooc_tabular" || name == "cooc") return DatasetKind::cooc_tabular;
    if (name == "texture_pair_image" || name == "texture") return DatasetKind::texture_pair_image;
    if (name == "file") return DatasetKind::file;
    throw ConfigError("unknown dataset kind '" + std::string(name) + "' (expected cooc, texture or file)");
}

std::vector<std::pair<std::size_t, std::size_t>> DatasetSpec::resolved_pairs() const {
    if (!pairs.empty()) return pairs;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t p = 0; p < pairs_needed(num_classes); ++p) out.emplace_back(2 * p, 2 * p + 1);
    return out;
}

void DatasetSpec::validate() const {
    if (num_classes < 2) throw ConfigError("a dataset needs at least 2 classes");
    if (std::abs(train_fraction + test_fraction - 1.0) > 1e-9 || train_fraction <= 0.0 || test_fraction < 0.0) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise sigma must be a finite value >= 0");
    switch (kind) {
        case DatasetKind::cooc_tabular: {
            if (samples_per_class == 0) throw ConfigError("samples per class must be positive");
            if (feature_dim < 2) throw ConfigError("cooc_tabular needs at least 2 features");
            const auto ps = resolved_pairs();
            if ((std::size_t{1} << std::min<std::size_t>(ps.size(), 62)) < num_classes) {
                throw ConfigError(std::to_string(ps.size()) + " feature pairs cannot encode " + std::to_string(num_classes) +
                                  " classes");
            }
            std::vector<bool> used(feature_dim, false);
            for (auto [i, j] : ps) {
                if (i >= feature_dim || j >= feature_dim) {
                    throw ConfigError("feature pair (" + std::to_string(i) + "," + std::to_string(j) +
                                      ") out of range for dimension " + std::to_string(feature_dim));
                }
                if (i == j || used[i] || used[j]) throw ConfigError("feature pairs must be disjoint and of two distinct features");
                used[i] = used[j] = true;
            }
            break;
        }
        case DatasetKind::texture_pair_image:
            if (samples_per_class == 0) throw ConfigError("samples per class must be positive");
            if (num_classes > kMatchings.size()) throw ConfigError("texture_pair_image supports 2 or 3 classes");
            if (image_size < 16) throw ConfigError("texture_pair_image needs images of at least 16x16");
            if (motif_size == 0 || 2 * motif_size > image_size) {
                throw ConfigError("two " + std::to_string(motif_size) + "px motifs do not fit a " + std::to_string(image_size) +
                                  "px image");
            }
            break;
        case DatasetKind::file:
            if (path.empty()) throw ConfigError("file dataset needs a path");
            break;
    }
}

Shape DatasetSpec::sample_shape() const {
    switch (kind) {
        case DatasetKind::cooc_tabular: return {feature_dim};
        case DatasetKind::texture_pair_image: return {1, image_size, image_size};
        case DatasetKind::file: break;
    }
    throw ConfigError("a file dataset's sample shape comes from its files");
}

Shape Dataset::sample_shape() const {
    const Shape& s = inputs.shape();
    return Shape(s.begin() + 1, s.end());
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    LabeledBatch b = gather(*this, rows);
    return Dataset{std::move(b.inputs), std::move(b.labels), num_classes};
}

void Dataset::validate() const {
    if (inputs.rank() < 2) throw DataError("dataset inputs need a leading sample axis, got " + shape_str(inputs.shape()));
    if (inputs.dim(0) != labels.size()) {
        throw DataError("dataset has " + std::to_string(inputs.dim(0)) + " input rows but " + std::to_string(labels.size()) +
                        " labels");
    }
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    if (!ops::all_finite(inputs)) throw DataError("dataset inputs contain NaN or infinity");
}

Dataset gen_cooc_tabular(const DatasetSpec& spec) {
    spec.validate();
    const std::size_t d = spec.feature_dim, k = spec.num_classes, n = k * spec.samples_per_class;
    const auto pairs = spec.resolved_pairs();
    Rng rng(spec.seed);
    Dataset ds{Tensor({n, d}), std::vector<int>(n), k};
    std::vector<float> signs(d);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t label = r / spec.samples_per_class;
        for (auto& s : signs) s = rng.coin() ? 1.0f : -1.0f;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const float product = ((label >> p) & 1u) ? 1.0f : -1.0f;
            signs[pairs[p].second] = signs[pairs[p].first] * product;
        }
        for (std::size_t j = 0; j < d; ++j) ds.inputs[r * d + j] = static_cast<float>(signs[j] + spec.noise * rng.normal());
        ds.labels[r] = static_cast<int>(label);
    }
    return shuffled(std::move(ds), rng);
}

float motif_value(Motif motif, std::size_t row, std::size_t col) noexcept {
    bool on = false;
    switch (motif) {
        case Motif::fine_checker: on = ((row + col) & 1u) != 0; break;
        case Motif::coarse_checker: on = (((row >> 1) + (col >> 1)) & 1u) != 0; break;
        case Motif::horizontal_stripes: on = ((row >> 1) & 1u) != 0; break;
        case Motif::vertical_stripes: on = ((col >> 1) & 1u) != 0; break;
    }
    return on ? 1.0f : -1.0f;
}

std::array<std::pair<Motif, Motif>, 2> texture_class_pairs(std::size_t label) {
    if (label >= kMatchings.size()) throw ConfigError("texture class " + std::to_string(label) + " does not exist");
    return kMatchings[label];
}

Dataset gen_texture_pair_image(const DatasetSpec& spec) {
    spec.validate();
    const std::size_t s = spec.image_size, m = spec.motif_size, k = spec.num_classes, n = k * spec.samples_per_class;
    // Stamps are kept apart so no single small neighbourhood sees both.
    const std::size_t room = s - m;
    const std::size_t min_offset = std::min<std::size_t>(m + m / 2 + 3, room);
    Rng rng(spec.seed);
    Dataset ds{Tensor({n, 1, s, s}), std::vector<int>(n), k};
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t label = r / spec.samples_per_class;
        const auto pair = kMatchings[label][rng.index(2)];
        const bool swap = rng.coin();
        const Motif first = swap ? pair.second : pair.first;
        const Motif second = swap ? pair.first : pair.second;
        std::size_t r1, c1, r2, c2;
        do {
            r1 = rng.index(room + 1);
            c1 = rng.index(room + 1);
            r2 = rng.index(room + 1);
            c2 = rng.index(room + 1);
        } while (std::max(r1 > r2 ? r1 - r2 : r2 - r1, c1 > c2 ? c1 - c2 : c2 - c1) < min_offset);
        float* img = ds.inputs.ptr() + r * s * s;
        for (std::size_t i = 0; i < s * s; ++i) img[i] = static_cast<float>(spec.noise * rng.normal());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                img[(r1 + i) * s + c1 + j] += motif_value(first, i, j);
                img[(r2 + i) * s + c2 + j] += motif_value(second, i, j);
            }
        ds.labels[r] = static_cast<int>(label);
    }
    return shuffled(std::move(ds), rng);
}

Dataset make_dataset(const DatasetSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case DatasetKind::cooc_tabular: return gen_cooc_tabular(spec);
        case DatasetKind::texture_pair_image: return gen_texture_pair_image(spec);
        case DatasetKind::file: return load_qten_dataset(spec.path);
    }
    throw UsageError("unreachable dataset kind");
}

DatasetSplit stratified_split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    std::vector<std::size_t> train, test;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& rows = by_class[c];
        Rng rng(derive_seed(seed, c));
        rng.shuffle(std::span<std::size_t>(rows));
        const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rows.size())));
        train.insert(train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    if (train.empty()) throw DataError("split leaves no training samples");
    DatasetSplit out{ds.subset(train), Dataset{}};
    if (test.empty()) {
        out.test = Dataset{Tensor(), {}, ds.num_classes};
    } else {
        out.test = ds.subset(test);
    }
    return out;
}

std::string dataset_meta_json(const DatasetSpec& spec, const Dataset& ds) {
    json j;
    j["kind"] = dataset_kind_name(spec.kind);
    j["num_classes"] = ds.num_classes;
    j["samples"] = ds.size();
    j["sample_shape"] = ds.sample_shape();
    j["samples_per_class"] = spec.samples_per_class;
    j["noise"] = spec.noise;
    j["seed"] = spec.seed;
    j["train_fraction"] = spec.train_fraction;
    if (spec.kind == DatasetKind::cooc_tabular) j["pairs"] = spec.resolved_pairs();
    if (spec.kind == DatasetKind::texture_pair_image) j["motif_size"] = spec.motif_size;
    return j.dump(2);
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const std::string& meta_json) {
    ds.validate();
    std::filesystem::create_directories(dir);
    Tensor labels({ds.size()});
    for (std::size_t i = 0; i < ds.size(); ++i) labels[i] = static_cast<float>(ds.labels[i]);
    save_qten(dir / "inputs.qten", ds.inputs);
    save_qten(dir / "labels.qten", labels);
    write_file_atomic(dir / "meta.json", meta_json + "\n");
}

Dataset load_qten_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
    Dataset ds;
    ds.inputs = load_qten(dir / "inputs.qten");
    const Tensor labels = load_qten(dir / "labels.qten");
    if (labels.rank() != 1) throw FormatError("labels.qten must be rank 1, got " + shape_str(labels.shape()));
    if (ds.inputs.rank() < 2 || ds.inputs.dim(0) != labels.dim(0)) {
        throw FormatError("inputs " + shape_str(ds.inputs.shape()) + " and labels " + shape_str(labels.shape()) +
                          " disagree on the sample count");
    }
    int max_label = -1;
    ds.labels.resize(labels.numel());
    for (std::size_t i = 0; i < labels.numel(); ++i) {
        const float v = labels[i];
        if (!(v >= 0.0f) || v != std::floor(v) || v > 1e7f) {
            throw FormatError("label " + std::to_string(v) + " at row " + std::to_string(i) + " is not a class index");
        }
        ds.labels[i] = static_cast<int>(v);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = static_cast<std::size_t>(max_label + 1);
    const auto meta_path = dir / "meta.json";
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            const json j = json::parse(ss.str());
            if (j.contains("num_classes")) {
                const auto k = j["num_classes"].get<std::size_t>();
                if (k < ds.num_classes) {
                    throw FormatError("meta.json declares " + std::to_string(k) + " classes but labels reach " +
                                      std::to_string(max_label));
                }
                ds.num_classes = k;
            }
        } catch (const json::exception& e) {
            throw FormatError("malformed meta.json: " + std::string(e.what()));
        }
    }
    if (ds.num_classes < 2) ds.num_classes = 2;
    ds.validate();
    return ds;
}

std::vector<std::size_t> shuffle_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(perm));
    return perm;
}

BatchStream::BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed)
    : ds_(ds), batch_size_(batch_size), order_(shuffle_permutation(ds.size(), shuffle_seed)) {
    if (batch_size_ == 0) throw ConfigError("batch size must be positive");
}

bool BatchStream::next(LabeledBatch& out) {
    if (cursor_ >= order_.size()) return false;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    out = gather(ds_, std::span<const std::size_t>(order_).subspan(cursor_, end - cursor_));
    cursor_ = end;
    return true;
}

std::size_t BatchStream::batch_count() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

LabeledBatch gather(const Dataset& ds, std::span<const std::size_t> rows) {
    Shape shape = ds.inputs.shape();
    if (rows.empty()) throw DataError("cannot gather an empty set of rows");
    const std::size_t row = ds.inputs.numel() / shape[0];
    shape[0] = rows.size();
    LabeledBatch b{Tensor(shape), std::vector<int>(rows.size())};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= ds.size()) throw DataError("row index " + std::to_string(rows[i]) + " out of range");
        std::memcpy(b.inputs.ptr() + i * row, ds.inputs.ptr() + rows[i] * row, row * sizeof(float));
        b.labels[i] = ds.labels[rows[i]];
    }
    return b;
}

}  // namespace quic
