#include "quic/tensor.hpp"

#include <cstring>
#include <functional>
#include <numeric>

#include "quic/error.hpp"

namespace quic {

AllocationCounters& allocation_counters() noexcept {
    thread_local AllocationCounters counters;
    return counters;
}

AllocationProbe::AllocationProbe() noexcept {
    auto& c = allocation_counters();
    baseline_ = c.live;
    saved_peak_ = c.peak;
    c.peak = c.live;
}

AllocationProbe::~AllocationProbe() {
    auto& c = allocation_counters();
    if (saved_peak_ > c.peak) c.peak = saved_peak_;
}

std::size_t AllocationProbe::peak_elements() const noexcept {
    return allocation_counters().peak - baseline_;
}

std::size_t AllocationProbe::live_elements() const noexcept {
    auto live = allocation_counters().live;
    return live > baseline_ ? live - baseline_ : 0;
}

std::size_t shape_numel(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void check_dims(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero dimension");
    }
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0f) {}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const float> values) : shape_(std::move(shape)) {
    check_dims(shape_);
    if (values.size() != shape_numel(shape_)) {
        throw DimensionError("tensor shape " + shape_str(shape_) + " needs " +
                             std::to_string(shape_numel(shape_)) + " values, got " +
                             std::to_string(values.size()));
    }
    data_.assign(values.begin(), values.end());
}

Tensor::Tensor(Shape shape, std::initializer_list<float> values)
    : Tensor(std::move(shape), std::span<const float>(values.begin(), values.size())) {}

Tensor Tensor::scalar(float v) {
    Tensor t;
    t.data_[0] = v;
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw DimensionError("index of rank " + std::to_string(index.size()) + " for shape " + shape_str(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= shape_[axis]) {
            throw DimensionError("index " + std::to_string(i) + " out of bounds on axis " +
                                 std::to_string(axis) + " of " + shape_str(shape_));
        }
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
float Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

float Tensor::item() const {
    if (data_.size() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    check_dims(shape);
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

bool Tensor::identical(const Tensor& other) const noexcept {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

}  // namespace quic
