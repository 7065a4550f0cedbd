#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "quic/tracking.hpp"

namespace quic {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

// Dense row-major float32 array. Rank 0 is a scalar with one element.
//
// Invariant: numel(shape) == size(data) and every dimension is >= 1.
class Tensor {
public:
    Tensor();  // rank-0 zero scalar
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::span<const float> values);
    Tensor(Shape shape, std::initializer_list<float> values);

    static Tensor scalar(float v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor full(Shape shape, float v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept { return data_.size(); }

    std::span<float> data() noexcept { return {data_.data(), data_.size()}; }
    std::span<const float> data() const noexcept { return {data_.data(), data_.size()}; }
    float* ptr() noexcept { return data_.data(); }
    const float* ptr() const noexcept { return data_.data(); }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    // Multi-index access; throws DimensionError on rank or bound violations.
    float& at(std::initializer_list<std::size_t> index);
    float at(std::initializer_list<std::size_t> index) const;

    float item() const;  // requires numel() == 1

    // Same payload, new shape with identical element count.
    Tensor reshaped(Shape shape) const;

    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    // Bitwise equality of shape and payload.
    bool identical(const Tensor& other) const noexcept;

private:
    std::size_t offset(std::initializer_list<std::size_t> index) const;

    Shape shape_;
    TrackedVector<float> data_;
};

}  // namespace quic
