#pragma once

#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "quic/autodiff.hpp"
#include "quic/rng.hpp"

namespace quic {

// How the optimizer treats a named tensor.
enum class ParamRole {
    weight,       // trained, receives weight decay
    bias,         // trained, no weight decay
    norm_affine,  // BN gamma/beta: trained, no weight decay
    buffer,       // checkpointed state (BN running stats), never trained
};

struct ParamRef {
    std::string name;
    Tensor* tensor;
    ParamRole role;
};

using ParamList = std::vector<ParamRef>;

inline bool trainable(ParamRole r) { return r != ParamRole::buffer; }

// Places parameter tensors on a tape for one forward pass and remembers which
// Var each one became, so gradients can be routed back after backward().
class Binder {
public:
    explicit Binder(Tape& tape) : tape_(tape) {}

    // Frozen tensors are bound as constants and receive no gradient.
    void freeze(const Tensor* t) { frozen_.insert(t); }
    bool is_frozen(const Tensor* t) const { return frozen_.count(t) != 0; }

    Var operator()(Tensor& param);
    Var input(const Tensor& value) { return tape_.constant(value); }

    Tape& tape() noexcept { return tape_; }
    const std::vector<std::pair<Tensor*, Var>>& bindings() const noexcept { return bindings_; }
    // Binding of a parameter in this pass, if any.
    const Var* find(const Tensor* t) const;

private:
    Tape& tape_;
    std::unordered_set<const Tensor*> frozen_;
    std::vector<std::pair<Tensor*, Var>> bindings_;
};

// Kaiming-uniform: U(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

std::size_t total_elements(const ParamList& params, bool trainable_only);

}  // namespace quic
