#include "quic/params.hpp"

#include <cmath>

#include "quic/error.hpp"

namespace quic {

Var Binder::operator()(Tensor& param) {
    if (const Var* v = find(&param)) return *v;
    Var v = is_frozen(&param) ? tape_.constant(param) : tape_.variable(param);
    bindings_.emplace_back(&param, v);
    return v;
}

const Var* Binder::find(const Tensor* t) const {
    for (const auto& [p, v] : bindings_)
        if (p == t) return &v;
    return nullptr;
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    if (fan_in == 0) throw DimensionError("kaiming_uniform: fan_in must be positive");
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(stddev * rng.normal());
    return t;
}

std::size_t total_elements(const ParamList& params, bool trainable_only) {
    std::size_t n = 0;
    for (const auto& p : params)
        if (!trainable_only || trainable(p.role)) n += p.tensor->numel();
    return n;
}

}  // namespace quic
