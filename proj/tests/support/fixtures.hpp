#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "quic/rng.hpp"
#include "quic/tensor.hpp"

namespace fixtures {

// Integers over `denom` in [-range, range]: sums and halvings of these stay exact in float.
inline quic::Tensor dyadic_tensor(const quic::Shape& shape, quic::Rng& rng, int range = 16, int denom = 8) {
    quic::Tensor t(shape);
    for (auto& v : t.data()) {
        const int n = static_cast<int>(rng.index(static_cast<std::size_t>(2 * range + 1))) - range;
        v = static_cast<float>(n) / static_cast<float>(denom);
    }
    return t;
}

// S_k = -S_k^T for each class slice of a [K x C x C] tensor, dyadic entries.
inline quic::Tensor antisymmetric(std::size_t K, std::size_t C, quic::Rng& rng) {
    quic::Tensor s({K, C, C});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < C; ++i)
            for (std::size_t j = i + 1; j < C; ++j) {
                const float v = static_cast<float>(static_cast<int>(rng.index(33)) - 16) / 8.0f;
                s[(k * C + i) * C + j] = v;
                s[(k * C + j) * C + i] = -v;
            }
    return s;
}

inline double max_rel_diff(const quic::Tensor& a, const quic::Tensor& b, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = std::abs(static_cast<double>(a[i]) - b[i]);
        worst = std::max(worst, d / std::max({std::abs(static_cast<double>(a[i])), std::abs(static_cast<double>(b[i])), floor}));
    }
    return worst;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / "quic_tests" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace fixtures
