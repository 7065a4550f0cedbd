#pragma once

// Binary logistic regression fitted by Newton's method in double precision.
// The log-loss is convex, so the fit is the best affine model in that sense.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "quic/data.hpp"

namespace oracle {

struct LogisticFit {
    std::vector<double> w;  // D weights followed by the bias
    double train_accuracy = 0.0;
    int iterations = 0;
};

inline std::vector<double> solve(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
        for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
        x[i] = s / a[i * n + i];
    }
    return x;
}

inline double score(const std::vector<double>& w, const float* x, std::size_t d) {
    double s = w[d];
    for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
    return s;
}

inline double accuracy(const std::vector<double>& w, const quic::Dataset& ds) {
    const std::size_t d = ds.inputs.numel() / ds.size();
    std::size_t hit = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int pred = score(w, ds.inputs.ptr() + i * d, d) > 0.0 ? 1 : 0;
        hit += pred == ds.labels[i];
    }
    return static_cast<double>(hit) / static_cast<double>(ds.size());
}

// ridge keeps the Hessian invertible when the data are separable.
inline LogisticFit fit_logistic(const quic::Dataset& ds, double ridge = 1e-6, int max_iter = 50) {
    const std::size_t n = ds.size(), d = ds.inputs.numel() / n, p = d + 1;
    std::vector<double> w(p, 0.0);
    LogisticFit fit;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> g(p, 0.0), h(p * p, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const float* x = ds.inputs.ptr() + i * d;
            const double mu = 1.0 / (1.0 + std::exp(-score(w, x, d)));
            const double r = mu - ds.labels[i];
            const double c = mu * (1.0 - mu);
            for (std::size_t a = 0; a < p; ++a) {
                const double xa = a < d ? x[a] : 1.0;
                g[a] += r * xa;
                for (std::size_t b = 0; b <= a; ++b) h[a * p + b] += c * xa * (b < d ? x[b] : 1.0);
            }
        }
        for (std::size_t a = 0; a < p; ++a) {
            g[a] = g[a] / static_cast<double>(n) + ridge * w[a];
            for (std::size_t b = 0; b <= a; ++b) {
                h[a * p + b] /= static_cast<double>(n);
                h[b * p + a] = h[a * p + b];
            }
            h[a * p + a] += ridge;
        }
        const auto step = solve(h, g, p);
        double norm = 0.0;
        for (std::size_t a = 0; a < p; ++a) {
            w[a] -= step[a];
            norm += step[a] * step[a];
        }
        fit.iterations = it + 1;
        if (std::sqrt(norm) < 1e-10) break;
    }
    fit.w = w;
    fit.train_accuracy = accuracy(w, ds);
    return fit;
}

}  // namespace oracle
