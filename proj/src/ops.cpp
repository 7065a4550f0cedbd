#include "quic/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "quic/error.hpp"
#include "quic/kernels.hpp"

namespace quic::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape()));
    }
}

[[noreturn]] void mismatch(const char* what, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary op, const char* what) {
    const auto& k = kernels::active();
    if (a.same_shape(b)) {
        Tensor out(a.shape());
        switch (op) {
            case Binary::add: k.add(a.numel(), a.ptr(), b.ptr(), out.ptr()); break;
            case Binary::sub: k.sub(a.numel(), a.ptr(), b.ptr(), out.ptr()); break;
            case Binary::mul: k.mul(a.numel(), a.ptr(), b.ptr(), out.ptr()); break;
        }
        return out;
    }
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    if (!a_scalar && !b_scalar) mismatch(what, a, b);
    const Tensor& big = b_scalar ? a : b;
    const float s = b_scalar ? b[0] : a[0];
    Tensor out(big.shape());
    for (std::size_t i = 0; i < big.numel(); ++i) {
        const float x = b_scalar ? big[i] : s;
        const float y = b_scalar ? s : big[i];
        switch (op) {
            case Binary::add: out[i] = x + y; break;
            case Binary::sub: out[i] = x - y; break;
            case Binary::mul: out[i] = x * y; break;
        }
    }
    return out;
}

struct Conv2dDims {
    std::size_t batch, cin, h, w, cout, kh, kw, oh, ow;
};

Conv2dDims conv_dims(const Shape& x, const Shape& w, Conv2dGeometry geo) {
    if (x.size() != 4 || w.size() != 4) {
        throw DimensionError("conv2d expects x[B x Cin x H x W] and w[Cout x Cin x kh x kw], got " + shape_str(x) +
                             " and " + shape_str(w));
    }
    if (x[1] != w[1]) throw DimensionError("conv2d channel mismatch " + shape_str(x) + " vs " + shape_str(w));
    if (geo.stride == 0) throw DimensionError("conv2d stride must be >= 1");
    const std::size_t ph = x[2] + 2 * geo.padding;
    const std::size_t pw = x[3] + 2 * geo.padding;
    if (w[2] > ph || w[3] > pw) {
        throw DimensionError("conv2d kernel " + shape_str(w) + " exceeds padded input " + shape_str(x));
    }
    return {x[0], x[1], x[2], x[3], w[0], w[2], w[3], (ph - w[2]) / geo.stride + 1, (pw - w[3]) / geo.stride + 1};
}

// cols[(c*kh+i)*kw+j][oy*ow+ox] for one sample.
void im2col(const float* x, const Conv2dDims& d, Conv2dGeometry geo, float* cols) {
    const std::size_t hw = d.oh * d.ow;
    for (std::size_t c = 0; c < d.cin; ++c) {
        for (std::size_t i = 0; i < d.kh; ++i) {
            for (std::size_t j = 0; j < d.kw; ++j) {
                float* row = cols + ((c * d.kh + i) * d.kw + j) * hw;
                for (std::size_t oy = 0; oy < d.oh; ++oy) {
                    const long iy = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.padding);
                    for (std::size_t ox = 0; ox < d.ow; ++ox) {
                        const long ix = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(d.h) &&
                                            ix < static_cast<long>(d.w);
                        row[oy * d.ow + ox] =
                            inside ? x[(c * d.h + static_cast<std::size_t>(iy)) * d.w + static_cast<std::size_t>(ix)]
                                   : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* cols, const Conv2dDims& d, Conv2dGeometry geo, float* x) {
    const std::size_t hw = d.oh * d.ow;
    for (std::size_t c = 0; c < d.cin; ++c) {
        for (std::size_t i = 0; i < d.kh; ++i) {
            for (std::size_t j = 0; j < d.kw; ++j) {
                const float* row = cols + ((c * d.kh + i) * d.kw + j) * hw;
                for (std::size_t oy = 0; oy < d.oh; ++oy) {
                    const long iy = static_cast<long>(oy * geo.stride + i) - static_cast<long>(geo.padding);
                    if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                    for (std::size_t ox = 0; ox < d.ow; ++ox) {
                        const long ix = static_cast<long>(ox * geo.stride + j) - static_cast<long>(geo.padding);
                        if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
                        x[(c * d.h + static_cast<std::size_t>(iy)) * d.w + static_cast<std::size_t>(ix)] +=
                            row[oy * d.ow + ox];
                    }
                }
            }
        }
    }
}

void check_qf(const Tensor& z, const Tensor& m, const char* what) {
    require_rank(z, 2, what);
    require_rank(m, 3, what);
    if (m.dim(1) != z.dim(1) || m.dim(2) != z.dim(1)) mismatch(what, z, m);
}

}  // namespace

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
             std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
    const auto& kt = kernels::active();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double base = accumulate ? static_cast<double>(c[i * ldc + j]) : 0.0;
            c[i * ldc + j] = static_cast<float>(base + kt.dot(k, a + i * lda, b + j * ldb));
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    if (a.dim(1) != b.dim(0)) mismatch("matmul", a, b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    kernels::active().gemm(m, n, k, a.ptr(), k, b.ptr(), n, out.ptr(), n, false);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    if (a.dim(1) != b.dim(1)) mismatch("matmul_nt", a, b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out({m, n});
    gemm_nt(m, n, k, a.ptr(), k, b.ptr(), k, out.ptr(), n, false);
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_tn");
    require_rank(b, 2, "matmul_tn");
    if (a.dim(0) != b.dim(0)) mismatch("matmul_tn", a, b);
    return matmul(transpose2d(a), b);
}

Tensor transpose2d(const Tensor& a) {
    require_rank(a, 2, "transpose2d");
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor scale(const Tensor& a, float s) {
    Tensor out(a.shape());
    kernels::active().scale(a.numel(), s, a.ptr(), out.ptr());
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape());
    kernels::active().relu(x.numel(), x.ptr(), out.ptr());
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad) {
    if (!x.same_shape(grad)) mismatch("relu_backward", x, grad);
    Tensor out(x.shape());
    kernels::active().relu_backward(x.numel(), x.ptr(), grad.ptr(), out.ptr());
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        out[i] = static_cast<float>(s);
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() == 0 || bias.rank() != 1 || x.shape().back() != bias.dim(0)) mismatch("add_bias", x, bias);
    const std::size_t n = bias.dim(0);
    Tensor out(x.shape());
    const auto& k = kernels::active();
    for (std::size_t off = 0; off < x.numel(); off += n) k.add(n, x.ptr() + off, bias.ptr(), out.ptr() + off);
    return out;
}

Tensor sum_to_bias(const Tensor& g, std::size_t n) {
    if (g.rank() == 0 || g.shape().back() != n) {
        throw DimensionError("sum_to_bias: trailing axis of " + shape_str(g.shape()) + " is not " + std::to_string(n));
    }
    const std::size_t rows = g.numel() / n;
    Tensor out({n});
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < rows; ++r) s += g[r * n + j];
        out[j] = static_cast<float>(s);
    }
    return out;
}

namespace {

Tensor reduce(const Tensor& x, std::optional<std::size_t> axis, bool take_mean) {
    if (!axis) {
        const double s = kernels::active().sum(x.numel(), x.ptr());
        return Tensor::scalar(static_cast<float>(take_mean ? s / static_cast<double>(x.numel()) : s));
    }
    if (*axis >= x.rank()) {
        throw DimensionError("reduce axis " + std::to_string(*axis) + " out of range for " + shape_str(x.shape()));
    }
    const auto& shape = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < *axis; ++i) outer *= shape[i];
    for (std::size_t i = *axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t n = shape[*axis];
    Shape out_shape;
    for (std::size_t i = 0; i < shape.size(); ++i)
        if (i != *axis) out_shape.push_back(shape[i]);
    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += x[(o * n + r) * inner + in];
            out[o * inner + in] = static_cast<float>(take_mean ? s / static_cast<double>(n) : s);
        }
    }
    return out;
}

}  // namespace

Tensor sum(const Tensor& x, std::optional<std::size_t> axis) { return reduce(x, axis, false); }
Tensor mean(const Tensor& x, std::optional<std::size_t> axis) { return reduce(x, axis, true); }

Tensor expand_reduced(const Tensor& g, const Shape& shape, std::optional<std::size_t> axis, float factor) {
    Tensor out(shape);
    if (!axis) {
        const float v = g.item() * factor;
        for (auto& e : out.data()) e = v;
        return out;
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < *axis; ++i) outer *= shape[i];
    for (std::size_t i = *axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t n = shape[*axis];
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t in = 0; in < inner; ++in) out[(o * n + r) * inner + in] = g[o * inner + in] * factor;
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, Conv2dGeometry geo) {
    const auto d = conv_dims(x.shape(), w.shape(), geo);
    if (bias && (bias->rank() != 1 || bias->dim(0) != d.cout)) mismatch("conv2d bias", w, *bias);
    const std::size_t patch = d.cin * d.kh * d.kw;
    const std::size_t hw = d.oh * d.ow;
    Tensor out({d.batch, d.cout, d.oh, d.ow});
    TrackedVector<float> cols(patch * hw);
    const auto& k = kernels::active();
    for (std::size_t b = 0; b < d.batch; ++b) {
        im2col(x.ptr() + b * d.cin * d.h * d.w, d, geo, cols.data());
        float* ob = out.ptr() + b * d.cout * hw;
        k.gemm(d.cout, hw, patch, w.ptr(), patch, cols.data(), hw, ob, hw, false);
        if (bias) {
            for (std::size_t c = 0; c < d.cout; ++c) {
                const float bv = (*bias)[c];
                for (std::size_t p = 0; p < hw; ++p) ob[c * hw + p] += bv;
            }
        }
    }
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad, const Tensor& w, const Shape& x_shape, Conv2dGeometry geo) {
    const auto d = conv_dims(x_shape, w.shape(), geo);
    const std::size_t patch = d.cin * d.kh * d.kw;
    const std::size_t hw = d.oh * d.ow;
    const Tensor wt = transpose2d(w.reshaped({d.cout, patch}));  // [patch x cout]
    Tensor dx(x_shape);
    TrackedVector<float> cols(patch * hw);
    const auto& k = kernels::active();
    for (std::size_t b = 0; b < d.batch; ++b) {
        k.gemm(patch, hw, d.cout, wt.ptr(), d.cout, grad.ptr() + b * d.cout * hw, hw, cols.data(), hw, false);
        col2im_add(cols.data(), d, geo, dx.ptr() + b * d.cin * d.h * d.w);
    }
    return dx;
}

Tensor conv2d_backward_weight(const Tensor& grad, const Tensor& x, const Shape& w_shape, Conv2dGeometry geo) {
    const auto d = conv_dims(x.shape(), w_shape, geo);
    const std::size_t patch = d.cin * d.kh * d.kw;
    const std::size_t hw = d.oh * d.ow;
    Tensor dw(w_shape);
    TrackedVector<float> cols(patch * hw);
    for (std::size_t b = 0; b < d.batch; ++b) {
        im2col(x.ptr() + b * d.cin * d.h * d.w, d, geo, cols.data());
        gemm_nt(d.cout, patch, hw, grad.ptr() + b * d.cout * hw, hw, cols.data(), hw, dw.ptr(), patch, b > 0);
    }
    return dw;
}

Tensor conv2d_backward_bias(const Tensor& grad) {
    require_rank(grad, 4, "conv2d_backward_bias");
    const std::size_t batch = grad.dim(0), c = grad.dim(1), hw = grad.dim(2) * grad.dim(3);
    Tensor db({c});
    const auto& k = kernels::active();
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += k.sum(hw, grad.ptr() + (b * c + ch) * hw);
        db[ch] = static_cast<float>(s);
    }
    return db;
}

MaxPoolResult max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
    require_rank(x, 4, "max_pool2d");
    if (window == 0 || stride == 0) throw DimensionError("max_pool2d window and stride must be >= 1");
    const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    if (window > h || window > w) {
        throw DimensionError("max_pool2d window " + std::to_string(window) + " exceeds spatial dims of " +
                             shape_str(x.shape()));
    }
    const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
    MaxPoolResult r{Tensor({x.dim(0), x.dim(1), oh, ow}), {}};
    r.argmax.resize(r.out.numel());
    for (std::size_t p = 0; p < bc; ++p) {
        const float* src = x.ptr() + p * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * stride) * w + ox * stride;
                float best_v = src[best];
                for (std::size_t i = 0; i < window; ++i) {
                    for (std::size_t j = 0; j < window; ++j) {
                        const std::size_t idx = (oy * stride + i) * w + ox * stride + j;
                        if (src[idx] > best_v) {
                            best_v = src[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (p * oh + oy) * ow + ox;
                r.out[o] = best_v;
                r.argmax[o] = static_cast<std::uint32_t>(p * h * w + best);
            }
        }
    }
    return r;
}

Tensor max_pool2d_backward(const Tensor& grad, std::span<const std::uint32_t> argmax, const Shape& x_shape) {
    if (grad.numel() != argmax.size()) throw DimensionError("max_pool2d_backward: argmax/grad size mismatch");
    Tensor dx(x_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += grad[i];
    return dx;
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor out({b, c});
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < b * c; ++i) {
        out[i] = static_cast<float>(k.sum(hw, x.ptr() + i * hw) / static_cast<double>(hw));
    }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& grad, const Shape& x_shape) {
    Tensor dx(x_shape);
    const std::size_t hw = x_shape[2] * x_shape[3];
    const double inv = 1.0 / static_cast<double>(hw);
    for (std::size_t i = 0; i < grad.numel(); ++i) {
        const float v = static_cast<float>(grad[i] * inv);
        for (std::size_t p = 0; p < hw; ++p) dx[i * hw + p] = v;
    }
    return dx;
}

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
    require_rank(x, 4, "scale_channels");
    require_rank(gate, 2, "scale_channels");
    if (gate.dim(0) != x.dim(0) || gate.dim(1) != x.dim(1)) mismatch("scale_channels", x, gate);
    const std::size_t hw = x.dim(2) * x.dim(3);
    Tensor out(x.shape());
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < gate.numel(); ++i) k.scale(hw, gate[i], x.ptr() + i * hw, out.ptr() + i * hw);
    return out;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "softmax_cross_entropy");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != batch) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                             shape_str(logits.shape()));
    }
    SoftmaxCrossEntropy r{0.0f, Tensor({batch, classes})};
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw DataError("label " + std::to_string(y) + " at batch index " + std::to_string(b) +
                            " outside [0, " + std::to_string(classes) + ")");
        }
        const float* row = logits.ptr() + b * classes;
        double mx = row[0];
        for (std::size_t k = 1; k < classes; ++k) mx = std::max(mx, static_cast<double>(row[k]));
        double z = 0.0;
        for (std::size_t k = 0; k < classes; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
        const double log_z = std::log(z) + mx;
        total += log_z - static_cast<double>(row[y]);
        for (std::size_t k = 0; k < classes; ++k) {
            r.probs[b * classes + k] = static_cast<float>(std::exp(static_cast<double>(row[k]) - log_z));
        }
    }
    r.loss = static_cast<float>(total / static_cast<double>(batch));
    return r;
}

BatchNormForward batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    require_rank(x, 2, "batch_norm_1d");
    const std::size_t batch = x.dim(0), n = x.dim(1);
    if (gamma.numel() != n || beta.numel() != n) mismatch("batch_norm_1d affine", x, gamma);
    BatchNormForward f{Tensor(x.shape()), std::vector<double>(batch * n), std::vector<double>(n),
                       std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b) s += x[b * n + j];
        const double mu = s / static_cast<double>(batch);
        double v = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double d = static_cast<double>(x[b * n + j]) - mu;
            v += d * d;
        }
        v /= static_cast<double>(batch);
        const double inv = 1.0 / std::sqrt(v + static_cast<double>(eps));
        f.mean[j] = mu;
        f.variance[j] = v;
        f.inv_std[j] = inv;
        for (std::size_t b = 0; b < batch; ++b) {
            const double xh = (static_cast<double>(x[b * n + j]) - mu) * inv;
            f.xhat[b * n + j] = xh;
            f.out[b * n + j] = static_cast<float>(xh * gamma[j] + beta[j]);
        }
    }
    return f;
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, float eps) {
    require_rank(x, 2, "batch_norm_1d");
    const std::size_t batch = x.dim(0), n = x.dim(1);
    if (gamma.numel() != n || running_mean.numel() != n) mismatch("batch_norm_1d state", x, running_mean);
    Tensor out(x.shape());
    for (std::size_t j = 0; j < n; ++j) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[j]) + static_cast<double>(eps));
        const double a = gamma[j] * inv;
        const double c = beta[j] - running_mean[j] * a;
        for (std::size_t b = 0; b < batch; ++b) out[b * n + j] = static_cast<float>(x[b * n + j] * a + c);
    }
    return out;
}

BatchNormGrads batch_norm_train_backward(const Tensor& grad, const BatchNormForward& fwd, const Tensor& gamma) {
    const std::size_t batch = grad.dim(0), n = grad.dim(1);
    BatchNormGrads g{Tensor(grad.shape()), Tensor({n}), Tensor({n})};
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t j = 0; j < n; ++j) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double gv = grad[b * n + j];
            sum_g += gv;
            sum_gx += gv * fwd.xhat[b * n + j];
        }
        g.dbeta[j] = static_cast<float>(sum_g);
        g.dgamma[j] = static_cast<float>(sum_gx);
        const double scale = gamma[j] * fwd.inv_std[j];
        for (std::size_t b = 0; b < batch; ++b) {
            const double gv = grad[b * n + j];
            const double xh = fwd.xhat[b * n + j];
            g.dx[b * n + j] = static_cast<float>(scale * (gv - sum_g * inv_b - xh * sum_gx * inv_b));
        }
    }
    return g;
}

Tensor l2_normalize_rows(const Tensor& z, float eps) {
    require_rank(z, 2, "l2_normalize_rows");
    const std::size_t batch = z.dim(0), c = z.dim(1);
    Tensor out(z.shape());
    const auto& k = kernels::active();
    for (std::size_t b = 0; b < batch; ++b) {
        const float* row = z.ptr() + b * c;
        const double inv = 1.0 / std::sqrt(k.dot(c, row, row) + static_cast<double>(eps));
        for (std::size_t j = 0; j < c; ++j) out[b * c + j] = static_cast<float>(row[j] * inv);
    }
    return out;
}

Tensor l2_normalize_rows_backward(const Tensor& grad, const Tensor& z, float eps) {
    const std::size_t batch = z.dim(0), c = z.dim(1);
    Tensor dz(z.shape());
    const auto& k = kernels::active();
    for (std::size_t b = 0; b < batch; ++b) {
        const float* row = z.ptr() + b * c;
        const float* g = grad.ptr() + b * c;
        const double norm2 = k.dot(c, row, row) + static_cast<double>(eps);
        const double inv = 1.0 / std::sqrt(norm2);
        const double gz = k.dot(c, g, row);
        for (std::size_t j = 0; j < c; ++j) {
            dz[b * c + j] = static_cast<float>(inv * (g[j] - row[j] * gz / norm2));
        }
    }
    return dz;
}

Tensor symmetrize(const Tensor& a) {
    require_rank(a, 3, "symmetrize");
    const std::size_t classes = a.dim(0), c = a.dim(1);
    if (a.dim(2) != c) throw DimensionError("symmetrize expects square slices, got " + shape_str(a.shape()));
    Tensor m(a.shape());
    for (std::size_t k = 0; k < classes; ++k) {
        const float* ak = a.ptr() + k * c * c;
        float* mk = m.ptr() + k * c * c;
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) mk[i * c + j] = 0.5f * (ak[i * c + j] + ak[j * c + i]);
    }
    return m;
}

namespace {

// Shared forward of both quadratic forms. `row_of(k, i, buf)` returns a
// pointer to row i of the effective matrix for class k.
template <typename RowFn>
Tensor quadratic_forward(const Tensor& z, std::size_t classes, RowFn row_of) {
    const std::size_t batch = z.dim(0), c = z.dim(1);
    const auto& kt = kernels::active();
    Tensor out({batch, classes});
    TrackedVector<double> t(batch * c);
    for (std::size_t k = 0; k < classes; ++k) {
        std::fill(t.begin(), t.end(), 0.0);
        for (std::size_t i = 0; i < c; ++i) {
            const float* row = row_of(k, i);
            for (std::size_t b = 0; b < batch; ++b) kt.axpy_acc(c, z[b * c + i], row, t.data() + b * c);
        }
        for (std::size_t b = 0; b < batch; ++b) {
            out[b * classes + k] = static_cast<float>(kt.dot_acc(c, z.ptr() + b * c, t.data() + b * c));
        }
    }
    return out;
}

// dM_k = sum_b g[b,k] z_b z_b^T, one double row accumulator at a time.
Tensor outer_product_grad(const Tensor& grad, const Tensor& z, std::size_t classes) {
    const std::size_t batch = z.dim(0), c = z.dim(1);
    const auto& kt = kernels::active();
    Tensor dm({classes, c, c});
    TrackedVector<double> acc(c);
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < c; ++i) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (std::size_t b = 0; b < batch; ++b) {
                const double w = static_cast<double>(grad[b * classes + k]) * z[b * c + i];
                kt.axpy_acc(c, w, z.ptr() + b * c, acc.data());
            }
            float* dst = dm.ptr() + (k * c + i) * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] = static_cast<float>(acc[j]);
        }
    }
    return dm;
}

}  // namespace

Tensor quadratic_form(const Tensor& z, const Tensor& m) {
    check_qf(z, m, "quadratic_form");
    const std::size_t c = z.dim(1);
    return quadratic_forward(z, m.dim(0), [&](std::size_t k, std::size_t i) { return m.ptr() + (k * c + i) * c; });
}

QuadraticFormGrads quadratic_form_backward(const Tensor& grad, const Tensor& z, const Tensor& m) {
    check_qf(z, m, "quadratic_form");
    const std::size_t batch = z.dim(0), c = z.dim(1), classes = m.dim(0);
    const auto& kt = kernels::active();
    QuadraticFormGrads g{Tensor(z.shape()), outer_product_grad(grad, z, classes)};
    // dz_b = sum_k g[b,k] (M_k + M_k^T) z_b
    TrackedVector<double> acc(batch * c, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
        const float* mk = m.ptr() + k * c * c;
        for (std::size_t b = 0; b < batch; ++b) {
            const double gk = grad[b * classes + k];
            const float* zb = z.ptr() + b * c;
            double* ab = acc.data() + b * c;
            for (std::size_t i = 0; i < c; ++i) {
                // (M^T z)_j accumulates row i scaled by z_i; (M z)_i is the row dot.
                kt.axpy_acc(c, gk * zb[i], mk + i * c, ab);
                ab[i] += gk * kt.dot(c, mk + i * c, zb);
            }
        }
    }
    for (std::size_t i = 0; i < batch * c; ++i) g.dz[i] = static_cast<float>(acc[i]);
    return g;
}

Tensor symmetric_quadratic_form(const Tensor& z, const Tensor& a) {
    check_qf(z, a, "symmetric_quadratic_form");
    const std::size_t c = z.dim(1);
    TrackedVector<float> row(c);
    return quadratic_forward(z, a.dim(0), [&](std::size_t k, std::size_t i) {
        const float* ak = a.ptr() + k * c * c;
        for (std::size_t j = 0; j < c; ++j) row[j] = 0.5f * (ak[i * c + j] + ak[j * c + i]);
        return static_cast<const float*>(row.data());
    });
}

QuadraticFormGrads symmetric_quadratic_form_backward(const Tensor& grad, const Tensor& z, const Tensor& a) {
    check_qf(z, a, "symmetric_quadratic_form");
    const std::size_t batch = z.dim(0), c = z.dim(1), classes = a.dim(0);
    const auto& kt = kernels::active();
    // The adjoint of symmetrization is symmetrization, and sum_b g z z^T is
    // already symmetric, so dA_k is the plain outer-product sum.
    QuadraticFormGrads g{Tensor(z.shape()), outer_product_grad(grad, z, classes)};
    TrackedVector<double> acc(batch * c, 0.0);
    TrackedVector<float> row(c);
    for (std::size_t k = 0; k < classes; ++k) {
        const float* ak = a.ptr() + k * c * c;
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) row[j] = 0.5f * (ak[i * c + j] + ak[j * c + i]);
            for (std::size_t b = 0; b < batch; ++b) {
                const double w = 2.0 * static_cast<double>(grad[b * classes + k]) * z[b * c + i];
                kt.axpy_acc(c, w, row.data(), acc.data() + b * c);
            }
        }
    }
    for (std::size_t i = 0; i < batch * c; ++i) g.dz[i] = static_cast<float>(acc[i]);
    return g;
}

Tensor bilinear_descriptor(const Tensor& z, std::size_t max_elements) {
    require_rank(z, 2, "bilinear_descriptor");
    const std::size_t batch = z.dim(0), c = z.dim(1);
    const std::size_t total = batch * c * c;
    if (total > max_elements) {
        throw ResourceError("bilinear descriptor of " + std::to_string(total) + " elements exceeds cap of " +
                            std::to_string(max_elements));
    }
    Tensor d({batch, c * c});
    for (std::size_t b = 0; b < batch; ++b) {
        const float* zb = z.ptr() + b * c;
        float* db = d.ptr() + b * c * c;
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) db[i * c + j] = zb[i] * zb[j];
    }
    return d;
}

Tensor bilinear_descriptor_backward(const Tensor& grad, const Tensor& z) {
    // d/dz_i of sum_pq G_pq z_p z_q = sum_q (G_iq + G_qi) z_q
    const std::size_t batch = z.dim(0), c = z.dim(1);
    const auto& kt = kernels::active();
    Tensor dz(z.shape());
    TrackedVector<double> acc(c);
    for (std::size_t b = 0; b < batch; ++b) {
        const float* zb = z.ptr() + b * c;
        const float* gb = grad.ptr() + b * c * c;
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < c; ++i) {
            kt.axpy_acc(c, zb[i], gb + i * c, acc.data());  // sum_p G_pj z_p
            acc[i] += kt.dot(c, gb + i * c, zb);            // sum_q G_iq z_q
        }
        for (std::size_t j = 0; j < c; ++j) dz[b * c + j] = static_cast<float>(acc[j]);
    }
    return dz;
}

bool all_finite(const Tensor& t) noexcept {
    for (float v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace quic::ops
