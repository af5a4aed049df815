#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/tensor.hpp"

namespace vaesynth::numcore {

/// The closed operator set. The first nine build the model; the rest cover latent
/// sampling, the KLD term, loss composition and the classifier head.
enum class OpKind {
    matmul,
    conv2d,
    upsample2x_nearest,
    add_bias,
    relu,
    sigmoid,
    reshape,
    mean_square_diff,
    sum_square,
    clamp,
    split_cols,
    reparameterize,
    kld_gaussian,
    add,
    scale,
    softmax_cross_entropy,
};

inline constexpr std::array<std::pair<OpKind, std::string_view>, 16> kOpNames{{
    {OpKind::matmul, "matmul"},
    {OpKind::conv2d, "conv2d"},
    {OpKind::upsample2x_nearest, "upsample2x_nearest"},
    {OpKind::add_bias, "add_bias"},
    {OpKind::relu, "relu"},
    {OpKind::sigmoid, "sigmoid"},
    {OpKind::reshape, "reshape"},
    {OpKind::mean_square_diff, "mean_square_diff"},
    {OpKind::sum_square, "sum_square"},
    {OpKind::clamp, "clamp"},
    {OpKind::split_cols, "split_cols"},
    {OpKind::reparameterize, "reparameterize"},
    {OpKind::kld_gaussian, "kld_gaussian"},
    {OpKind::add, "add"},
    {OpKind::scale, "scale"},
    {OpKind::softmax_cross_entropy, "softmax_cross_entropy"},
}};

inline std::string_view op_name(OpKind kind) {
    for (const auto& [k, name] : kOpNames) {
        if (k == kind) return name;
    }
    throw ValidationError("unknown operator kind " + std::to_string(static_cast<int>(kind)));
}

inline OpKind parse_op_kind(std::string_view name) {
    for (const auto& [k, n] : kOpNames) {
        if (n == name) return k;
    }
    throw ValidationError("unknown operator kind '" + std::string(name) + "'");
}

struct OpAttrs {
    std::size_t stride = 1;        // conv2d
    std::size_t pad = 0;           // conv2d
    Shape shape{};                 // reshape target
    double lo = 0.0, hi = 0.0;     // clamp
    std::size_t offset = 0;        // split_cols
    std::size_t count = 0;         // split_cols
    double alpha = 1.0;            // scale
    std::vector<std::size_t> labels{};  // softmax_cross_entropy targets, one per row
};

template <typename T>
using TensorRefs = std::vector<const Tensor<T>*>;

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

[[noreturn]] inline void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch between " + shape_str(a) + " and " +
                     shape_str(b));
}

inline void expect_arity(OpKind kind, std::size_t got, std::size_t want) {
    if (got != want) {
        throw ValidationError(std::string(op_name(kind)) + ": expected " + std::to_string(want) +
                              " inputs, got " + std::to_string(got));
    }
}

inline void expect_rank(std::string_view op, const Shape& s, std::size_t rank) {
    if (s.size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_str(s));
    }
}

struct ConvGeom {
    std::size_t batch, cin, h, w, cout, k, stride, pad, ho, wo;
};

inline ConvGeom conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
    expect_rank("conv2d", x, 4);
    expect_rank("conv2d", w, 4);
    if (w[1] != x[1]) shape_mismatch("conv2d (input channels)", x, w);
    if (w[2] != w[3]) throw ShapeError("conv2d: kernel must be square, got " + shape_str(w));
    if (stride != 1 && stride != 2) throw ValidationError("conv2d: stride must be 1 or 2");
    const std::size_t k = w[2];
    if (x[2] + 2 * pad < k || x[3] + 2 * pad < k) {
        throw ShapeError("conv2d: input " + shape_str(x) + " smaller than kernel " + shape_str(w));
    }
    ConvGeom g{x[0], x[1], x[2], x[3], w[0], k, stride, pad, 0, 0};
    g.ho = (g.h + 2 * pad - k) / stride + 1;
    g.wo = (g.w + 2 * pad - k) / stride + 1;
    return g;
}

// cols is [cin*k*k, ho*wo] for one image.
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* cols) {
    const std::size_t plane = g.ho * g.wo;
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                T* row = cols + ((c * g.k + ky) * g.k + kx) * plane;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    T* out = row + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(out, out + g.wo, T{0});
                        continue;
                    }
                    const T* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        out[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                                      ? T{0}
                                      : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* img) {
    const std::size_t plane = g.ho * g.wo;
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const T* row = cols + ((c * g.k + ky) * g.k + kx) * plane;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    T* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const T* in = row + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) {
                            dst[static_cast<std::size_t>(ix)] += in[ox];
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
T sigmoid(T v) {
    return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
}

// Broadcast geometry for add_bias: x is [B, C, rest...], bias is [C].
inline std::pair<std::size_t, std::size_t> bias_geometry(const Shape& x, const Shape& b) {
    if (x.size() < 2 || b.size() != 1 || b[0] != x[1]) shape_mismatch("add_bias", x, b);
    std::size_t inner = 1;
    for (std::size_t i = 2; i < x.size(); ++i) inner *= x[i];
    return {x[0], inner};
}

}  // namespace detail

/// Forward evaluation of one operator. Throws ShapeError naming both shapes on mismatch.
template <typename T>
Tensor<T> op_forward(OpKind kind, const TensorRefs<T>& in, const OpAttrs& attrs = {}) {
    using namespace detail;
    switch (kind) {
        case OpKind::matmul: {
            expect_arity(kind, in.size(), 2);
            const auto& a = *in[0];
            const auto& b = *in[1];
            expect_rank("matmul", a.shape(), 2);
            expect_rank("matmul", b.shape(), 2);
            if (a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
            Tensor<T> out({a.dim(0), b.dim(1)});
            MapMat<T>(out.data().data(), a.dim(0), b.dim(1)).noalias() =
                CMapMat<T>(a.data().data(), a.dim(0), a.dim(1)) *
                CMapMat<T>(b.data().data(), b.dim(0), b.dim(1));
            return out;
        }
        case OpKind::conv2d: {
            expect_arity(kind, in.size(), 2);
            const auto& x = *in[0];
            const auto& w = *in[1];
            const auto g = conv_geometry(x.shape(), w.shape(), attrs.stride, attrs.pad);
            const std::size_t krows = g.cin * g.k * g.k;
            const std::size_t plane = g.ho * g.wo;
            Tensor<T> out({g.batch, g.cout, g.ho, g.wo});
            std::vector<T> cols(krows * plane);
            const CMapMat<T> wm(w.data().data(), g.cout, krows);
            for (std::size_t b = 0; b < g.batch; ++b) {
                im2col(x.data().data() + b * g.cin * g.h * g.w, g, cols.data());
                MapMat<T>(out.data().data() + b * g.cout * plane, g.cout, plane).noalias() =
                    wm * CMapMat<T>(cols.data(), krows, plane);
            }
            return out;
        }
        case OpKind::upsample2x_nearest: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_rank("upsample2x_nearest", x.shape(), 4);
            const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
            Tensor<T> out({x.dim(0), x.dim(1), 2 * h, 2 * w});
            for (std::size_t p = 0; p < planes; ++p) {
                const T* src = x.data().data() + p * h * w;
                T* dst = out.data().data() + p * 4 * h * w;
                for (std::size_t y = 0; y < 2 * h; ++y) {
                    for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                        dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
                    }
                }
            }
            return out;
        }
        case OpKind::add_bias: {
            expect_arity(kind, in.size(), 2);
            const auto& x = *in[0];
            const auto& b = *in[1];
            const auto [batch, inner] = bias_geometry(x.shape(), b.shape());
            Tensor<T> out = x;
            out.drop_grad();
            const std::size_t c = b.dim(0);
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    T* p = out.data().data() + (n * c + ch) * inner;
                    for (std::size_t i = 0; i < inner; ++i) p[i] += b[ch];
                }
            }
            return out;
        }
        case OpKind::relu:
        case OpKind::sigmoid:
        case OpKind::clamp:
        case OpKind::scale: {
            expect_arity(kind, in.size(), 1);
            Tensor<T> out(in[0]->shape());
            const auto src = in[0]->data();
            auto dst = out.data();
            const T lo = static_cast<T>(attrs.lo), hi = static_cast<T>(attrs.hi);
            const T alpha = static_cast<T>(attrs.alpha);
            for (std::size_t i = 0; i < src.size(); ++i) {
                const T v = src[i];
                switch (kind) {
                    case OpKind::relu: dst[i] = v > T{0} ? v : T{0}; break;
                    case OpKind::sigmoid: dst[i] = sigmoid(v); break;
                    case OpKind::clamp: dst[i] = std::min(std::max(v, lo), hi); break;
                    default: dst[i] = alpha * v; break;
                }
            }
            return out;
        }
        case OpKind::reshape: {
            expect_arity(kind, in.size(), 1);
            return in[0]->reshaped(attrs.shape);
        }
        case OpKind::mean_square_diff: {
            expect_arity(kind, in.size(), 2);
            if (in[0]->shape() != in[1]->shape()) {
                shape_mismatch("mean_square_diff", in[0]->shape(), in[1]->shape());
            }
            const auto a = in[0]->data();
            const auto b = in[1]->data();
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
                acc += d * d;
            }
            return Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(a.size())));
        }
        case OpKind::sum_square: {
            expect_arity(kind, in.size(), 1);
            double acc = 0.0;
            for (T v : in[0]->data()) acc += static_cast<double>(v) * static_cast<double>(v);
            return Tensor<T>::scalar(static_cast<T>(acc));
        }
        case OpKind::split_cols: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_rank("split_cols", x.shape(), 2);
            if (attrs.count == 0 || attrs.offset + attrs.count > x.dim(1)) {
                throw ShapeError("split_cols: columns [" + std::to_string(attrs.offset) + ", " +
                                 std::to_string(attrs.offset + attrs.count) + ") out of range for " +
                                 shape_str(x.shape()));
            }
            Tensor<T> out({x.dim(0), attrs.count});
            for (std::size_t r = 0; r < x.dim(0); ++r) {
                for (std::size_t c = 0; c < attrs.count; ++c) {
                    out[r * attrs.count + c] = x[r * x.dim(1) + attrs.offset + c];
                }
            }
            return out;
        }
        case OpKind::reparameterize: {
            expect_arity(kind, in.size(), 3);
            const auto& mu = *in[0];
            const auto& lv = *in[1];
            const auto& eps = *in[2];
            if (mu.shape() != lv.shape()) shape_mismatch("reparameterize", mu.shape(), lv.shape());
            if (mu.shape() != eps.shape()) shape_mismatch("reparameterize", mu.shape(), eps.shape());
            Tensor<T> out(mu.shape());
            for (std::size_t i = 0; i < mu.numel(); ++i) {
                out[i] = mu[i] + std::exp(T{0.5} * lv[i]) * eps[i];
            }
            return out;
        }
        case OpKind::kld_gaussian: {
            expect_arity(kind, in.size(), 2);
            const auto& mu = *in[0];
            const auto& lv = *in[1];
            if (mu.shape() != lv.shape()) shape_mismatch("kld_gaussian", mu.shape(), lv.shape());
            const std::size_t batch = mu.rank() == 2 ? mu.dim(0) : 1;
            double acc = 0.0;
            for (std::size_t i = 0; i < mu.numel(); ++i) {
                const double m = mu[i], l = lv[i];
                acc += -0.5 * (1.0 + l - m * m - std::exp(l));
            }
            return Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(batch)));
        }
        case OpKind::add: {
            expect_arity(kind, in.size(), 2);
            if (in[0]->shape() != in[1]->shape()) shape_mismatch("add", in[0]->shape(), in[1]->shape());
            Tensor<T> out(in[0]->shape());
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (*in[0])[i] + (*in[1])[i];
            return out;
        }
        case OpKind::softmax_cross_entropy: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_rank("softmax_cross_entropy", x.shape(), 2);
            const std::size_t rows = x.dim(0), k = x.dim(1);
            if (attrs.labels.size() != rows) {
                throw ShapeError("softmax_cross_entropy: " + std::to_string(attrs.labels.size()) +
                                 " labels for logits " + shape_str(x.shape()));
            }
            double acc = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                if (attrs.labels[r] >= k) throw ValidationError("softmax_cross_entropy: label out of range");
                const T* row = x.data().data() + r * k;
                const double mx = *std::max_element(row, row + k);
                double z = 0.0;
                for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
                acc += mx + std::log(z) - static_cast<double>(row[attrs.labels[r]]);
            }
            return Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(rows)));
        }
    }
    throw ValidationError("unknown operator kind " + std::to_string(static_cast<int>(kind)));
}

/// Gradients of the loss w.r.t. each input, given the gradient w.r.t. the output.
/// `output` may carry the cached forward result; it is recomputed when null.
template <typename T>
std::vector<Tensor<T>> op_backward(OpKind kind, const TensorRefs<T>& in, const OpAttrs& attrs,
                                   const Tensor<T>& upstream, const Tensor<T>* output = nullptr) {
    using namespace detail;
    Tensor<T> cached;
    if (output == nullptr && kind == OpKind::sigmoid) {
        cached = op_forward(kind, in, attrs);
        output = &cached;
    }
    const auto expect_upstream = [&](const Shape& want) {
        if (upstream.shape() != want) shape_mismatch(std::string(op_name(kind)) + " backward", want, upstream.shape());
    };

    switch (kind) {
        case OpKind::matmul: {
            expect_arity(kind, in.size(), 2);
            const auto& a = *in[0];
            const auto& b = *in[1];
            if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_mismatch("matmul", a.shape(), b.shape());
            expect_upstream({a.dim(0), b.dim(1)});
            const CMapMat<T> am(a.data().data(), a.dim(0), a.dim(1));
            const CMapMat<T> bm(b.data().data(), b.dim(0), b.dim(1));
            const CMapMat<T> gm(upstream.data().data(), a.dim(0), b.dim(1));
            Tensor<T> ga(a.shape()), gb(b.shape());
            MapMat<T>(ga.data().data(), a.dim(0), a.dim(1)).noalias() = gm * bm.transpose();
            MapMat<T>(gb.data().data(), b.dim(0), b.dim(1)).noalias() = am.transpose() * gm;
            return {std::move(ga), std::move(gb)};
        }
        case OpKind::conv2d: {
            expect_arity(kind, in.size(), 2);
            const auto& x = *in[0];
            const auto& w = *in[1];
            const auto g = conv_geometry(x.shape(), w.shape(), attrs.stride, attrs.pad);
            expect_upstream({g.batch, g.cout, g.ho, g.wo});
            const std::size_t krows = g.cin * g.k * g.k;
            const std::size_t plane = g.ho * g.wo;
            Tensor<T> gx(x.shape()), gw(w.shape());
            std::vector<T> cols(krows * plane), dcols(krows * plane);
            const CMapMat<T> wm(w.data().data(), g.cout, krows);
            MapMat<T> gwm(gw.data().data(), g.cout, krows);
            for (std::size_t b = 0; b < g.batch; ++b) {
                const CMapMat<T> gy(upstream.data().data() + b * g.cout * plane, g.cout, plane);
                im2col(x.data().data() + b * g.cin * g.h * g.w, g, cols.data());
                gwm.noalias() += gy * CMapMat<T>(cols.data(), krows, plane).transpose();
                MapMat<T>(dcols.data(), krows, plane).noalias() = wm.transpose() * gy;
                col2im_add(dcols.data(), g, gx.data().data() + b * g.cin * g.h * g.w);
            }
            return {std::move(gx), std::move(gw)};
        }
        case OpKind::upsample2x_nearest: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_rank("upsample2x_nearest", x.shape(), 4);
            const std::size_t h = x.dim(2), w = x.dim(3);
            expect_upstream({x.dim(0), x.dim(1), 2 * h, 2 * w});
            Tensor<T> gx(x.shape());
            for (std::size_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
                const T* src = upstream.data().data() + p * 4 * h * w;
                T* dst = gx.data().data() + p * h * w;
                for (std::size_t y = 0; y < 2 * h; ++y) {
                    for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[(y / 2) * w + xx / 2] += src[y * 2 * w + xx];
                }
            }
            return {std::move(gx)};
        }
        case OpKind::add_bias: {
            expect_arity(kind, in.size(), 2);
            const auto& x = *in[0];
            const auto& b = *in[1];
            const auto [batch, inner] = bias_geometry(x.shape(), b.shape());
            expect_upstream(x.shape());
            Tensor<T> gx = upstream;
            Tensor<T> gb(b.shape());
            const std::size_t c = b.dim(0);
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T* p = upstream.data().data() + (n * c + ch) * inner;
                    T s{0};
                    for (std::size_t i = 0; i < inner; ++i) s += p[i];
                    gb[ch] += s;
                }
            }
            return {std::move(gx), std::move(gb)};
        }
        case OpKind::relu:
        case OpKind::sigmoid:
        case OpKind::clamp:
        case OpKind::scale: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_upstream(x.shape());
            Tensor<T> gx(x.shape());
            const T lo = static_cast<T>(attrs.lo), hi = static_cast<T>(attrs.hi);
            for (std::size_t i = 0; i < x.numel(); ++i) {
                const T gup = upstream[i];
                switch (kind) {
                    case OpKind::relu: gx[i] = x[i] > T{0} ? gup : T{0}; break;
                    case OpKind::sigmoid: {
                        const T s = (*output)[i];
                        gx[i] = gup * s * (T{1} - s);
                        break;
                    }
                    case OpKind::clamp: gx[i] = (x[i] >= lo && x[i] <= hi) ? gup : T{0}; break;
                    default: gx[i] = static_cast<T>(attrs.alpha) * gup; break;
                }
            }
            return {std::move(gx)};
        }
        case OpKind::reshape: {
            expect_arity(kind, in.size(), 1);
            expect_upstream(attrs.shape);
            return {upstream.reshaped(in[0]->shape())};
        }
        case OpKind::mean_square_diff: {
            expect_arity(kind, in.size(), 2);
            const auto& a = *in[0];
            const auto& b = *in[1];
            if (a.shape() != b.shape()) shape_mismatch("mean_square_diff", a.shape(), b.shape());
            expect_upstream({1});
            const T scale = T{2} * upstream[0] / static_cast<T>(a.numel());
            Tensor<T> ga(a.shape()), gb(b.shape());
            for (std::size_t i = 0; i < a.numel(); ++i) {
                ga[i] = scale * (a[i] - b[i]);
                gb[i] = -ga[i];
            }
            return {std::move(ga), std::move(gb)};
        }
        case OpKind::sum_square: {
            expect_arity(kind, in.size(), 1);
            expect_upstream({1});
            Tensor<T> ga(in[0]->shape());
            for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] = T{2} * (*in[0])[i] * upstream[0];
            return {std::move(ga)};
        }
        case OpKind::split_cols: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_rank("split_cols", x.shape(), 2);
            expect_upstream({x.dim(0), attrs.count});
            Tensor<T> gx(x.shape());
            for (std::size_t r = 0; r < x.dim(0); ++r) {
                for (std::size_t c = 0; c < attrs.count; ++c) {
                    gx[r * x.dim(1) + attrs.offset + c] = upstream[r * attrs.count + c];
                }
            }
            return {std::move(gx)};
        }
        case OpKind::reparameterize: {
            expect_arity(kind, in.size(), 3);
            const auto& mu = *in[0];
            const auto& lv = *in[1];
            const auto& eps = *in[2];
            if (mu.shape() != lv.shape() || mu.shape() != eps.shape()) shape_mismatch("reparameterize", mu.shape(), lv.shape());
            expect_upstream(mu.shape());
            Tensor<T> gmu = upstream, glv(lv.shape()), geps(eps.shape());
            for (std::size_t i = 0; i < mu.numel(); ++i) {
                const T sigma = std::exp(T{0.5} * lv[i]);
                glv[i] = upstream[i] * T{0.5} * sigma * eps[i];
                geps[i] = upstream[i] * sigma;
            }
            return {std::move(gmu), std::move(glv), std::move(geps)};
        }
        case OpKind::kld_gaussian: {
            expect_arity(kind, in.size(), 2);
            const auto& mu = *in[0];
            const auto& lv = *in[1];
            if (mu.shape() != lv.shape()) shape_mismatch("kld_gaussian", mu.shape(), lv.shape());
            expect_upstream({1});
            const std::size_t batch = mu.rank() == 2 ? mu.dim(0) : 1;
            const T scale = upstream[0] / static_cast<T>(batch);
            Tensor<T> gmu(mu.shape()), glv(lv.shape());
            for (std::size_t i = 0; i < mu.numel(); ++i) {
                gmu[i] = scale * mu[i];
                glv[i] = scale * T{-0.5} * (T{1} - std::exp(lv[i]));
            }
            return {std::move(gmu), std::move(glv)};
        }
        case OpKind::add: {
            expect_arity(kind, in.size(), 2);
            if (in[0]->shape() != in[1]->shape()) shape_mismatch("add", in[0]->shape(), in[1]->shape());
            expect_upstream(in[0]->shape());
            return {upstream, upstream};
        }
        case OpKind::softmax_cross_entropy: {
            expect_arity(kind, in.size(), 1);
            const auto& x = *in[0];
            expect_rank("softmax_cross_entropy", x.shape(), 2);
            expect_upstream({1});
            const std::size_t rows = x.dim(0), k = x.dim(1);
            Tensor<T> gx(x.shape());
            const double scale = static_cast<double>(upstream[0]) / static_cast<double>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* row = x.data().data() + r * k;
                const double mx = *std::max_element(row, row + k);
                double z = 0.0;
                for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
                for (std::size_t c = 0; c < k; ++c) {
                    const double p = std::exp(static_cast<double>(row[c]) - mx) / z;
                    gx[r * k + c] = static_cast<T>(scale * (p - (c == attrs.labels[r] ? 1.0 : 0.0)));
                }
            }
            return {std::move(gx)};
        }
    }
    throw ValidationError("unknown operator kind " + std::to_string(static_cast<int>(kind)));
}

}  // namespace vaesynth::numcore
