#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vaesynth/dataio/pgm.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/tensor.hpp"

namespace vaesynth::synthgen {

using dataio::GrayImage;
using numcore::Tensor;

namespace detail {

// weights[o] lists (source index, fraction of output cell o covered by it).
inline std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src, std::size_t dst) {
    std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t o = 0; o < dst; ++o) {
        const double lo = static_cast<double>(o) * scale;
        const double hi = static_cast<double>(o + 1) * scale;
        const auto first = static_cast<std::size_t>(std::floor(lo));
        const auto last = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
        for (std::size_t i = first; i < last; ++i) {
            const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
            if (overlap > 0.0) w[o].emplace_back(i, overlap / scale);
        }
    }
    return w;
}

}  // namespace detail

/// Area-averaged resize to target x target, scaled to [0, 1]. Returns [1, 1, target, target].
template <typename T = float>
Tensor<T> preprocess_image(const GrayImage& raw, std::size_t target_side) {
    if (raw.width == 0 || raw.height == 0 || raw.pixels.empty()) {
        throw ValidationError("preprocess_image: zero-dimension image");
    }
    if (target_side == 0) throw ValidationError("preprocess_image: target side must be positive");
    Tensor<T> out({1, 1, target_side, target_side});
    if (raw.width == target_side && raw.height == target_side) {
        for (std::size_t i = 0; i < raw.pixels.size(); ++i) out[i] = static_cast<T>(raw.pixels[i] / 255.0);
        return out;
    }
    const auto wx = detail::area_weights(raw.width, target_side);
    const auto wy = detail::area_weights(raw.height, target_side);
    for (std::size_t oy = 0; oy < target_side; ++oy) {
        for (std::size_t ox = 0; ox < target_side; ++ox) {
            double acc = 0.0;
            for (const auto& [iy, fy] : wy[oy]) {
                for (const auto& [ix, fx] : wx[ox]) acc += fy * fx * raw.at(ix, iy);
            }
            out[oy * target_side + ox] = static_cast<T>(std::clamp(acc / 255.0, 0.0, 1.0));
        }
    }
    return out;
}

/// Quantizes a [.., S, S] single image tensor with values in [0, 1] to 8 bits.
template <typename T>
GrayImage to_gray(const Tensor<T>& img) {
    const std::size_t side_w = img.shape().back();
    const std::size_t side_h = img.numel() / side_w;
    GrayImage out(side_w, side_h);
    for (std::size_t i = 0; i < img.numel(); ++i) {
        const double v = std::clamp(static_cast<double>(img[i]), 0.0, 1.0);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

/// Stacks [1, 1, S, S] images into one [N, 1, S, S] batch.
template <typename T>
Tensor<T> stack_images(const std::vector<Tensor<T>>& images) {
    if (images.empty()) throw ValidationError("stack_images: no images");
    numcore::Shape shape = images.front().shape();
    const std::size_t per = images.front().numel();
    shape[0] = images.size();
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].numel() != per) throw ShapeError("stack_images: image sizes differ");
        std::copy(images[i].data().begin(), images[i].data().end(),
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

}  // namespace vaesynth::synthgen
