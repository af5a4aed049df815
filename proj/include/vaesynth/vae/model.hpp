#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/ops.hpp"
#include "vaesynth/numcore/param_set.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/numcore/tape.hpp"
#include "vaesynth/numcore/tensor.hpp"

namespace vaesynth::vae {

using numcore::OpAttrs;
using numcore::OpKind;
using numcore::ParamSet;
using numcore::Rng;
using numcore::Shape;
using numcore::Tape;
using numcore::Tensor;

/// 32-bit standard or 64-bit verification arithmetic.
enum class NumericMode : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr NumericMode mode_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? NumericMode::f32 : NumericMode::f64;
}

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

// Channel widths of the conv stacks.
inline constexpr std::size_t kEncC1 = 16;
inline constexpr std::size_t kEncC2 = 32;
inline constexpr std::size_t kDecC1 = 16;
inline constexpr std::size_t kDecC2 = 8;

/// Convolutional VAE on single-channel square images.
///
/// Encoder: conv 1->16 (3x3, s2, p1), ReLU, conv 16->32 (3x3, s2, p1), ReLU, flatten,
/// dense -> [mu | logvar]. Decoder: dense -> 32 x side/4 x side/4, ReLU, then twice
/// (upsample 2x, conv 3x3, ReLU), then a 1-channel 3x3 conv and a sigmoid.
template <typename T>
class VaeModel {
   public:
    VaeModel(std::size_t image_side, std::size_t latent_dim) : side_(image_side), latent_(latent_dim) {
        if (latent_dim == 0) throw ValidationError("latent_dim must be positive");
        if (image_side < 4 || image_side % 4 != 0) {
            throw ValidationError("image_side must be a positive multiple of 4, got " + std::to_string(image_side));
        }
        const std::size_t flat = flat_features();
        params_.add("enc.conv1.w", Tensor<T>({kEncC1, 1, 3, 3}));
        params_.add("enc.conv1.b", Tensor<T>({kEncC1}));
        params_.add("enc.conv2.w", Tensor<T>({kEncC2, kEncC1, 3, 3}));
        params_.add("enc.conv2.b", Tensor<T>({kEncC2}));
        params_.add("enc.fc.w", Tensor<T>({flat, 2 * latent_dim}));
        params_.add("enc.fc.b", Tensor<T>({2 * latent_dim}));
        params_.add("dec.fc.w", Tensor<T>({latent_dim, flat}));
        params_.add("dec.fc.b", Tensor<T>({flat}));
        params_.add("dec.conv1.w", Tensor<T>({kDecC1, kEncC2, 3, 3}));
        params_.add("dec.conv1.b", Tensor<T>({kDecC1}));
        params_.add("dec.conv2.w", Tensor<T>({kDecC2, kDecC1, 3, 3}));
        params_.add("dec.conv2.b", Tensor<T>({kDecC2}));
        params_.add("dec.out.w", Tensor<T>({1, kDecC2, 3, 3}));
        params_.add("dec.out.b", Tensor<T>({1}));
    }

    /// Uniform(+-1/sqrt(fan_in)) for every weight and bias, drawn from the "init" stream.
    static VaeModel initialized(std::size_t image_side, std::size_t latent_dim, std::uint64_t seed) {
        VaeModel m(image_side, latent_dim);
        Rng rng = Rng::stream(seed, "init");
        const auto fan_in_of = [&](const std::string& weight, const Tensor<T>& w) {
            // dense weights are [in, out]; conv weights are [out, in, k, k]
            return weight.find(".fc.") != std::string::npos ? w.dim(0) : w.dim(1) * w.dim(2) * w.dim(3);
        };
        std::size_t fan_in = 1;
        for (auto& p : m.params_) {
            const bool is_weight = p.name.back() == 'w';
            if (is_weight) fan_in = fan_in_of(p.name, p.value);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : p.value.data()) v = static_cast<T>(rng.uniform(-bound, bound));
        }
        return m;
    }

    std::size_t image_side() const noexcept { return side_; }
    std::size_t latent_dim() const noexcept { return latent_; }
    NumericMode mode() const noexcept { return mode_of<T>(); }
    std::size_t feature_side() const noexcept { return side_ / 4; }
    std::size_t flat_features() const noexcept { return kEncC2 * feature_side() * feature_side(); }

    ParamSet<T>& params() noexcept { return params_; }
    const ParamSet<T>& params() const noexcept { return params_; }

    struct EncodedVars {
        typename Tape<T>::Var mu;
        typename Tape<T>::Var logvar;  // clamped
    };

    /// Records the encoder on `tape` with trainable parameter leaves.
    /// `x` must hold a [B, 1, side, side] batch.
    EncodedVars encode_graph(Tape<T>& tape, typename Tape<T>::Var x) { return encode_impl(*this, tape, x); }
    EncodedVars encode_graph(Tape<T>& tape, typename Tape<T>::Var x) const { return encode_impl(*this, tape, x); }

    /// Records the decoder on `tape`. `z` must hold a [B, latent_dim] batch.
    typename Tape<T>::Var decode_graph(Tape<T>& tape, typename Tape<T>::Var z) { return decode_impl(*this, tape, z); }
    typename Tape<T>::Var decode_graph(Tape<T>& tape, typename Tape<T>::Var z) const {
        return decode_impl(*this, tape, z);
    }

    void check_images(const Shape& s) const {
        if (s.size() != 4 || s[1] != 1 || s[2] != side_ || s[3] != side_) {
            throw ShapeError("encode: expected image batch [B x 1 x " + std::to_string(side_) + " x " +
                             std::to_string(side_) + "], got " + numcore::shape_str(s));
        }
    }

   private:
    using Var = typename Tape<T>::Var;

    // Const models bind read-only leaves; mutable models bind trainable ones.
    template <typename Self>
    static Var leaf(Self& self, Tape<T>& tape, const char* name) {
        if constexpr (std::is_const_v<Self>) {
            return tape.reference(self.params_.at(name));
        } else {
            return tape.parameter(self.params_.at(name));
        }
    }

    template <typename Self>
    static EncodedVars encode_impl(Self& self, Tape<T>& tape, Var x) {
        self.check_images(tape.value(x).shape());
        const std::size_t batch = tape.value(x).dim(0);
        auto p = [&](const char* name) { return leaf(self, tape, name); };
        auto h = conv_block(tape, x, p("enc.conv1.w"), p("enc.conv1.b"), 2);
        h = conv_block(tape, h, p("enc.conv2.w"), p("enc.conv2.b"), 2);
        h = tape.apply(OpKind::reshape, {h}, OpAttrs{.shape = {batch, self.flat_features()}});
        h = tape.apply(OpKind::matmul, {h, p("enc.fc.w")});
        h = tape.apply(OpKind::add_bias, {h, p("enc.fc.b")});
        const std::size_t d = self.latent_;
        const auto mu = tape.apply(OpKind::split_cols, {h}, OpAttrs{.offset = 0, .count = d});
        auto lv = tape.apply(OpKind::split_cols, {h}, OpAttrs{.offset = d, .count = d});
        lv = tape.apply(OpKind::clamp, {lv}, OpAttrs{.lo = kLogvarMin, .hi = kLogvarMax});
        return {mu, lv};
    }

    template <typename Self>
    static Var decode_impl(Self& self, Tape<T>& tape, Var z) {
        const auto& zs = tape.value(z).shape();
        if (zs.size() != 2 || zs[1] != self.latent_) {
            throw ShapeError("decode: expected latent batch [B x " + std::to_string(self.latent_) + "], got " +
                             numcore::shape_str(zs));
        }
        const std::size_t batch = zs[0];
        const std::size_t fs = self.feature_side();
        auto p = [&](const char* name) { return leaf(self, tape, name); };
        auto h = tape.apply(OpKind::matmul, {z, p("dec.fc.w")});
        h = tape.apply(OpKind::add_bias, {h, p("dec.fc.b")});
        h = tape.apply(OpKind::relu, {h});
        h = tape.apply(OpKind::reshape, {h}, OpAttrs{.shape = {batch, kEncC2, fs, fs}});
        h = tape.apply(OpKind::upsample2x_nearest, {h});
        h = conv_block(tape, h, p("dec.conv1.w"), p("dec.conv1.b"), 1);
        h = tape.apply(OpKind::upsample2x_nearest, {h});
        h = conv_block(tape, h, p("dec.conv2.w"), p("dec.conv2.b"), 1);
        h = tape.apply(OpKind::conv2d, {h, p("dec.out.w")}, OpAttrs{.stride = 1, .pad = 1});
        h = tape.apply(OpKind::add_bias, {h, p("dec.out.b")});
        return tape.apply(OpKind::sigmoid, {h});
    }

    static Var conv_block(Tape<T>& tape, Var x, Var w, Var b, std::size_t stride) {
        auto h = tape.apply(OpKind::conv2d, {x, w}, OpAttrs{.stride = stride, .pad = 1});
        h = tape.apply(OpKind::add_bias, {h, b});
        return tape.apply(OpKind::relu, {h});
    }

    std::size_t side_;
    std::size_t latent_;
    ParamSet<T> params_;
};

/// Sampled latent code for a batch; eps is kept so the sample can be replayed.
template <typename T>
struct LatentCode {
    Tensor<T> mu;
    Tensor<T> logvar;
    Tensor<T> z;
    Tensor<T> eps;
};

/// Returns (mu, clamped logvar), each [B, d].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> encode(const VaeModel<T>& model, const Tensor<T>& x) {
    Tape<T> tape;
    const auto enc = model.encode_graph(tape, tape.reference(x));
    return {tape.value(enc.mu), tape.value(enc.logvar)};
}

/// Accepts [B, d] or a single [d] vector; returns [B, 1, side, side].
template <typename T>
Tensor<T> decode(const VaeModel<T>& model, const Tensor<T>& z) {
    Tape<T> tape;
    const auto zv = z.rank() == 1 ? tape.constant(z.reshaped({1, z.dim(0)})) : tape.reference(z);
    return tape.value(model.decode_graph(tape, zv));
}

template <typename T>
LatentCode<T> reparameterize_with(const Tensor<T>& mu, const Tensor<T>& logvar, Tensor<T> eps);

/// z = mu + exp(logvar / 2) * eps with eps drawn from `rng` in row-major order.
template <typename T>
LatentCode<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, Rng& rng) {
    if (mu.shape() != logvar.shape()) {
        throw ShapeError("reparameterize: mu " + numcore::shape_str(mu.shape()) + " vs logvar " +
                         numcore::shape_str(logvar.shape()));
    }
    Tensor<T> eps(mu.shape());
    rng.fill_normal(eps.data());
    return reparameterize_with(mu, logvar, std::move(eps));
}

/// Same formula with a caller-supplied noise draw.
template <typename T>
LatentCode<T> reparameterize_with(const Tensor<T>& mu, const Tensor<T>& logvar, Tensor<T> eps) {
    const OpAttrs clamp{.lo = kLogvarMin, .hi = kLogvarMax};
    Tensor<T> lv = numcore::op_forward<T>(OpKind::clamp, {&logvar}, clamp);
    Tensor<T> z = numcore::op_forward<T>(OpKind::reparameterize, {&mu, &lv, &eps});
    return {mu, std::move(lv), std::move(z), std::move(eps)};
}

}  // namespace vaesynth::vae
