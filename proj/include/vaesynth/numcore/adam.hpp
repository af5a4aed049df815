#pragma once

#include <cmath>
#include <cstdint>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/param_set.hpp"

namespace vaesynth::numcore {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update at step t (1-based); gradients are zeroed afterwards.
template <typename T>
void adam_step(ParamSet<T>& params, const AdamConfig& cfg, std::uint64_t t) {
    if (t < 1) throw ValidationError("adam_step: step index must be >= 1");
    for (const auto& p : params) {
        if (!p.value.has_grad()) throw ValidationError("adam_step: parameter '" + p.name + "' has no gradient");
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
    for (auto& p : params) {
        auto w = p.value.data();
        auto g = p.value.grad();
        auto m = p.m.data();
        auto v = p.v.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            const T mhat = m[i] * inv_bc1;
            const T vhat = v[i] * inv_bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            g[i] = T{0};
        }
    }
}

}  // namespace vaesynth::numcore
