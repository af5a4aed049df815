#pragma once

#include <string>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/ops.hpp"
#include "vaesynth/numcore/param_set.hpp"
#include "vaesynth/numcore/tape.hpp"
#include "vaesynth/numcore/tensor.hpp"

namespace vaesynth::vae {

/// (1/N) * ||x - x'||^2 over every element of the batch.
template <typename T>
double reconstruction_loss(const numcore::Tensor<T>& x, const numcore::Tensor<T>& x_prime) {
    return static_cast<double>(
        numcore::op_forward<T>(numcore::OpKind::mean_square_diff, {&x, &x_prime}).item());
}

/// lambda * sum of param^2 over every parameter element.
template <typename T>
double weight_decay_loss(const numcore::ParamSet<T>& params, double lambda_wd) {
    if (lambda_wd < 0.0) throw ValidationError("weight decay coefficient must be >= 0");
    return lambda_wd * params.sum_squares();
}

/// Closed-form KL(N(mu, exp(logvar)) || N(0, I)), summed over latent dims and
/// averaged over the batch rows.
template <typename T>
double kld_gaussian(const numcore::Tensor<T>& mu, const numcore::Tensor<T>& logvar) {
    if (mu.numel() != logvar.numel()) {
        throw ShapeError("kld_gaussian: length mismatch " + numcore::shape_str(mu.shape()) + " vs " +
                         numcore::shape_str(logvar.shape()));
    }
    const auto lv = logvar.reshaped(mu.shape());
    return static_cast<double>(numcore::op_forward<T>(numcore::OpKind::kld_gaussian, {&mu, &lv}).item());
}

struct LossComponents {
    double reconstruction = 0.0;
    double weight_decay = 0.0;
    double kld = 0.0;
    double total = 0.0;
};

/// Objective weights shared by the loss evaluator and the trainer.
struct LossWeights {
    double lambda_wd = 1e-3;
    double beta_kld = 0.0;
};

/// total = reconstruction + weight_decay + beta_kld * kld. The KLD term needs the
/// latent parameters; without them it is reported as 0.
template <typename T>
LossComponents total_training_loss(const numcore::Tensor<T>& x, const numcore::Tensor<T>& x_prime,
                                   const numcore::ParamSet<T>& params, const LossWeights& w,
                                   const numcore::Tensor<T>* mu = nullptr,
                                   const numcore::Tensor<T>* logvar = nullptr) {
    if (w.beta_kld < 0.0) throw ValidationError("beta_kld must be >= 0");
    LossComponents c;
    c.reconstruction = reconstruction_loss(x, x_prime);
    c.weight_decay = weight_decay_loss(params, w.lambda_wd);
    if (mu != nullptr && logvar != nullptr) c.kld = kld_gaussian(*mu, *logvar);
    c.total = c.reconstruction + c.weight_decay + w.beta_kld * c.kld;
    return c;
}

/// Records lambda * sum(param^2) on a tape, one sum_square node per parameter.
template <typename T>
typename numcore::Tape<T>::Var weight_decay_graph(numcore::Tape<T>& tape, numcore::ParamSet<T>& params,
                                                  double lambda_wd) {
    using numcore::OpKind;
    std::optional<typename numcore::Tape<T>::Var> acc;
    for (auto& p : params) {
        const auto sq = tape.apply(OpKind::sum_square, {tape.parameter(p.value)});
        acc = acc ? tape.apply(OpKind::add, {*acc, sq}) : sq;
    }
    if (!acc) return tape.constant(numcore::Tensor<T>::scalar(T{0}));
    return tape.apply(OpKind::scale, {*acc}, numcore::OpAttrs{.alpha = lambda_wd});
}

}  // namespace vaesynth::vae
