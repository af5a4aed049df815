#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/adam.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/numcore/tape.hpp"
#include "vaesynth/vae/losses.hpp"
#include "vaesynth/vae/model.hpp"

namespace vaesynth::vae {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 25;
    double learning_rate = 1e-3;
    double lambda_wd = 1e-3;
    double beta_kld = 1e-3;  // a small KLD term keeps q(z|x) wide enough to sample from
    std::uint64_t seed = 42;

    void validate() const {
        if (epochs < 1) throw ValidationError("epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate must be >= 0");
        if (!(lambda_wd >= 0.0)) throw ValidationError("lambda_wd must be >= 0");
        if (!(beta_kld >= 0.0)) throw ValidationError("beta_kld must be >= 0");
    }
    LossWeights weights() const { return {lambda_wd, beta_kld}; }
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double total = 0.0;
    double reconstruction = 0.0;
    double weight_decay = 0.0;
    double kld = 0.0;
};

using LossCurve = std::vector<EpochRecord>;

class TrainingDiverged : public std::runtime_error {
   public:
    TrainingDiverged(std::size_t epoch, std::size_t batch, double loss)
        : std::runtime_error("non-finite training loss " + std::to_string(loss) + " at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

   private:
    std::size_t epoch_, batch_;
};

/// Evaluation draws come from this stream unless the caller picks another seed.
inline constexpr std::uint64_t kEvalSeed = 0x5eed0e7a1ULL;

/// Copies the listed images of a [N, 1, S, S] dataset into a batch.
template <typename T>
Tensor<T> gather_batch(const Tensor<T>& data, std::span<const std::size_t> idx) {
    const std::size_t per = data.numel() / data.dim(0);
    Shape shape = data.shape();
    shape[0] = idx.size();
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(data.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

template <typename T>
struct ObjectiveVars {
    typename Tape<T>::Var total, reconstruction, weight_decay, kld;
};

/// Records encode -> reparameterize(eps) -> decode -> loss on `tape`.
/// The KLD node is always recorded; it joins the total only when beta_kld > 0.
template <typename T>
ObjectiveVars<T> objective_graph(Tape<T>& tape, VaeModel<T>& model, const Tensor<T>& x, const Tensor<T>& eps,
                                 const LossWeights& w) {
    const auto xv = tape.reference(x);
    const auto enc = model.encode_graph(tape, xv);
    const auto z = tape.apply(OpKind::reparameterize, {enc.mu, enc.logvar, tape.reference(eps)});
    const auto y = model.decode_graph(tape, z);
    const auto rec = tape.apply(OpKind::mean_square_diff, {y, xv});
    const auto wd = weight_decay_graph(tape, model.params(), w.lambda_wd);
    const auto kld = tape.apply(OpKind::kld_gaussian, {enc.mu, enc.logvar});
    auto total = tape.apply(OpKind::add, {rec, wd});
    if (w.beta_kld > 0.0) {
        total = tape.apply(OpKind::add, {total, tape.apply(OpKind::scale, {kld}, OpAttrs{.alpha = w.beta_kld})});
    }
    return {total, rec, wd, kld};
}

/// Minibatch Adam on the VAE objective. Deterministic for a fixed cfg.seed.
/// `on_epoch` (optional) sees each record as it completes.
template <typename T>
LossCurve train(VaeModel<T>& model, const Tensor<T>& data, const TrainConfig& cfg,
                const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (data.empty() || data.rank() != 4 || data.dim(0) == 0) {
        throw ValidationError("train: dataset must be a non-empty [N x 1 x S x S] batch");
    }
    model.check_images(data.shape());

    const std::size_t n = data.dim(0);
    Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
    Rng reparam_rng = Rng::stream(cfg.seed, "reparam");
    const numcore::AdamConfig adam{.lr = cfg.learning_rate};
    const LossWeights weights = cfg.weights();

    std::vector<std::size_t> order(n);
    std::uint64_t step = 0;
    LossCurve curve;
    model.params().zero_grad();
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(order);
        EpochRecord rec{.epoch = epoch};
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            const auto x = gather_batch(data, std::span<const std::size_t>(order).subspan(start, count));
            Tensor<T> eps({count, model.latent_dim()});
            reparam_rng.fill_normal(eps.data());

            Tape<T> tape;
            const auto vars = objective_graph(tape, model, x, eps, weights);
            const double total = tape.value(vars.total).item();
            if (!std::isfinite(total)) throw TrainingDiverged(epoch, batch_index, total);
            tape.backward(vars.total);
            numcore::adam_step(model.params(), adam, ++step);

            const double wgt = static_cast<double>(count) / static_cast<double>(n);
            rec.reconstruction += wgt * tape.value(vars.reconstruction).item();
            rec.weight_decay += wgt * tape.value(vars.weight_decay).item();
            rec.kld += wgt * tape.value(vars.kld).item();
        }
        rec.total = rec.reconstruction + rec.weight_decay + weights.beta_kld * rec.kld;
        curve.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    model.params().drop_grad();
    return curve;
}

struct TestLoss {
    double reconstruction = 0.0;
    double kld = 0.0;
    double total = 0.0;

    friend bool operator==(const TestLoss&, const TestLoss&) = default;
};

/// Reconstruction through a sampled z plus KLD, no parameter updates.
template <typename T>
TestLoss evaluate_test_loss(const VaeModel<T>& model, const Tensor<T>& data, std::uint64_t eval_seed = kEvalSeed,
                            std::size_t batch_size = 32) {
    if (data.empty() || data.rank() != 4 || data.dim(0) == 0) {
        throw ValidationError("evaluate_test_loss: test set must be non-empty");
    }
    model.check_images(data.shape());
    Rng rng = Rng::stream(eval_seed, "eval");
    const std::size_t n = data.dim(0);
    double sq = 0.0, kld = 0.0;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        const auto x = gather_batch(data, std::span<const std::size_t>(idx).subspan(start, count));
        const auto [mu, lv] = encode(model, x);
        const auto code = reparameterize(mu, lv, rng);
        const auto y = decode(model, code.z);
        sq += reconstruction_loss(x, y) * static_cast<double>(x.numel());
        kld += kld_gaussian(code.mu, code.logvar) * static_cast<double>(count);
    }
    TestLoss out;
    out.reconstruction = sq / static_cast<double>(data.numel());
    out.kld = kld / static_cast<double>(n);
    out.total = out.reconstruction + out.kld;
    return out;
}

}  // namespace vaesynth::vae
