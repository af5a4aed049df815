#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vaesynth/dataio/manifest.hpp"
#include "vaesynth/dataio/pgm.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/evalkit/metrics.hpp"
#include "vaesynth/numcore/adam.hpp"
#include "vaesynth/numcore/param_set.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/numcore/tape.hpp"
#include "vaesynth/synthgen/preprocess.hpp"

namespace vaesynth::evalkit {

using numcore::OpAttrs;
using numcore::OpKind;
using numcore::Tensor;
using dataio::DatasetManifest;

/// Images as one [N, 1, S, S] batch with a class index per image.
struct LabeledImages {
    Tensor<float> images;
    std::vector<std::size_t> labels;
    std::vector<std::filesystem::path> paths;

    std::size_t size() const noexcept { return labels.size(); }
};

inline LabeledImages load_labeled(const DatasetManifest& m, std::size_t side) {
    std::vector<Tensor<float>> imgs;
    LabeledImages out;
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
        for (const auto& path : m.files[c]) {
            imgs.push_back(synthgen::preprocess_image<float>(dataio::read_pgm(path), side));
            out.labels.push_back(c);
            out.paths.push_back(path);
        }
    }
    if (imgs.empty()) throw ValidationError("no images in manifest rooted at " + m.root.string());
    out.images = synthgen::stack_images(imgs);
    return out;
}

struct ClassifierConfig {
    std::size_t hidden = 64;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

/// flatten -> dense(hidden) -> ReLU -> dense(classes) -> softmax.
class Classifier {
   public:
    Classifier(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed)
        : input_dim_(input_dim), classes_(classes) {
        params_.add("fc1.w", Tensor<float>({input_dim, hidden}));
        params_.add("fc1.b", Tensor<float>({hidden}));
        params_.add("fc2.w", Tensor<float>({hidden, classes}));
        params_.add("fc2.b", Tensor<float>({classes}));
        numcore::Rng rng = numcore::Rng::stream(seed, "classifier-init");
        std::size_t fan_in = input_dim;
        for (auto& p : params_) {
            if (p.name == "fc2.w") fan_in = hidden;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& v : p.value.data()) v = static_cast<float>(rng.uniform(-bound, bound));
        }
    }

    std::size_t num_classes() const noexcept { return classes_; }
    std::size_t input_dim() const noexcept { return input_dim_; }
    numcore::ParamSet<float>& params() noexcept { return params_; }
    const numcore::ParamSet<float>& params() const noexcept { return params_; }

    /// Records the logits for a [B, ...] batch; trainable when `train` is set.
    numcore::Tape<float>::Var logits_graph(numcore::Tape<float>& tape, const Tensor<float>& batch, bool train) {
        if (batch.numel() != batch.dim(0) * input_dim_) {
            throw ShapeError("classifier: input " + numcore::shape_str(batch.shape()) + " does not flatten to " +
                             std::to_string(input_dim_) + " features");
        }
        auto p = [&](const char* n) { return train ? tape.parameter(params_.at(n)) : tape.reference(params_.at(n)); };
        auto h = tape.apply(OpKind::reshape, {tape.reference(batch)}, OpAttrs{.shape = {batch.dim(0), input_dim_}});
        h = tape.apply(OpKind::add_bias, {tape.apply(OpKind::matmul, {h, p("fc1.w")}), p("fc1.b")});
        h = tape.apply(OpKind::relu, {h});
        return tape.apply(OpKind::add_bias, {tape.apply(OpKind::matmul, {h, p("fc2.w")}), p("fc2.b")});
    }

    Tensor<float> logits(const Tensor<float>& batch) const {
        numcore::Tape<float> tape;
        return tape.value(const_cast<Classifier*>(this)->logits_graph(tape, batch, false));
    }

    /// Argmax per row; ties resolve to the lowest class index.
    std::vector<std::size_t> predict(const Tensor<float>& batch) const {
        const auto z = logits(batch);
        std::vector<std::size_t> out(z.dim(0));
        for (std::size_t r = 0; r < out.size(); ++r) {
            const float* row = z.data().data() + r * classes_;
            out[r] = static_cast<std::size_t>(std::max_element(row, row + classes_) - row);
        }
        return out;
    }

   private:
    std::size_t input_dim_;
    std::size_t classes_;
    numcore::ParamSet<float> params_;
};

inline double accuracy_on(const Classifier& clf, const LabeledImages& data) {
    const auto pred = clf.predict(data.images);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == data.labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct TrainedClassifier {
    Classifier model;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
};

/// Adam on mean cross-entropy; keeps the weights of the best validation epoch and
/// stops after `patience` epochs without improvement.
inline TrainedClassifier train_classifier(const LabeledImages& train, const LabeledImages& val,
                                          std::size_t num_classes, const ClassifierConfig& cfg) {
    if (num_classes < 2) throw ValidationError("classifier needs at least 2 classes");
    if (train.size() == 0 || val.size() == 0) throw ValidationError("classifier needs non-empty train and validation sets");
    {
        auto distinct = train.labels;
        std::sort(distinct.begin(), distinct.end());
        if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 2) {
            throw ValidationError("classifier training data holds a single class");
        }
    }
    const std::size_t n = train.size();
    const std::size_t input_dim = train.images.numel() / n;
    TrainedClassifier result{Classifier(input_dim, cfg.hidden, num_classes, cfg.seed)};
    Classifier& clf = result.model;
    numcore::ParamSet<float> best = clf.params();
    result.best_val_accuracy = -1.0;

    numcore::Rng rng = numcore::Rng::stream(cfg.seed, "classifier-shuffle");
    const numcore::AdamConfig adam{.lr = cfg.learning_rate};
    std::vector<std::size_t> order(n);
    std::uint64_t step = 0;
    std::size_t since_best = 0;
    const std::size_t per = input_dim;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            Tensor<float> x({count, per});
            OpAttrs ce;
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(train.images.data().begin() + static_cast<std::ptrdiff_t>(src * per), per,
                            x.data().begin() + static_cast<std::ptrdiff_t>(i * per));
                ce.labels.push_back(train.labels[src]);
            }
            numcore::Tape<float> tape;
            const auto loss = tape.apply(OpKind::softmax_cross_entropy, {clf.logits_graph(tape, x, true)}, ce);
            tape.backward(loss);
            numcore::adam_step(clf.params(), adam, ++step);
        }
        result.epochs_run = epoch;
        const double acc = accuracy_on(clf, val);
        if (acc > result.best_val_accuracy) {
            result.best_val_accuracy = acc;
            result.best_epoch = epoch;
            best = clf.params();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    clf.params() = std::move(best);
    clf.params().drop_grad();
    return result;
}

inline ConfusionMatrix confusion(const Classifier& clf, const LabeledImages& test) {
    if (test.size() == 0) throw ValidationError("confusion: empty test set");
    ConfusionMatrix m(clf.num_classes());
    const auto pred = clf.predict(test.images);
    for (std::size_t i = 0; i < pred.size(); ++i) m.add(test.labels[i], pred[i]);
    return m;
}

}  // namespace vaesynth::evalkit
