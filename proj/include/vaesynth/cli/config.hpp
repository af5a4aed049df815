#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vaesynth/errors.hpp"
#include "vaesynth/evalkit/classifier.hpp"
#include "vaesynth/evalkit/split.hpp"
#include "vaesynth/latentmap/tsne.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/synthgen/fixture.hpp"
#include "vaesynth/vae/trainer.hpp"

namespace vaesynth::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::uint64_t kDefaultSeed = 42;

/// Every tunable of the pipeline under one flat key set. All derived stream seeds come
/// from `seed` via derive_seed(seed, <module>).
struct RunConfig {
    std::uint64_t seed = kDefaultSeed;
    std::string out = "run";
    std::string data_dir;  // empty: <out>/fixture

    // fixture
    std::vector<std::string> fixture_classes = synthgen::FixtureSpec{}.classes;
    std::size_t fixture_per_class = 10;
    double fixture_noise = 0.05;

    // model and training
    std::size_t image_side = 64;
    std::size_t latent_dim = 32;
    std::size_t epochs = 100;
    std::size_t batch_size = 25;
    double learning_rate = 1e-3;
    double lambda_wd = 1e-3;
    double beta_kld = 1e-3;

    // generation
    std::size_t images_per_sample = 9;
    double rotation_max_degrees = 30.0;

    // projection
    std::string projection = "tsne";
    double tsne_perplexity = 10.0;
    std::size_t tsne_iterations = 500;

    // classification
    double split_train = 0.8;
    double split_validation = 0.1;
    double split_test = 0.1;
    std::size_t classifier_hidden = 64;
    std::size_t classifier_max_epochs = 200;
    std::size_t classifier_patience = 10;
    std::size_t classifier_batch_size = 32;
    double classifier_learning_rate = 1e-3;

    std::uint64_t stream_seed(std::string_view module) const { return numcore::derive_seed(seed, module); }

    fs::path out_dir() const { return fs::path(out); }
    fs::path data_root() const { return data_dir.empty() ? out_dir() / "fixture" : fs::path(data_dir); }
    fs::path model_path() const { return out_dir() / "model.vae"; }
    fs::path loss_curve_path() const { return out_dir() / "loss_curve.csv"; }
    fs::path train_summary_path() const { return out_dir() / "train_summary.json"; }
    fs::path synthetic_dir() const { return out_dir() / "synthetic"; }
    fs::path baseline_dir() const { return out_dir() / "baseline"; }
    fs::path latent_csv_path() const { return out_dir() / "latent.csv"; }
    fs::path latent_svg_path() const { return out_dir() / "latent.svg"; }
    fs::path latent_summary_path() const { return out_dir() / "latent_summary.json"; }
    fs::path metrics_json_path() const { return out_dir() / "metrics.json"; }
    fs::path metrics_csv_path() const { return out_dir() / "metrics.csv"; }
    fs::path report_path() const { return out_dir() / "report.md"; }

    synthgen::FixtureSpec fixture_spec() const {
        synthgen::FixtureSpec s;
        s.classes = fixture_classes;
        s.n_per_class = fixture_per_class;
        s.image_side = image_side;
        s.noise = fixture_noise;
        s.seed = stream_seed("fixture");
        return s;
    }

    vae::TrainConfig train_config() const {
        vae::TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.learning_rate = learning_rate;
        c.lambda_wd = lambda_wd;
        c.beta_kld = beta_kld;
        c.seed = stream_seed("train");
        return c;
    }

    evalkit::SplitSpec split_spec() const {
        return {{split_train, split_validation, split_test}, stream_seed("split")};
    }

    evalkit::ClassifierConfig classifier_config() const {
        return {classifier_hidden, classifier_max_epochs, classifier_patience, classifier_batch_size,
                classifier_learning_rate, stream_seed("classify")};
    }

    latentmap::TsneConfig tsne_config() const {
        latentmap::TsneConfig c;
        c.perplexity = tsne_perplexity;
        c.iterations = tsne_iterations;
        c.seed = stream_seed("project");
        return c;
    }

    void validate() const {
        if (out.empty()) throw ValidationError("out must not be empty");
        fixture_spec().validate();
        train_config().validate();
        split_spec().validate();
        if (latent_dim < 1) throw ValidationError("latent_dim must be >= 1");
        if (image_side < 4 || image_side % 4 != 0) throw ValidationError("image_side must be a positive multiple of 4");
        if (images_per_sample < 1) throw ValidationError("images_per_sample must be >= 1");
        if (!(rotation_max_degrees > 0.0 && rotation_max_degrees <= 180.0)) {
            throw ValidationError("rotation_max_degrees must lie in (0, 180]");
        }
        if (projection != "tsne" && projection != "pca") throw ValidationError("projection must be 'tsne' or 'pca'");
        if (!(tsne_perplexity > 0.0)) throw ValidationError("tsne_perplexity must be > 0");
        if (classifier_hidden < 1 || classifier_max_epochs < 1 || classifier_patience < 1 || classifier_batch_size < 1) {
            throw ValidationError("classifier sizes must all be >= 1");
        }
        if (!(classifier_learning_rate > 0.0)) throw ValidationError("classifier_learning_rate must be > 0");
    }
};

#define VAESYNTH_CONFIG_FIELDS(X)                                                                              \
    X(seed) X(out) X(data_dir) X(fixture_classes) X(fixture_per_class) X(fixture_noise) X(image_side)         \
    X(latent_dim) X(epochs) X(batch_size) X(learning_rate) X(lambda_wd) X(beta_kld) X(images_per_sample)     \
    X(rotation_max_degrees) X(projection) X(tsne_perplexity) X(tsne_iterations) X(split_train)               \
    X(split_validation) X(split_test) X(classifier_hidden) X(classifier_max_epochs) X(classifier_patience)    \
    X(classifier_batch_size) X(classifier_learning_rate)

inline json config_to_json(const RunConfig& c) {
    json j = json::object();
#define VAESYNTH_PUT(name) j[#name] = c.name;
    VAESYNTH_CONFIG_FIELDS(VAESYNTH_PUT)
#undef VAESYNTH_PUT
    return j;
}

/// Overlays the keys present in `j`; unknown keys and wrong types are validation errors.
inline void apply_json(RunConfig& c, const json& j, const std::string& origin) {
    if (!j.is_object()) throw ValidationError(origin + ": config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        try {
#define VAESYNTH_GET(name)                                                                      \
    if (it.key() == #name) {                                                                    \
        known = true;                                                                           \
        if constexpr (std::is_unsigned_v<decltype(c.name)>) {                                   \
            if (!it.value().is_number_unsigned()) {                                             \
                throw ValidationError(origin + ": '" + it.key() + "' must be a non-negative integer"); \
            }                                                                                   \
        }                                                                                       \
        it.value().get_to(c.name);                                                              \
    }
            VAESYNTH_CONFIG_FIELDS(VAESYNTH_GET)
#undef VAESYNTH_GET
        } catch (const json::exception& e) {
            throw ValidationError(origin + ": bad value for '" + it.key() + "': " + e.what());
        }
        if (!known) throw ValidationError(origin + ": unknown config key '" + it.key() + "'");
    }
}

/// `key=value` overrides. The value is read as JSON when it parses (numbers, arrays,
/// quoted strings), else taken as a bare string; a comma list is accepted for
/// fixture_classes.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ValidationError("expected key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    if (key == "fixture_classes" && value.is_string()) {
        json list = json::array();
        std::stringstream ss(raw);
        for (std::string item; std::getline(ss, item, ',');) list.push_back(item);
        value = list;
    }
    if ((key == "out" || key == "data_dir" || key == "projection") && !value.is_string()) value = raw;
    apply_json(c, json{{key, value}}, "override");
}

inline std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
        v = std::stoull(text, &used, 10);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size()) throw ValidationError(origin + ": seed must be a non-negative integer, got '" + text + "'");
    return v;
}

struct Invocation {
    std::string command;
    RunConfig config;
    bool help = false;
    std::string help_text;
};

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"fixture", "train", "generate", "augment", "project", "classify", "report"};
    return names;
}

/// Resolves the effective config: defaults < TOOL_SEED < config file < key=value and
/// --out < --seed.
inline Invocation parse_invocation(const std::vector<std::string>& args, const char* env_seed) {
    CLI::App app{"Weight-decay VAE synthetic image generation pipeline", "vaesynth"};
    app.require_subcommand(1, 1);
    std::string config_path, seed_flag, out_flag;
    std::vector<std::string> overrides;
    for (const auto& name : command_names()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "flat JSON config file");
        sub->add_option("--seed", seed_flag, "master seed (overrides everything else)");
        sub->add_option("--out", out_flag, "output directory");
        sub->add_option("overrides", overrides, "key=value config overrides");
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    Invocation inv;
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        inv.help = true;
        inv.help_text = app.help();
        return inv;
    } catch (const CLI::ParseError& e) {
        throw ValidationError(e.what());
    }
    inv.command = app.get_subcommands().front()->get_name();

    RunConfig& c = inv.config;
    if (env_seed && *env_seed) c.seed = parse_seed(env_seed, "TOOL_SEED");
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ValidationError("cannot open config file: " + config_path);
        const json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ValidationError("config file is not valid JSON: " + config_path);
        apply_json(c, j, config_path);
    }
    for (const auto& o : overrides) apply_override(c, o);
    if (!out_flag.empty()) c.out = out_flag;
    if (!seed_flag.empty()) c.seed = parse_seed(seed_flag, "--seed");
    c.validate();
    return inv;
}

}  // namespace vaesynth::cli
