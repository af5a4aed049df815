#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vaesynth/cli/config.hpp"
#include "vaesynth/dataio/csv.hpp"
#include "vaesynth/dataio/manifest.hpp"
#include "vaesynth/dataio/pgm.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/evalkit/classifier.hpp"
#include "vaesynth/evalkit/metrics.hpp"
#include "vaesynth/evalkit/split.hpp"
#include "vaesynth/latentmap/output.hpp"
#include "vaesynth/latentmap/projection.hpp"
#include "vaesynth/latentmap/tsne.hpp"
#include "vaesynth/synthgen/fixture.hpp"
#include "vaesynth/synthgen/generate.hpp"
#include "vaesynth/synthgen/preprocess.hpp"
#include "vaesynth/vae/losses.hpp"
#include "vaesynth/vae/serialize.hpp"
#include "vaesynth/vae/trainer.hpp"

namespace vaesynth::cli {

using numcore::Tensor;

/// Deletes every tracked path unless commit() ran, so a failed command leaves no
/// half-written outputs behind.
class OutputGuard {
   public:
    OutputGuard() = default;
    OutputGuard(const OutputGuard&) = delete;
    OutputGuard& operator=(const OutputGuard&) = delete;
    ~OutputGuard() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& p : paths_) fs::remove_all(p, ec);
    }
    const fs::path& track(const fs::path& p) {
        paths_.push_back(p);
        return p;
    }
    void commit() noexcept { committed_ = true; }

   private:
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

namespace detail {

inline void require_file(const fs::path& p, const std::string& what, const std::string& producer) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) {
        throw ValidationError("missing input " + what + ": " + p.string() + " (run `" + producer + "` first)");
    }
}

inline void require_dir(const fs::path& p, const std::string& what, const std::string& producer) {
    std::error_code ec;
    if (!fs::is_directory(p, ec)) {
        throw ValidationError("missing input " + what + ": " + p.string() + " (run `" + producer + "` first)");
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw IoError("short write to " + path.string());
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + " is not valid JSON");
    return j;
}

inline void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir(), ec);
    if (ec || !fs::is_directory(cfg.out_dir())) {
        throw IoError("cannot create output directory " + cfg.out_dir().string() + (ec ? ": " + ec.message() : ""));
    }
}

inline dataio::DatasetManifest load_manifest(const RunConfig& cfg) {
    require_dir(cfg.data_root(), "dataset", "fixture");
    return dataio::scan_manifest(cfg.data_root());
}

inline Tensor<float> load_corpus(const dataio::DatasetManifest& m, std::size_t side) {
    return evalkit::load_labeled(m, side).images;
}

inline vae::VaeModel<float> load_model(const RunConfig& cfg) {
    require_file(cfg.model_path(), "model", "train");
    auto model = vae::load_model<float>(cfg.model_path());
    if (model.image_side() != cfg.image_side || model.latent_dim() != cfg.latent_dim) {
        throw ValidationError("model " + cfg.model_path().string() + " has side " + std::to_string(model.image_side()) +
                              " and latent_dim " + std::to_string(model.latent_dim()) + ", config asks for " +
                              std::to_string(cfg.image_side) + " and " + std::to_string(cfg.latent_dim));
    }
    return model;
}

/// mu of every image, one row per image, in manifest order.
inline std::vector<double> encode_means(const vae::VaeModel<float>& model, const Tensor<float>& data,
                                        std::size_t batch = 32) {
    const std::size_t n = data.dim(0);
    std::vector<double> out;
    out.reserve(n * model.latent_dim());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t count = std::min(batch, n - start);
        const auto x = vae::gather_batch(data, std::span<const std::size_t>(idx).subspan(start, count));
        const auto mu = vae::encode(model, x).first;
        for (float v : mu.data()) out.push_back(static_cast<double>(v));
    }
    return out;
}

inline std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string strip_suffix(const std::string& name) {
    const std::string suffix = synthgen::kReconstructedSuffix;
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return name.substr(0, name.size() - suffix.size());
    }
    return name;
}

inline bool is_original_file(const fs::path& p) {
    const std::string stem = p.stem().string();
    return stem.size() >= 5 && stem.compare(stem.size() - 5, 5, "_orig") == 0;
}

inline fs::file_time_type mtime(const fs::path& p) { return fs::last_write_time(p); }

inline fs::file_time_type newest_file_under(const fs::path& root) {
    fs::file_time_type newest = fs::file_time_type::min();
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) newest = std::max(newest, e.last_write_time());
    }
    return newest;
}

}  // namespace detail

inline void cmd_fixture(const RunConfig& cfg, std::ostream& log) {
    detail::ensure_out_dir(cfg);
    const auto spec = cfg.fixture_spec();
    OutputGuard guard;
    for (const auto& cls : spec.classes) guard.track(cfg.data_root() / cls);
    const auto m = synthgen::make_fixture_dataset(spec, cfg.data_root());
    guard.commit();
    log << "fixture: " << m.total() << " images in " << m.num_classes() << " classes under "
        << cfg.data_root().generic_string() << "\n";
}

inline void cmd_train(const RunConfig& cfg, std::ostream& log) {
    const auto manifest = detail::load_manifest(cfg);
    const auto data = detail::load_corpus(manifest, cfg.image_side);
    detail::ensure_out_dir(cfg);
    const auto tc = cfg.train_config();
    auto model = vae::VaeModel<float>::initialized(cfg.image_side, cfg.latent_dim, tc.seed);

    OutputGuard guard;
    guard.track(cfg.model_path());
    guard.track(cfg.loss_curve_path());
    guard.track(cfg.train_summary_path());

    const auto curve = vae::train(model, data, tc, [&](const vae::EpochRecord& r) {
        if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == tc.epochs) {
            log << "epoch " << r.epoch << "/" << tc.epochs << "  total " << detail::fixed(r.total, 6) << "  rec "
                << detail::fixed(r.reconstruction, 6) << "  kld " << detail::fixed(r.kld, 3) << "\n";
        }
    });
    vae::save_model(model, cfg.model_path());

    std::vector<dataio::CsvRow> rows;
    for (const auto& r : curve) {
        rows.push_back({static_cast<long long>(r.epoch), r.total, r.reconstruction, r.weight_decay, r.kld});
    }
    dataio::write_csv(rows, {"epoch", "total", "reconstruction", "weight_decay", "kld"}, cfg.loss_curve_path());

    const auto eval = vae::evaluate_test_loss(model, data);
    const auto& last = curve.back();
    const json summary{{"images", data.dim(0)},
                       {"epochs", tc.epochs},
                       {"seed", tc.seed},
                       {"final", {{"total", last.total},
                                  {"reconstruction", last.reconstruction},
                                  {"weight_decay", last.weight_decay},
                                  {"kld", last.kld}}},
                       {"eval", {{"reconstruction", eval.reconstruction}, {"kld", eval.kld}, {"total", eval.total}}},
                       {"param_sum_squares", model.params().sum_squares()}};
    detail::write_text(cfg.train_summary_path(), summary.dump(2) + "\n");
    guard.commit();
    log << "train: wrote " << cfg.model_path().generic_string() << "\n";
}

inline void cmd_generate(const RunConfig& cfg, std::ostream& log) {
    const auto manifest = detail::load_manifest(cfg);
    const auto model = detail::load_model(cfg);
    detail::ensure_out_dir(cfg);
    OutputGuard guard;
    fs::remove_all(guard.track(cfg.synthetic_dir()));
    const auto report = synthgen::generate_synthetic_dataset(manifest, model, cfg.images_per_sample,
                                                             cfg.synthetic_dir(), cfg.stream_seed("generate"));
    guard.commit();
    log << "generate: " << report.total_synthetics() << " synthetic + " << report.total_originals()
        << " original images in " << cfg.synthetic_dir().generic_string() << " ("
        << detail::fixed(report.wall_seconds, 2) << " s)\n";
}

inline void cmd_augment(const RunConfig& cfg, std::ostream& log) {
    const auto manifest = detail::load_manifest(cfg);
    detail::ensure_out_dir(cfg);
    OutputGuard guard;
    fs::remove_all(guard.track(cfg.baseline_dir()));
    const auto report =
        synthgen::baseline_rotate_augment(manifest, cfg.images_per_sample, cfg.baseline_dir(),
                                          cfg.stream_seed("augment"), cfg.rotation_max_degrees, cfg.image_side);
    guard.commit();
    log << "augment: " << report.total_synthetics() << " rotated + " << report.total_originals()
        << " original images in " << cfg.baseline_dir().generic_string() << "\n";
}

inline void cmd_project(const RunConfig& cfg, std::ostream& log) {
    const auto manifest = detail::load_manifest(cfg);
    const auto model = detail::load_model(cfg);
    if (cfg.latent_dim < 2) throw ValidationError("project needs latent_dim >= 2");
    const auto labeled = evalkit::load_labeled(manifest, cfg.image_side);
    latentmap::PointCloud cloud(labeled.size(), cfg.latent_dim, detail::encode_means(model, labeled.images),
                                labeled.labels);
    detail::ensure_out_dir(cfg);
    OutputGuard guard;
    guard.track(cfg.latent_csv_path());
    guard.track(cfg.latent_svg_path());
    guard.track(cfg.latent_summary_path());

    const auto proj = cfg.projection == "pca" ? latentmap::pca_2d(cloud) : latentmap::tsne_2d(cloud, cfg.tsne_config());
    std::vector<std::string> names;
    for (auto l : labeled.labels) names.push_back(manifest.classes[l]);
    latentmap::write_projection_csv(proj, names, cfg.latent_csv_path());
    latentmap::write_projection_svg(proj, labeled.labels, manifest.classes, cfg.latent_svg_path());

    json params = json::object();
    for (const auto& [k, v] : proj.params) params[k] = v;
    const json summary{{"method", proj.method},
                       {"points", cloud.n},
                       {"latent_dim", cloud.k},
                       {"params", params},
                       {"separation_latent", latentmap::cluster_separation(cloud)},
                       {"separation_2d", latentmap::cluster_separation(proj, labeled.labels)}};
    detail::write_text(cfg.latent_summary_path(), summary.dump(2) + "\n");
    guard.commit();
    log << "project: " << proj.method << " of " << cloud.n << " latent means, separation "
        << detail::fixed(summary["separation_latent"].get<double>()) << " (latent) / "
        << detail::fixed(summary["separation_2d"].get<double>()) << " (2-D)\n";
}

inline void cmd_classify(const RunConfig& cfg, std::ostream& log) {
    detail::require_file(cfg.synthetic_dir() / "report.json", "synthetic dataset", "generate");
    auto manifest = dataio::scan_manifest(cfg.synthetic_dir());
    std::vector<std::string> classes;
    for (const auto& c : manifest.classes) classes.push_back(detail::strip_suffix(c));

    // originals and synthetics are split separately so every slice holds both kinds
    const auto split = evalkit::stratified_split(manifest, cfg.split_spec(), [](const fs::path& p) {
        return detail::is_original_file(p) ? std::string("original") : std::string("synthetic");
    });
    const auto train = evalkit::load_labeled(split.train, cfg.image_side);
    const auto val = evalkit::load_labeled(split.validation, cfg.image_side);
    const auto test = evalkit::load_labeled(split.test, cfg.image_side);
    detail::ensure_out_dir(cfg);
    OutputGuard guard;
    guard.track(cfg.metrics_json_path());
    guard.track(cfg.metrics_csv_path());

    const auto trained = evalkit::train_classifier(train, val, classes.size(), cfg.classifier_config());
    const auto m = evalkit::confusion(trained.model, test);
    const auto metrics = evalkit::metrics_from_confusion(m);

    std::size_t test_originals = 0;
    for (const auto& p : test.paths) test_originals += detail::is_original_file(p);
    json j = evalkit::metrics_to_json(metrics, m, classes);
    j["split"] = {{"train", train.size()}, {"validation", val.size()}, {"test", test.size()},
                  {"test_originals", test_originals}, {"test_synthetics", test.size() - test_originals}};
    j["training"] = {{"epochs_run", trained.epochs_run},
                     {"best_epoch", trained.best_epoch},
                     {"best_validation_accuracy", trained.best_val_accuracy}};
    j["seed"] = cfg.seed;
    detail::write_text(cfg.metrics_json_path(), j.dump(2) + "\n");
    evalkit::write_metrics_csv(metrics, classes, cfg.metrics_csv_path());
    guard.commit();
    log << "classify: test accuracy " << detail::fixed(metrics.accuracy) << ", macro F1 "
        << detail::fixed(metrics.macro_f1) << " on " << test.size() << " images\n";
}

namespace detail {

/// Fails when `artifact` predates `input`: the two come from different runs.
inline void require_fresh(const fs::path& artifact, fs::file_time_type input_time, const std::string& input_name,
                          const std::string& rerun) {
    if (mtime(artifact) < input_time) {
        throw ValidationError("stale artifact: " + artifact.string() + " is older than " + input_name + "; rerun `" +
                              rerun + "`");
    }
}

}  // namespace detail

inline std::string render_report(const RunConfig& cfg) {
    using detail::fixed;
    const json train = detail::read_json(cfg.train_summary_path());
    const json gen = detail::read_json(cfg.synthetic_dir() / "report.json");
    const json latent = detail::read_json(cfg.latent_summary_path());
    const json metrics = detail::read_json(cfg.metrics_json_path());
    const fs::path baseline_report = cfg.baseline_dir() / "report.json";
    std::ostringstream md;

    md << "# Synthetic dataset report\n\n";
    md << "Master seed `" << cfg.seed << "`, output directory `" << cfg.out_dir().generic_string() << "`.\n\n";

    md << "## Configuration\n\n| key | value |\n|---|---|\n";
    const json effective = config_to_json(cfg);
    for (const auto& [k, v] : effective.items()) md << "| " << k << " | `" << v.dump() << "` |\n";

    md << "\n## Training\n\n";
    md << "Trained for " << train["epochs"].get<std::size_t>() << " epochs on " << train["images"].get<std::size_t>()
       << " images. Final epoch: total " << fixed(train["final"]["total"].get<double>(), 6) << ", reconstruction "
       << fixed(train["final"]["reconstruction"].get<double>(), 6) << ", weight decay "
       << fixed(train["final"]["weight_decay"].get<double>(), 6) << ", KLD " << fixed(train["final"]["kld"].get<double>(), 4)
       << ". Sum of squared parameters " << fixed(train["param_sum_squares"].get<double>(), 4) << ".\n\n";
    md << "Evaluation loss on the corpus: reconstruction " << fixed(train["eval"]["reconstruction"].get<double>(), 6)
       << ", KLD " << fixed(train["eval"]["kld"].get<double>(), 4) << ".\n\n";
    md << "| epoch | total | reconstruction | weight decay | kld |\n|---|---|---|---|---|\n";
    {
        std::ifstream in(cfg.loss_curve_path(), std::ios::binary);
        std::string line;
        std::getline(in, line);  // header
        std::vector<std::string> lines;
        while (std::getline(in, line)) lines.push_back(line);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (!(i == 0 || (i + 1) % 10 == 0 || i + 1 == lines.size())) continue;
            std::vector<std::string> cells;
            std::stringstream ss(lines[i]);
            for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
            if (cells.size() != 5) throw FormatError("malformed row in " + cfg.loss_curve_path().string());
            md << "| " << cells[0];
            for (std::size_t c = 1; c < 5; ++c) md << " | " << fixed(std::stod(cells[c]), 6);
            md << " |\n";
        }
    }

    const auto generation_table = [&](const json& r, const std::string& title) {
        md << "\n## " << title << "\n\n";
        md << "Method `" << r["method"].get<std::string>() << "`, " << r["images_per_sample"].get<std::size_t>()
           << " variants per original.\n\n| class | originals | synthetic | skipped |\n|---|---|---|---|\n";
        for (const auto& c : r["classes"]) {
            md << "| " << c["class"].get<std::string>() << " | " << c["originals_found"].get<std::size_t>() << " | "
               << c["synthetics_written"].get<std::size_t>() << " | " << c["skipped"].size() << " |\n";
        }
        md << "| total | " << r["total_originals"].get<std::size_t>() << " | " << r["total_synthetics"].get<std::size_t>()
           << " | |\n\n" << r["total_files"].get<std::size_t>() << " files in total.\n";
    };
    generation_table(gen, "VAE generation");
    if (fs::exists(baseline_report)) generation_table(detail::read_json(baseline_report), "Rotation baseline");

    md << "\n## Latent space\n\n";
    md << "Projection `" << latent["method"].get<std::string>() << "` of " << latent["points"].get<std::size_t>()
       << " encoded means (d = " << latent["latent_dim"].get<std::size_t>() << "), plotted in `latent.svg`.\n"
       << "Cluster separation (mean intra-class over mean inter-class distance, lower is better): "
       << fixed(latent["separation_latent"].get<double>()) << " in latent space, "
       << fixed(latent["separation_2d"].get<double>()) << " in the projection.\n";

    md << "\n## Classification\n\n";
    md << "Split " << metrics["split"]["train"].get<std::size_t>() << "/" << metrics["split"]["validation"].get<std::size_t>()
       << "/" << metrics["split"]["test"].get<std::size_t>() << " (train/validation/test); the test set holds "
       << metrics["split"]["test_originals"].get<std::size_t>() << " originals and "
       << metrics["split"]["test_synthetics"].get<std::size_t>() << " synthetics. Best validation accuracy "
       << fixed(metrics["training"]["best_validation_accuracy"].get<double>()) << " at epoch "
       << metrics["training"]["best_epoch"].get<std::size_t>() << ".\n\n";
    md << "| class | precision | recall | f1 | support |\n|---|---|---|---|---|\n";
    for (const auto& c : metrics["per_class"]) {
        md << "| " << c["class"].get<std::string>() << " | " << fixed(c["precision"].get<double>()) << " | "
           << fixed(c["recall"].get<double>()) << " | " << fixed(c["f1"].get<double>()) << " | "
           << c["support"].get<std::size_t>() << " |\n";
    }
    md << "| macro | " << fixed(metrics["macro_precision"].get<double>()) << " | "
       << fixed(metrics["macro_recall"].get<double>()) << " | " << fixed(metrics["macro_f1"].get<double>()) << " | |\n\n";
    md << "Test accuracy " << fixed(metrics["accuracy"].get<double>()) << ".\n";
    return md.str();
}

inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
    using detail::require_file;
    require_file(cfg.model_path(), "model", "train");
    require_file(cfg.loss_curve_path(), "loss curve", "train");
    require_file(cfg.train_summary_path(), "training summary", "train");
    require_file(cfg.synthetic_dir() / "report.json", "generation report", "generate");
    require_file(cfg.latent_summary_path(), "latent summary", "project");
    require_file(cfg.latent_svg_path(), "latent plot", "project");
    require_file(cfg.metrics_json_path(), "metrics", "classify");
    require_file(cfg.metrics_csv_path(), "metrics table", "classify");
    detail::require_dir(cfg.data_root(), "dataset", "fixture");

    const auto data_time = detail::newest_file_under(cfg.data_root());
    const auto model_time = detail::mtime(cfg.model_path());
    const auto gen_time = detail::mtime(cfg.synthetic_dir() / "report.json");
    detail::require_fresh(cfg.model_path(), data_time, "the dataset", "train");
    detail::require_fresh(cfg.train_summary_path(), model_time, "the model", "train");
    detail::require_fresh(cfg.synthetic_dir() / "report.json", model_time, "the model", "generate");
    detail::require_fresh(cfg.latent_summary_path(), model_time, "the model", "project");
    detail::require_fresh(cfg.metrics_json_path(), gen_time, "the synthetic dataset", "classify");
    const fs::path baseline_report = cfg.baseline_dir() / "report.json";
    if (fs::exists(baseline_report)) detail::require_fresh(baseline_report, data_time, "the dataset", "augment");

    const json gen = detail::read_json(cfg.synthetic_dir() / "report.json");
    if (gen.value("seed", std::uint64_t{0}) != cfg.stream_seed("generate")) {
        throw ValidationError("synthetic dataset was generated under a different seed; rerun `generate`");
    }
    if (detail::read_json(cfg.metrics_json_path()).value("seed", std::uint64_t{0}) != cfg.seed) {
        throw ValidationError("metrics were computed under a different seed; rerun `classify`");
    }

    OutputGuard guard;
    guard.track(cfg.report_path());
    detail::write_text(cfg.report_path(), render_report(cfg));
    guard.commit();
    log << "report: wrote " << cfg.report_path().generic_string() << "\n";
}

inline void dispatch(const std::string& command, const RunConfig& cfg, std::ostream& log) {
    if (command == "fixture") return cmd_fixture(cfg, log);
    if (command == "train") return cmd_train(cfg, log);
    if (command == "generate") return cmd_generate(cfg, log);
    if (command == "augment") return cmd_augment(cfg, log);
    if (command == "project") return cmd_project(cfg, log);
    if (command == "classify") return cmd_classify(cfg, log);
    if (command == "report") return cmd_report(cfg, log);
    throw ValidationError("unknown command '" + command + "'");
}

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Full command-line entry point. Prints the effective config before acting.
inline int run(const std::vector<std::string>& args, const char* env_seed, std::ostream& out, std::ostream& err) {
    try {
        const auto inv = parse_invocation(args, env_seed);
        if (inv.help) {
            out << inv.help_text;
            return kExitOk;
        }
        out << "effective config (" << inv.command << "):\n" << config_to_json(inv.config).dump(2) << "\n";
        dispatch(inv.command, inv.config, out);
        return kExitOk;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace vaesynth::cli
