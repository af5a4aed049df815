#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "vaesynth/dataio/manifest.hpp"
#include "vaesynth/dataio/pgm.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/synthgen/preprocess.hpp"
#include "vaesynth/synthgen/report.hpp"
#include "vaesynth/vae/model.hpp"

namespace vaesynth::synthgen {

namespace fs = std::filesystem;

inline constexpr const char* kReconstructedSuffix = "-reconstructed";
inline constexpr std::size_t kDefaultImagesPerSample = 9;

inline std::string recon_file_name(const std::string& stem, std::size_t k) {
    return stem + "_recon_" + std::to_string(k) + ".pgm";
}
inline std::string rotated_file_name(const std::string& stem, std::size_t k) {
    return stem + "_rot_" + std::to_string(k) + ".pgm";
}
inline std::string original_file_name(const std::string& stem) { return stem + "_orig.pgm"; }

/// Produces the k synthetic variants of one preprocessed original ([1, 1, S, S]).
using VariantFn = std::function<std::vector<Tensor<float>>(const Tensor<float>& original, numcore::Rng& rng)>;

namespace detail {

inline void ensure_writable(const fs::path& out_root) {
    std::error_code ec;
    fs::create_directories(out_root, ec);
    if (ec || !fs::is_directory(out_root)) {
        throw IoError("output root is not writable: " + out_root.string() + (ec ? " (" + ec.message() + ")" : ""));
    }
    const fs::path probe = out_root / ".write-probe";
    {
        std::ofstream f(probe, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("output root is not writable: " + out_root.string());
    }
    fs::remove(probe, ec);
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace detail

/// Shared per-class loop: make `<class>-reconstructed/`, shuffle the class's files with
/// the class stream, then for each original write its variants and a copy of the
/// preprocessed original. Unreadable images are skipped and listed in the report.
inline GenerationReport expand_dataset(const dataio::DatasetManifest& manifest, std::size_t images_per_sample,
                                       const fs::path& out_root, std::uint64_t seed, std::size_t image_side,
                                       const std::string& method, const VariantFn& variants,
                                       const std::function<std::string(const std::string&, std::size_t)>& name_of) {
    if (manifest.classes.empty()) throw ValidationError("manifest has no classes");
    detail::ensure_writable(out_root);

    const auto start = std::chrono::steady_clock::now();
    GenerationReport report;
    report.method = method;
    report.out_root = out_root;
    report.images_per_sample = images_per_sample;
    report.seed = seed;

    std::vector<fs::path> created;
    try {
        for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
            const std::string& cls = manifest.classes[c];
            ClassGeneration gen{cls, cls + kReconstructedSuffix, 0, 0, {}};
            const fs::path dir = out_root / gen.output_dir;
            fs::remove_all(dir);
            fs::create_directories(dir);
            created.push_back(dir);

            numcore::Rng rng = numcore::Rng::stream(seed, method + "/" + cls);
            auto files = manifest.files[c];
            rng.shuffle(files);  // fixes processing order only; names do not depend on it
            for (const auto& path : files) {
                dataio::GrayImage raw;
                try {
                    raw = dataio::read_pgm(path);
                } catch (const IoError&) {
                    gen.skipped.push_back(path.generic_string());
                    continue;
                }
                const auto original = preprocess_image<float>(raw, image_side);
                const std::string stem = path.stem().string();
                const auto outs = variants(original, rng);
                for (std::size_t k = 0; k < outs.size(); ++k) {
                    dataio::write_pgm(to_gray(outs[k]), dir / name_of(stem, k));
                }
                dataio::write_pgm(to_gray(original), dir / original_file_name(stem));
                ++gen.originals_found;
                gen.synthetics_written += outs.size();
            }
            report.classes.push_back(std::move(gen));
        }
        report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        detail::write_text(out_root / "report.json", report_to_json(report).dump(2) + "\n");
    } catch (...) {
        std::error_code ec;
        for (const auto& dir : created) fs::remove_all(dir, ec);
        throw;
    }
    return report;
}

/// Algorithm 1: for every original, `images_per_sample` decodes of fresh draws
/// z ~ q(z|x) from the class's random stream.
inline GenerationReport generate_synthetic_dataset(const dataio::DatasetManifest& manifest,
                                                   const vae::VaeModel<float>& model,
                                                   std::size_t images_per_sample, const fs::path& out_root,
                                                   std::uint64_t seed) {
    const VariantFn variants = [&](const Tensor<float>& x, numcore::Rng& rng) {
        std::vector<Tensor<float>> outs;
        if (images_per_sample == 0) return outs;
        const auto [mu, lv] = vae::encode(model, x);
        const std::size_t d = model.latent_dim();
        Tensor<float> mu_rep({images_per_sample, d}), lv_rep({images_per_sample, d});
        for (std::size_t k = 0; k < images_per_sample; ++k) {
            std::copy(mu.data().begin(), mu.data().end(), mu_rep.data().begin() + static_cast<std::ptrdiff_t>(k * d));
            std::copy(lv.data().begin(), lv.data().end(), lv_rep.data().begin() + static_cast<std::ptrdiff_t>(k * d));
        }
        const auto code = vae::reparameterize(mu_rep, lv_rep, rng);
        const auto y = vae::decode(model, code.z);
        const std::size_t per = model.image_side() * model.image_side();
        for (std::size_t k = 0; k < images_per_sample; ++k) {
            std::vector<float> px(y.data().begin() + static_cast<std::ptrdiff_t>(k * per),
                                  y.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
            outs.emplace_back(numcore::Shape{1, 1, model.image_side(), model.image_side()}, std::move(px));
        }
        return outs;
    };
    return expand_dataset(manifest, images_per_sample, out_root, seed, model.image_side(), "vae", variants,
                          recon_file_name);
}

/// Bilinear rotation by `degrees` about the image center with zero fill.
/// Multiples of 90 degrees use exact sine/cosine so they permute pixels exactly.
template <typename T>
Tensor<T> rotate_image(const Tensor<T>& img, double degrees) {
    const std::size_t w = img.shape().back();
    const std::size_t h = img.shape()[img.rank() - 2];
    double c = std::cos(degrees * std::numbers::pi / 180.0);
    double s = std::sin(degrees * std::numbers::pi / 180.0);
    const double quarter = degrees / 90.0;
    if (quarter == std::round(quarter)) {
        const auto q = ((static_cast<long long>(std::round(quarter)) % 4) + 4) % 4;
        constexpr double kCos[4] = {1, 0, -1, 0};
        constexpr double kSin[4] = {0, 1, 0, -1};
        c = kCos[q];
        s = kSin[q];
    }
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-9 ? r : v;
    };
    const auto pixel = [&](long long x, long long y) -> double {
        if (x < 0 || y < 0 || x >= static_cast<long long>(w) || y >= static_cast<long long>(h)) return 0.0;
        return static_cast<double>(img[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)]);
    };
    Tensor<T> out(img.shape());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double sx = snap(cx + c * dx - s * dy);
            const double sy = snap(cy + s * dx + c * dy);
            const double x0 = std::floor(sx), y0 = std::floor(sy);
            const double fx = sx - x0, fy = sy - y0;
            const auto ix = static_cast<long long>(x0), iy = static_cast<long long>(y0);
            double v = (1 - fx) * (1 - fy) * pixel(ix, iy);
            if (fx > 0) v += fx * (1 - fy) * pixel(ix + 1, iy);
            if (fy > 0) v += (1 - fx) * fy * pixel(ix, iy + 1);
            if (fx > 0 && fy > 0) v += fx * fy * pixel(ix + 1, iy + 1);
            out[y * w + x] = static_cast<T>(v);
        }
    }
    return out;
}

/// Fixed-rule baseline: k rotations by uniform angles in [-max_degrees, +max_degrees].
inline GenerationReport baseline_rotate_augment(const dataio::DatasetManifest& manifest,
                                                std::size_t images_per_sample, const fs::path& out_root,
                                                std::uint64_t seed, double max_degrees, std::size_t image_side) {
    if (!(max_degrees > 0.0 && max_degrees <= 180.0)) {
        throw ValidationError("max_degrees must lie in (0, 180], got " + std::to_string(max_degrees));
    }
    const VariantFn variants = [&](const Tensor<float>& x, numcore::Rng& rng) {
        std::vector<Tensor<float>> outs;
        for (std::size_t k = 0; k < images_per_sample; ++k) {
            outs.push_back(rotate_image(x, rng.uniform(-max_degrees, max_degrees)));
        }
        return outs;
    };
    return expand_dataset(manifest, images_per_sample, out_root, seed, image_side, "rotation", variants,
                          rotated_file_name);
}

/// Decodes z_t = (1 - t) mu_a + t mu_b at `steps` evenly spaced t in [0, 1].
template <typename T>
std::vector<Tensor<T>> interpolate_latent(const vae::VaeModel<T>& model, const Tensor<T>& x_a, const Tensor<T>& x_b,
                                          std::size_t steps) {
    if (steps < 2) throw ValidationError("interpolate_latent: steps must be >= 2");
    const auto mu_a = vae::encode(model, x_a).first;
    const auto mu_b = vae::encode(model, x_b).first;
    if (mu_a.dim(0) != 1 || mu_b.dim(0) != 1) throw ShapeError("interpolate_latent: expects single images");
    std::vector<Tensor<T>> frames;
    for (std::size_t i = 0; i < steps; ++i) {
        Tensor<T> z = mu_a;
        if (i == steps - 1) {
            z = mu_b;
        } else if (i > 0) {
            const T t = static_cast<T>(static_cast<double>(i) / static_cast<double>(steps - 1));
            for (std::size_t j = 0; j < z.numel(); ++j) z[j] = (T{1} - t) * mu_a[j] + t * mu_b[j];
        }
        frames.push_back(vae::decode(model, z));
    }
    return frames;
}

}  // namespace vaesynth::synthgen
