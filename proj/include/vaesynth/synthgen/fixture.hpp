#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "vaesynth/dataio/manifest.hpp"
#include "vaesynth/dataio/pgm.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/rng.hpp"
#include "vaesynth/synthgen/preprocess.hpp"

namespace vaesynth::synthgen {

namespace fs = std::filesystem;

/// Procedural stand-in corpus: one geometric pattern per class plus Gaussian pixel noise.
struct FixtureSpec {
    std::vector<std::string> classes{"bottom-band", "clean", "cross", "side-band", "top-band"};
    std::size_t n_per_class = 10;
    std::size_t image_side = 64;
    double noise = 0.05;  // standard deviation of the additive noise
    std::uint64_t seed = 7;

    void validate() const {
        if (classes.empty()) throw ValidationError("fixture needs at least one class");
        if (n_per_class == 0) throw ValidationError("fixture n_per_class must be positive");
        if (image_side < 8) throw ValidationError("fixture image_side must be >= 8");
        if (!(noise >= 0.0)) throw ValidationError("fixture noise must be >= 0");
    }
};

inline constexpr double kFixtureBackground = 0.2;
inline constexpr double kFixtureForeground = 0.85;

/// Noise-free pattern for a named class, row-major side x side.
inline std::vector<double> fixture_pattern(const std::string& cls, std::size_t side) {
    std::vector<double> px(side * side, kFixtureBackground);
    const auto fill_rows = [&](std::size_t r0, std::size_t r1) {
        for (std::size_t y = r0; y < r1; ++y) std::fill_n(px.begin() + static_cast<std::ptrdiff_t>(y * side), side, kFixtureForeground);
    };
    const auto fill_cols = [&](std::size_t c0, std::size_t c1) {
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = c0; x < c1; ++x) px[y * side + x] = kFixtureForeground;
        }
    };
    if (cls == "top-band") {
        fill_rows(side / 8, 3 * side / 8);
    } else if (cls == "bottom-band") {
        fill_rows(5 * side / 8, 7 * side / 8);
    } else if (cls == "side-band") {
        fill_cols(5 * side / 8, 7 * side / 8);
    } else if (cls == "cross") {
        fill_rows(7 * side / 16, 9 * side / 16);
        fill_cols(7 * side / 16, 9 * side / 16);
    } else if (cls == "clean") {
        // background only
    } else {
        // Unknown names still get a distinct pattern: a diagonal stripe whose offset
        // is derived from the name.
        const std::size_t shift = numcore::fnv1a64(cls) % side;
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                if ((x + y + shift) % side < side / 4) px[y * side + x] = kFixtureForeground;
            }
        }
    }
    return px;
}

/// Image `index` of class `cls`, quantized to 8 bits.
inline dataio::GrayImage render_fixture_image(const FixtureSpec& spec, const std::string& cls, std::size_t index) {
    auto px = fixture_pattern(cls, spec.image_side);
    numcore::Rng rng = numcore::Rng::stream(spec.seed, "fixture/" + cls + "/" + std::to_string(index));
    dataio::GrayImage img(spec.image_side, spec.image_side);
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double v = std::clamp(px[i] + spec.noise * rng.normal(), 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

inline std::string fixture_file_name(const std::string& cls, std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_%03zu.pgm", index);
    return cls + buf;
}

/// Writes `<out_root>/<class>/<class>_NNN.pgm` for every class and returns the listing.
/// Existing class directories of the same names are replaced.
inline dataio::DatasetManifest make_fixture_dataset(const FixtureSpec& spec, const fs::path& out_root) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(out_root, ec);
    if (ec) throw IoError("cannot create " + out_root.string() + ": " + ec.message());
    dataio::DatasetManifest m;
    m.root = out_root;
    auto classes = spec.classes;
    std::sort(classes.begin(), classes.end());
    if (std::adjacent_find(classes.begin(), classes.end()) != classes.end()) {
        throw ValidationError("fixture class names must be unique");
    }
    for (const auto& cls : classes) {
        const fs::path dir = out_root / cls;
        fs::remove_all(dir, ec);
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        std::vector<fs::path> files;
        for (std::size_t i = 0; i < spec.n_per_class; ++i) {
            const fs::path path = dir / fixture_file_name(cls, i);
            dataio::write_pgm(render_fixture_image(spec, cls, i), path);
            files.push_back(path);
        }
        m.classes.push_back(cls);
        m.files.push_back(std::move(files));
    }
    return m;
}

}  // namespace vaesynth::synthgen
