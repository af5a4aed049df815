#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vaesynth/dataio/manifest.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/rng.hpp"

namespace vaesynth::evalkit {

using dataio::DatasetManifest;

struct SplitSpec {
    std::array<double, 3> ratios{0.8, 0.1, 0.1};  // train, validation, test
    std::uint64_t seed = 0;

    void validate() const {
        double sum = 0.0;
        for (double r : ratios) {
            if (!(r > 0.0)) throw ValidationError("split ratios must all be > 0");
            sum += r;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    }
};

struct Split {
    DatasetManifest train;
    DatasetManifest validation;
    DatasetManifest test;
};

/// Largest-remainder allocation of n items over the ratios; ties go to the lower index.
inline std::array<std::size_t, 3> allocate_counts(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = static_cast<double>(n) * ratios[i];
        // round away representation noise such as 100 * 0.1 = 10.000000000000002
        const double snapped = std::abs(quota - std::round(quota)) < 1e-9 ? std::round(quota) : quota;
        counts[i] = static_cast<std::size_t>(std::floor(snapped));
        rem[i] = snapped - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
    return counts;
}

/// Optional sub-stratum key per file; files with different keys are allocated separately
/// inside their class so every output slice carries each kind in proportion.
using StratumFn = std::function<std::string(const std::filesystem::path&)>;

/// Per-class (and per-stratum) seeded shuffle, then contiguous slicing by
/// largest-remainder counts. The three outputs partition the input.
inline Split stratified_split(const DatasetManifest& m, const SplitSpec& spec, const StratumFn& stratum = {}) {
    spec.validate();
    Split out;
    for (auto* part : {&out.train, &out.validation, &out.test}) {
        part->root = m.root;
        part->classes = m.classes;
        part->files.assign(m.classes.size(), {});
    }
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
        if (m.files[c].size() < 3) {
            throw ValidationError("class '" + m.classes[c] + "' has " + std::to_string(m.files[c].size()) +
                                  " images; a 3-way split needs at least 3");
        }
        std::map<std::string, std::vector<std::filesystem::path>> strata;
        for (const auto& f : m.files[c]) strata[stratum ? stratum(f) : std::string()].push_back(f);
        for (auto& [key, files] : strata) {
            numcore::Rng rng = numcore::Rng::stream(spec.seed, "split/" + m.classes[c] + "/" + key);
            rng.shuffle(files);
            const auto counts = allocate_counts(files.size(), spec.ratios);
            auto it = files.begin();
            for (std::size_t part = 0; part < 3; ++part) {
                auto& dst = (part == 0 ? out.train : part == 1 ? out.validation : out.test).files[c];
                dst.insert(dst.end(), it, it + static_cast<std::ptrdiff_t>(counts[part]));
                it += static_cast<std::ptrdiff_t>(counts[part]);
            }
        }
    }
    return out;
}

}  // namespace vaesynth::evalkit
