#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace vaesynth::synthgen {

struct ClassGeneration {
    std::string name;          // source class
    std::string output_dir;    // "<name>-reconstructed"
    std::size_t originals_found = 0;
    std::size_t synthetics_written = 0;
    std::vector<std::string> skipped;  // unreadable inputs
};

struct GenerationReport {
    std::string method;  // "vae" or "rotation"
    std::filesystem::path out_root;
    std::size_t images_per_sample = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
    std::vector<ClassGeneration> classes;

    std::size_t total_originals() const {
        std::size_t n = 0;
        for (const auto& c : classes) n += c.originals_found;
        return n;
    }
    std::size_t total_synthetics() const {
        std::size_t n = 0;
        for (const auto& c : classes) n += c.synthetics_written;
        return n;
    }
    std::size_t total_files() const { return total_originals() + total_synthetics(); }
};

/// Serialized form written as report.json. Wall-clock time is left out so that the
/// file is a pure function of (seed, model, manifest).
inline nlohmann::json report_to_json(const GenerationReport& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : r.classes) {
        classes.push_back({{"class", c.name},
                           {"output_dir", c.output_dir},
                           {"originals_found", c.originals_found},
                           {"synthetics_written", c.synthetics_written},
                           {"skipped", c.skipped}});
    }
    return {{"method", r.method},
            {"out_root", r.out_root.generic_string()},
            {"images_per_sample", r.images_per_sample},
            {"seed", r.seed},
            {"classes", classes},
            {"total_originals", r.total_originals()},
            {"total_synthetics", r.total_synthetics()},
            {"total_files", r.total_files()}};
}

}  // namespace vaesynth::synthgen
