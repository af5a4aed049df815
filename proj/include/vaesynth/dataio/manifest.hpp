#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vaesynth/errors.hpp"

namespace vaesynth::dataio {

namespace fs = std::filesystem;

/// Directory-per-class image listing. Class names are unique and sorted.
struct DatasetManifest {
    fs::path root;
    std::vector<std::string> classes;
    std::vector<std::vector<fs::path>> files;  // parallel to classes, each sorted
    std::size_t skipped_files = 0;             // non-PGM entries ignored during the scan

    std::size_t num_classes() const noexcept { return classes.size(); }
    std::size_t count(std::size_t c) const { return files.at(c).size(); }
    std::size_t total() const noexcept {
        std::size_t n = 0;
        for (const auto& f : files) n += f.size();
        return n;
    }

    std::size_t class_index(const std::string& name) const {
        const auto it = std::find(classes.begin(), classes.end(), name);
        if (it == classes.end()) throw ValidationError("unknown class '" + name + "'");
        return static_cast<std::size_t>(it - classes.begin());
    }

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline bool is_pgm_path(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm";
}

/// One class per subdirectory of `root`; PGM files only, sorted by file name.
inline DatasetManifest scan_manifest(const fs::path& root) {
    std::error_code ec;
    if (!fs::is_directory(root, ec)) throw ValidationError("dataset root is not a directory: " + root.string());
    DatasetManifest m;
    m.root = root;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            dirs.push_back(entry.path());
        }
    }
    if (dirs.empty()) throw ValidationError("dataset root has no class directories: " + root.string());
    std::sort(dirs.begin(), dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& dir : dirs) {
        std::vector<fs::path> images;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            if (is_pgm_path(entry.path())) {
                images.push_back(entry.path());
            } else {
                ++m.skipped_files;
            }
        }
        const std::string name = dir.filename().string();
        if (images.empty()) throw ValidationError("class '" + name + "' has no images (" + dir.string() + ")");
        std::sort(images.begin(), images.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
        m.classes.push_back(name);
        m.files.push_back(std::move(images));
    }
    return m;
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json counts = nlohmann::json::object();
    for (std::size_t c = 0; c < m.classes.size(); ++c) counts[m.classes[c]] = m.files[c].size();
    return {{"root", m.root.generic_string()}, {"classes", m.classes}, {"counts", counts}, {"total", m.total()}};
}

}  // namespace vaesynth::dataio
