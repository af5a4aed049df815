#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vaesynth/dataio/csv.hpp"
#include "vaesynth/errors.hpp"
#include "vaesynth/latentmap/projection.hpp"

namespace vaesynth::latentmap {

inline void write_projection_csv(const Projection2D& proj, const std::vector<std::string>& labels,
                                 const std::filesystem::path& path) {
    if (labels.size() != proj.size()) throw ShapeError("projection csv: one label per point required");
    std::vector<dataio::CsvRow> rows;
    rows.reserve(proj.size());
    for (std::size_t i = 0; i < proj.size(); ++i) {
        rows.push_back({proj.coords[i][0], proj.coords[i][1], labels[i]});
    }
    dataio::write_csv(rows, {"x", "y", "class_label"}, path);
}

inline constexpr std::array<const char*, 10> kPalette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

/// Standalone 600x600 scatter plot; color = palette[class index % 10].
inline std::string render_projection_svg(const Projection2D& proj, const std::vector<std::size_t>& class_index,
                                         const std::vector<std::string>& class_names) {
    if (class_index.size() != proj.size()) throw ShapeError("projection svg: one class index per point required");
    constexpr double kSize = 600.0, kMargin = 40.0;
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    if (!proj.coords.empty()) {
        xmin = xmax = proj.coords[0][0];
        ymin = ymax = proj.coords[0][1];
        for (const auto& c : proj.coords) {
            xmin = std::min(xmin, c[0]);
            xmax = std::max(xmax, c[0]);
            ymin = std::min(ymin, c[1]);
            ymax = std::max(ymax, c[1]);
        }
    }
    const double xs = xmax > xmin ? (kSize - 2 * kMargin) / (xmax - xmin) : 0.0;
    const double ys = ymax > ymin ? (kSize - 2 * kMargin) / (ymax - ymin) : 0.0;
    std::string svg =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 600 600\" width=\"600\" height=\"600\">\n"
        "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    char buf[160];
    for (std::size_t i = 0; i < proj.size(); ++i) {
        const double px = xs > 0 ? kMargin + (proj.coords[i][0] - xmin) * xs : kSize / 2;
        const double py = ys > 0 ? kSize - kMargin - (proj.coords[i][1] - ymin) * ys : kSize / 2;
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\"/>\n", px, py,
                      kPalette[class_index[i] % kPalette.size()]);
        svg += buf;
    }
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        std::snprintf(buf, sizeof(buf), "<rect x=\"8\" y=\"%zu\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                      8 + 16 * c, kPalette[c % kPalette.size()]);
        svg += buf;
        svg += "<text x=\"24\" y=\"" + std::to_string(17 + 16 * c) + "\" font-size=\"12\" font-family=\"sans-serif\">" +
               class_names[c] + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

inline void write_projection_svg(const Projection2D& proj, const std::vector<std::size_t>& class_index,
                                 const std::vector<std::string>& class_names, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << render_projection_svg(proj, class_index, class_names);
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace vaesynth::latentmap
