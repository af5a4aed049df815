#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "vaesynth/errors.hpp"

namespace vaesynth::dataio {

using CsvCell = std::variant<std::string, double, long long>;
using CsvRow = std::vector<CsvCell>;

/// Shortest text that parses back to the same double; 0.5 prints as "0.5".
inline std::string format_float(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string render_cell(const CsvCell& cell) {
    if (const auto* s = std::get_if<std::string>(&cell)) return csv_escape(*s);
    if (const auto* d = std::get_if<double>(&cell)) return format_float(*d);
    return std::to_string(std::get<long long>(cell));
}

inline std::string render_csv(const std::vector<CsvRow>& rows, const std::vector<std::string>& header) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(header[i]);
    }
    out += '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) {
            throw ValidationError("csv row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                                  " cells, header has " + std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < rows[r].size(); ++i) {
            if (i) out += ',';
            out += render_cell(rows[r][i]);
        }
        out += '\n';
    }
    return out;
}

/// LF line endings, quoted fields only where needed, floats in shortest round-trip form.
inline void write_csv(const std::vector<CsvRow>& rows, const std::vector<std::string>& header,
                      const std::filesystem::path& path) {
    const std::string text = render_csv(rows, header);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace vaesynth::dataio
