#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"

namespace vaesynth::dataio {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
    std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary P5, maxval 255, no comments.
inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
    if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height) {
        throw ValidationError("encode_pgm: image dimensions do not match pixel count");
    }
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

/// Parses binary P5. Header comments are skipped; errors carry the byte offset.
inline GrayImage decode_pgm(const std::vector<unsigned char>& bytes) {
    std::size_t pos = 0;
    const auto fail = [&](const std::string& msg) -> FormatError {
        return FormatError("pgm: " + msg + " at byte offset " + std::to_string(pos));
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("bad magic (expected P5)");
    pos = 2;
    const auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    const auto read_uint = [&](const char* what) {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail(std::string("expected ") + what);
        std::uint64_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1u << 30)) throw fail(std::string(what) + " too large");
            ++pos;
        }
        return static_cast<std::size_t>(v);
    };
    const std::size_t w = read_uint("width");
    const std::size_t h = read_uint("height");
    const std::size_t maxval = read_uint("maxval");
    if (w == 0 || h == 0) throw fail("zero image dimension");
    if (maxval != 255) throw fail("unsupported maxval " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("missing whitespace after maxval");
    ++pos;
    if (bytes.size() - pos < w * h) {
        throw fail("truncated payload: " + std::to_string(bytes.size() - pos) + " of " + std::to_string(w * h) +
                   " pixel bytes");
    }
    GrayImage img(w, h);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), w * h, img.pixels.begin());
    return img;
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    try {
        return decode_pgm(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
    const auto bytes = encode_pgm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace vaesynth::dataio
