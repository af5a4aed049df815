#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/vae/model.hpp"

namespace vaesynth::vae {

// Model file layout (all integers little-endian):
//   "VAE1" | mode u8 | image_side u32 | latent_dim u32 | parameters in ParamSet order.
// Mode 0 stores parameters as 32-bit floats, mode 1 as 64-bit floats.
inline constexpr std::array<char, 4> kModelMagic{'V', 'A', 'E', '1'};
inline constexpr std::size_t kModelHeaderBytes = 4 + 1 + 4 + 4;

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

template <typename T>
std::vector<unsigned char> serialize_model(const VaeModel<T>& model) {
    std::vector<unsigned char> out(kModelMagic.begin(), kModelMagic.end());
    out.push_back(static_cast<unsigned char>(model.mode()));
    detail::put_u32(out, static_cast<std::uint32_t>(model.image_side()));
    detail::put_u32(out, static_cast<std::uint32_t>(model.latent_dim()));
    for (const auto& p : model.params()) {
        for (T v : p.value.data()) {
            if constexpr (std::is_same_v<T, float>) {
                detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
            } else {
                detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
            }
        }
    }
    return out;
}

struct ModelHeader {
    NumericMode mode;
    std::size_t image_side;
    std::size_t latent_dim;
};

inline ModelHeader parse_model_header(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < kModelHeaderBytes) {
        throw FormatError("model file truncated: " + std::to_string(bytes.size()) + " bytes, header needs " +
                          std::to_string(kModelHeaderBytes));
    }
    if (!std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin())) {
        throw FormatError("not a model file: bad magic (expected \"VAE1\")");
    }
    const unsigned mode = bytes[4];
    if (mode > 1) throw FormatError("unsupported numeric mode byte " + std::to_string(mode));
    return {static_cast<NumericMode>(mode), static_cast<std::size_t>(detail::get_le(&bytes[5], 4)),
            static_cast<std::size_t>(detail::get_le(&bytes[9], 4))};
}

/// Rejects truncated, oversized, wrong-magic or wrong-mode input without
/// producing a partial model.
template <typename T>
VaeModel<T> deserialize_model(const std::vector<unsigned char>& bytes) {
    const auto h = parse_model_header(bytes);
    if (h.mode != mode_of<T>()) {
        throw FormatError(std::string("model numeric mode is ") + (h.mode == NumericMode::f32 ? "f32" : "f64") +
                          ", caller expects " + (mode_of<T>() == NumericMode::f32 ? "f32" : "f64"));
    }
    VaeModel<T> model = [&] {
        try {
            return VaeModel<T>(h.image_side, h.latent_dim);
        } catch (const ValidationError& e) {
            throw FormatError(std::string("model file has invalid dimensions: ") + e.what());
        }
    }();
    const std::size_t expected = kModelHeaderBytes + model.params().element_count() * sizeof(T);
    if (bytes.size() != expected) {
        throw FormatError("model file " + std::string(bytes.size() < expected ? "truncated" : "oversized") + ": " +
                          std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
    }
    std::size_t off = kModelHeaderBytes;
    for (auto& p : model.params()) {
        for (auto& v : p.value.data()) {
            if constexpr (std::is_same_v<T, float>) {
                v = std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(&bytes[off], 4)));
            } else {
                v = std::bit_cast<double>(detail::get_le(&bytes[off], 8));
            }
            off += sizeof(T);
        }
    }
    return model;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

template <typename T>
void save_model(const VaeModel<T>& model, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_model(model));
}

template <typename T>
VaeModel<T> load_model(const std::filesystem::path& path) {
    return deserialize_model<T>(read_file_bytes(path));
}

}  // namespace vaesynth::vae
