#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace worldprobe {

static_assert(std::endian::native == std::endian::little,
              "binary streams are little-endian; big-endian hosts are unsupported");

// Raw float32 array files (".f32"): row-major, little-endian IEEE-754.

inline void write_f32(const std::filesystem::path& path, const std::vector<float>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write: " + path.string());
}

inline std::vector<float> read_f32(const std::filesystem::path& path,
                                   std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(in.tellg());
    if (bytes != expected_count * sizeof(float)) {
        throw std::runtime_error("shape mismatch: " + path.string() + " holds " +
                                 std::to_string(bytes) + " bytes, expected " +
                                 std::to_string(expected_count * sizeof(float)) +
                                 " (" + std::to_string(expected_count) + " float32)");
    }
    in.seekg(0, std::ios::beg);
    std::vector<float> data(expected_count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(expected_count * sizeof(float)));
    if (!in) throw std::runtime_error("short read: " + path.string());
    return data;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("short write: " + path.string());
}

}  // namespace worldprobe
