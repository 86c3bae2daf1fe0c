#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fpw {

/// Interleaved 8-bit raster, 1 (gray) or 3 (RGB) channels, row-major.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c = 1, std::uint8_t fill = 0);

    bool empty() const { return data.empty(); }
    std::size_t stride() const { return static_cast<std::size_t>(width) * channels; }

    std::uint8_t& at(int x, int y, int c = 0) {
        return data[static_cast<std::size_t>(y) * stride() + static_cast<std::size_t>(x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return data[static_cast<std::size_t>(y) * stride() + static_cast<std::size_t>(x) * channels + c];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace fpw
