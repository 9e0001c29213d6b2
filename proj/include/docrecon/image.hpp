#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace docrecon {

// Interleaved RGB image, row-major, values nominally in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // height * width * 3

    Image() = default;
    Image(int h, int w, float fill = 0.0f);

    float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    bool empty() const noexcept { return height == 0 || width == 0; }

    // Copy of the rectangle [y0, y0+h) x [x0, x0+w).
    Image crop(int y0, int x0, int h, int w) const;

    // Writes `src` with its top-left corner at (y0, x0); must fit.
    void paste(const Image& src, int y0, int x0);

    bool operator==(const Image&) const = default;
};

// Bilinear resampling with pixel-center alignment; resizing to the same size
// is the identity.
Image resize_bilinear(const Image& src, int out_h, int out_w);

// 8-bit PNG codec. Values are clamped to [0,1] and rounded on write.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

// Rounds every value to the nearest 8-bit level, i.e. what a PNG round trip does.
Image quantize8(const Image& img);

}  // namespace docrecon
