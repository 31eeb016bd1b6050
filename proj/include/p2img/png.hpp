#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace p2img {

// Interleaved RGB, 3 bytes per pixel, row-major.
struct Rgb8Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;

    bool operator==(const Rgb8Image&) const = default;
    uint8_t& at(int x, int y, int ch) {
        return pixels[static_cast<size_t>((y * width + x) * 3 + ch)];
    }
    uint8_t at(int x, int y, int ch) const {
        return pixels[static_cast<size_t>((y * width + x) * 3 + ch)];
    }
};

// 8-bit RGB PNG with stored (uncompressed) deflate blocks. Byte output is a
// pure function of the pixel data, which the run-determinism contract relies on.
std::vector<uint8_t> encode_png_rgb8(const Rgb8Image& img);

// Inverse of encode_png_rgb8; rejects PNGs outside that subset.
Rgb8Image decode_png_rgb8(const std::vector<uint8_t>& bytes);

// (width, height) from the IHDR chunk of any PNG.
std::pair<int, int> png_dimensions(const std::vector<uint8_t>& bytes);

} // namespace p2img
