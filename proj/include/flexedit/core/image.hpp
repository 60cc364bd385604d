// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace flexedit {

/// RGB image [H, W, 3] with values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> rgb;  // row-major [H][W][3]

    Image() = default;
    Image(int h, int w, float fill = 0.0f);

    float& at(int y, int x, int ch) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
    float at(int y, int x, int ch) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
};

/// Single-channel 8-bit raster.
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;
};

/// Binary PPM (P6) and PGM (P5), maxval 255.
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

/// Rounds each channel to the nearest 8-bit level, as a save/load would.
Image quantize_8bit(const Image& image);

} // namespace flexedit
