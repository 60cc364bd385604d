// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit {

Image::Image(int h, int w, float fill)
    : height(h), width(w), rgb(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, fill) {}

namespace {

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Reads the next header integer, skipping whitespace and # comments.
int read_header_int(std::istream& in, const std::filesystem::path& path) {
    int c = in.peek();
    while (c != EOF) {
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else {
            break;
        }
        c = in.peek();
    }
    int value = 0;
    if (!(in >> value)) throw CodecError("malformed netpbm header in " + path.string());
    return value;
}

std::vector<std::uint8_t> read_netpbm(const std::filesystem::path& path, const char* magic, int channels, int& height,
                                      int& width) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CodecError("cannot open " + path.string());
    std::string m(2, '\0');
    in.read(m.data(), 2);
    if (m != magic) throw CodecError(path.string() + " is not a " + magic + " file");
    width = read_header_int(in, path);
    height = read_header_int(in, path);
    const int maxval = read_header_int(in, path);
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw CodecError(path.string() + ": only 8-bit rasters with positive size are supported");
    }
    in.get();  // single whitespace byte before the raster
    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size())) throw CodecError(path.string() + ": truncated raster");
    return data;
}

void write_netpbm(const std::filesystem::path& path, const char* magic, int height, int width,
                  const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CodecError("cannot open " + path.string() + " for writing");
    out << magic << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

} // namespace

void write_ppm(const Image& image, const std::filesystem::path& path) {
    std::vector<std::uint8_t> data(image.rgb.size());
    std::transform(image.rgb.begin(), image.rgb.end(), data.begin(), to_byte);
    write_netpbm(path, "P6", image.height, image.width, data);
}

Image read_ppm(const std::filesystem::path& path) {
    int h = 0, w = 0;
    const auto data = read_netpbm(path, "P6", 3, h, w);
    Image image(h, w);
    for (std::size_t i = 0; i < data.size(); ++i) image.rgb[i] = static_cast<float>(data[i]) / 255.0f;
    return image;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
    write_netpbm(path, "P5", image.height, image.width, image.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    GrayImage image;
    image.pixels = read_netpbm(path, "P5", 1, image.height, image.width);
    return image;
}

Image quantize_8bit(const Image& image) {
    Image out = image;
    for (auto& v : out.rgb) v = static_cast<float>(to_byte(v)) / 255.0f;
    return out;
}

} // namespace flexedit
