// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flexedit/backend/toy_backend.hpp"
#include "flexedit/core/config.hpp"
#include "flexedit/core/image.hpp"
#include "flexedit/core/tensor.hpp"
#include "flexedit/core/tokens.hpp"

namespace flexedit::testing {

// Seeded generators used by the property tests. They use std::mt19937_64
// directly so the library's own Rng is not its own oracle.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : engine_(seed) {}

    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double real(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    bool coin(double p = 0.5) { return real() < p; }
    std::uint64_t u64() { return engine_(); }

    Matrix matrix(int rows, int cols, double lo = -1.0, double hi = 1.0) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(real(lo, hi));
        return m;
    }

    // Positive rows summing to one; `ties` quantizes values so duplicates occur.
    Matrix stochastic(int rows, int cols, bool ties = false) {
        Matrix m(rows, cols);
        for (int r = 0; r < rows; ++r) {
            double sum = 0.0;
            for (int c = 0; c < cols; ++c) {
                double v = real(0.0, 1.0);
                if (ties) v = std::floor(v * 4.0) / 4.0;
                m(r, c) = static_cast<float>(v);
                sum += m(r, c);
            }
            if (sum == 0.0) {
                m.row(r).setConstant(1.0f / static_cast<float>(cols));
            } else {
                for (int c = 0; c < cols; ++c) m(r, c) = static_cast<float>(m(r, c) / sum);
            }
        }
        return m;
    }

    TokenMapping mapping(int target_size, int source_size, double p_unmapped = 0.3) {
        std::vector<std::optional<int>> f(static_cast<std::size_t>(target_size));
        for (auto& e : f) {
            if (source_size > 0 && !coin(p_unmapped)) e = integer(0, source_size - 1);
        }
        return TokenMapping(std::move(f), source_size);
    }

    std::vector<float> floats(std::size_t n, double lo = -1.0, double hi = 1.0) {
        std::vector<float> v(n);
        for (auto& x : v) x = static_cast<float>(real(lo, hi));
        return v;
    }

private:
    std::mt19937_64 engine_;
};

// Blocky test image: each 8x8 tile gets one seeded colour.
inline Image tiled_image(int height, int width, std::uint64_t seed, int tile = 8) {
    Gen g(seed);
    Image img(height, width);
    const int ty = (height + tile - 1) / tile;
    const int tx = (width + tile - 1) / tile;
    std::vector<float> colours = g.floats(static_cast<std::size_t>(ty * tx * 3), 0.05, 0.95);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = colours[((y / tile) * tx + x / tile) * 3 + c];
    return img;
}

// The 12-layer toy model with layer sets scaled to it: attention from the
// last double block on, residuals on the last three double blocks.
inline EditConfig small_config(int T = 28) {
    EditConfig c = parse_config("", {{"T", std::to_string(T)}, {"n_noising", std::to_string(std::min(7, T - 1))}});
    c.attn_layers = layer_range(3, 11);
    c.res_layers = layer_range(1, 3);
    return c;
}

inline const toy::ToyBackend& small_backend() {
    static const auto backend = toy::build_backend(toy::BackendSpec{});
    return *backend;
}

inline const toy::ToyBackend& flux_backend() {
    static const auto backend = toy::build_backend(toy::BackendSpec::flux_layout());
    return *backend;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("flexedit_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace flexedit::testing
