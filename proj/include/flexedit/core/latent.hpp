// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "flexedit/core/tensor.hpp"

namespace flexedit {

struct LatentShape {
    int h = 0;
    int w = 0;
    int c = 0;

    std::size_t spatial() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t size() const noexcept { return spatial() * c; }

    friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

/// Image-side latent [h, w, c] tagged with the schedule position it belongs to.
struct LatentGrid {
    LatentShape shape;
    std::vector<float> data;  // row-major [h][w][c]
    int step_index = 0;
    double t_value = 0.0;

    LatentGrid() = default;
    LatentGrid(LatentShape s, std::vector<float> values, int step, double t);

    static LatentGrid zeros(LatentShape s, int step = 0, double t = 0.0);

    float& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * shape.w + x) * shape.c + ch]; }
    float at(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * shape.w + x) * shape.c + ch]; }

    bool all_finite() const noexcept;

    Tensor to_tensor() const;
    static LatentGrid from_tensor(const Tensor& t, int step, double t_value);
};

/// Mean squared difference over all entries; shapes must agree.
double mean_squared_error(const LatentGrid& a, const LatentGrid& b);

} // namespace flexedit
