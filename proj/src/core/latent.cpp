// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/latent.hpp"

#include <cmath>
#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit {

LatentGrid::LatentGrid(LatentShape s, std::vector<float> values, int step, double t)
    : shape(s), data(std::move(values)), step_index(step), t_value(t) {
    if (data.size() != shape.size()) {
        throw DimensionError("latent payload has " + std::to_string(data.size()) + " entries, shape requires " +
                             std::to_string(shape.size()));
    }
}

LatentGrid LatentGrid::zeros(LatentShape s, int step, double t) {
    return LatentGrid(s, std::vector<float>(s.size(), 0.0f), step, t);
}

bool LatentGrid::all_finite() const noexcept {
    for (float v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor LatentGrid::to_tensor() const {
    return Tensor({static_cast<std::uint32_t>(shape.h), static_cast<std::uint32_t>(shape.w),
                   static_cast<std::uint32_t>(shape.c)},
                  data);
}

LatentGrid LatentGrid::from_tensor(const Tensor& t, int step, double t_value) {
    if (t.rank() != 3) throw DimensionError("latent tensor must have rank 3");
    return LatentGrid({static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2])}, t.data,
                      step, t_value);
}

double mean_squared_error(const LatentGrid& a, const LatentGrid& b) {
    if (a.shape != b.shape) throw DimensionError("mean_squared_error: latent shapes differ");
    if (a.data.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

} // namespace flexedit
