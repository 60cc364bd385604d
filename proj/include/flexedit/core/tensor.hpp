// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace flexedit {

/// Dense row-major float matrix used for attention blocks and features.
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rank-N float tensor with row-major storage. The payload of a rank-0
/// tensor holds exactly one element.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    Tensor() : data(1, 0.0f) {}
    Tensor(std::vector<std::uint32_t> d, std::vector<float> values);

    static std::size_t element_count(const std::vector<std::uint32_t>& dims);

    std::size_t rank() const noexcept { return dims.size(); }
    std::size_t size() const noexcept { return data.size(); }

    static Tensor from_matrix(const Matrix& m);
    Matrix to_matrix() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// True when every bit of the two payloads agrees (NaN payloads included).
bool bit_equal(const Tensor& a, const Tensor& b);
bool bit_equal(const Matrix& a, const Matrix& b);
bool bit_equal(const std::vector<float>& a, const std::vector<float>& b);

} // namespace flexedit
