// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/tensor.hpp"

#include <cstring>
#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit {

Tensor::Tensor(std::vector<std::uint32_t> d, std::vector<float> values) : dims(std::move(d)), data(std::move(values)) {
    if (data.size() != element_count(dims)) {
        throw DimensionError("tensor payload has " + std::to_string(data.size()) + " elements, dims require " +
                             std::to_string(element_count(dims)));
    }
}

std::size_t Tensor::element_count(const std::vector<std::uint32_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

Tensor Tensor::from_matrix(const Matrix& m) {
    std::vector<float> values(m.data(), m.data() + m.size());
    return Tensor({static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, std::move(values));
}

Matrix Tensor::to_matrix() const {
    if (rank() != 2) throw DimensionError("to_matrix requires a rank-2 tensor, got rank " + std::to_string(rank()));
    Matrix m(dims[0], dims[1]);
    std::memcpy(m.data(), data.data(), data.size() * sizeof(float));
    return m;
}

namespace {

bool bits_equal(const float* a, const float* b, std::size_t n) {
    return n == 0 || std::memcmp(a, b, n * sizeof(float)) == 0;
}

} // namespace

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.dims == b.dims && bits_equal(a.data.data(), b.data.data(), a.data.size());
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && bits_equal(a.data(), b.data(), a.size());
}

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && bits_equal(a.data(), b.data(), a.size());
}

} // namespace flexedit
