// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flexedit/core/tensor.hpp"

namespace flexedit {

// Container layout: "RTN1", dtype (u8, 0 = float32), rank (u8),
// rank x u32 little-endian dims, then the little-endian payload.
inline constexpr std::uint8_t kDtypeFloat32 = 0;
inline constexpr std::size_t kMaxTensorRank = 4;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

} // namespace flexedit
