// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/tensor_io.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <iterator>

#include "flexedit/core/errors.hpp"

namespace flexedit {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'R', 'T', 'N', '1'};
constexpr std::size_t kHeaderFixed = kMagic.size() + 2;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return v;
}

} // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
    if (t.rank() > kMaxTensorRank) throw DimensionError("tensor rank " + std::to_string(t.rank()) + " exceeds 4");
    if (t.data.size() != Tensor::element_count(t.dims)) throw DimensionError("tensor payload does not match dims");

    std::vector<std::uint8_t> out;
    out.reserve(kHeaderFixed + 4 * t.rank() + 4 * t.size());
    for (auto b : kMagic) out.push_back(b);
    out.push_back(kDtypeFloat32);
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims) put_u32(out, d);
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size()) throw FormatError(bytes.size(), "truncated magic");
    for (std::size_t i = 0; i < kMagic.size(); ++i) {
        if (bytes[i] != kMagic[i]) throw FormatError(i, "bad magic, expected RTN1");
    }
    if (bytes.size() < kHeaderFixed) throw FormatError(bytes.size(), "truncated header");
    if (bytes[4] != kDtypeFloat32) throw FormatError(4, "unsupported dtype code " + std::to_string(bytes[4]));
    const std::size_t rank = bytes[5];
    if (rank > kMaxTensorRank) throw FormatError(5, "rank " + std::to_string(rank) + " exceeds 4");

    std::size_t offset = kHeaderFixed;
    if (bytes.size() < offset + 4 * rank) throw FormatError(bytes.size(), "truncated dims");
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) {
        d = get_u32(bytes, offset);
        offset += 4;
    }

    const std::size_t count = Tensor::element_count(dims);
    const std::size_t expected = offset + 4 * count;
    if (bytes.size() < expected) {
        throw FormatError(bytes.size(), "truncated payload, expected " + std::to_string(expected) + " bytes");
    }
    if (bytes.size() > expected) throw FormatError(expected, "trailing bytes after payload");

    std::vector<float> data(count);
    for (auto& f : data) {
        f = std::bit_cast<float>(get_u32(bytes, offset));
        offset += 4;
    }
    return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    const auto bytes = encode_tensor(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes);
}

} // namespace flexedit
