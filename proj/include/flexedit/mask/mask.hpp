// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "flexedit/core/latent.hpp"
#include "flexedit/core/tensor.hpp"

namespace flexedit::mask {

/// Nonnegative per-position relevance of the blended word, [h, w].
struct SaliencyMap {
    int h = 0;
    int w = 0;
    std::vector<double> values;

    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
};

/// Binary edit region; 1 marks positions the edit may change.
struct EditMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> bits;
    int step_index = 0;

    static EditMask filled(int h, int w, bool value, int step = 0);

    bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * w + x] != 0; }
    std::size_t count() const noexcept;
    double coverage() const noexcept;
    EditMask complement() const;

    friend bool operator==(const EditMask&, const EditMask&) = default;
};

/// Mean of the word's I2T-CA columns, then mean over the given blocks
/// (one [N, L] block per layer/head), reshaped to [h, w].
SaliencyMap word_saliency(std::span<const Matrix> i2t_blocks, const std::vector<int>& word_tokens, int h, int w);

/// Normalized Gaussian weights for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable Gaussian blur with half-sample symmetric (mirror) borders.
SaliencyMap gaussian_smooth(const SaliencyMap& map, double sigma, int radius);

/// Lowest threshold bin t maximizing the between-class variance of the
/// split {bins <= t} / {bins > t}.
int otsu_histogram_threshold(std::span<const std::uint64_t> histogram);

struct OtsuResult {
    EditMask mask;
    int threshold_bin = 0;
    bool degenerate = false;  // constant map, mask is all ones
    std::vector<std::uint64_t> histogram;
};

/// Min-max normalizes the map into `bins` bins and keeps positions whose
/// bin exceeds the Otsu threshold.
OtsuResult otsu_threshold(const SaliencyMap& map, int bins);

/// z_t where the mask is set, z_source elsewhere, broadcast over channels.
LatentGrid blend_latents(const LatentGrid& z_t, const LatentGrid& z_source, const EditMask& mask);

/// Resizes a mask to [h, w]. Upscaling repeats cells; downscaling marks a
/// cell when any covered pixel is set. Sizes must divide evenly.
EditMask resample_mask(const EditMask& mask, int h, int w);

/// 8-bit single-channel export (0 / 255); import thresholds at 128.
void write_mask(const EditMask& mask, const std::filesystem::path& path);
EditMask read_mask(const std::filesystem::path& path);

} // namespace flexedit::mask
