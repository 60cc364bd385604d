// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <utility>
#include <vector>

#include "flexedit/core/config.hpp"
#include "flexedit/core/hooks.hpp"
#include "flexedit/core/tensor.hpp"

namespace flexedit::attn {

/// Source attention features of one layer/head.
struct AttentionFeatures {
    Matrix ca_source;  // I2T-CA [N, L_s]
    Matrix sa_source;  // I2I-SA [N, N]
};

/// Source features read from one evaluation at the extraction step.
/// Immutable once captured.
class FeatureCache {
public:
    int extraction_step = 0;
    int text_len = 0;   // L_s
    int image_len = 0;  // N
    std::map<std::pair<int, int>, AttentionFeatures> attention;  // (layer, head)
    std::map<int, Matrix> residual;                              // layer -> f(x)_image [N, d]

    /// Throw LookupError for absent entries.
    const AttentionFeatures& attention_at(int layer, int head) const;
    const Matrix& residual_at(int layer) const;

    bool has_attention(int layer) const;
    bool has_residual(int layer) const { return residual.contains(layer); }
    int heads_per_layer() const;
    LayerSet attention_layers() const;
    LayerSet residual_layers() const;
};

bool bit_equal(const FeatureCache& a, const FeatureCache& b);

/// Builds the cache from the capture events of one evaluation. Throws
/// CaptureError naming the first configured layer with no event.
FeatureCache capture_features(const std::vector<HookEvent>& events, const EditConfig& config, int extraction_step);

/// One tensor container per cached tensor plus `manifest.txt` with
/// (layer, head, kind, extraction_step, file) rows.
void export_cache(const FeatureCache& cache, const std::filesystem::path& dir);
FeatureCache import_cache(const std::filesystem::path& dir);

} // namespace flexedit::attn
