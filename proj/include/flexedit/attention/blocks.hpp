// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "flexedit/core/tensor.hpp"

namespace flexedit::attn {

enum class Representation { logits, probabilities };

/// One layer/head of joint attention split by query/key modality. Text
/// tokens occupy the first `text_len` rows and columns.
struct JointAttentionBlocks {
    int layer = 0;
    int head = 0;
    Matrix t2t;  // [L, L]
    Matrix t2i;  // [L, N]
    Matrix i2t;  // [N, L]  image query, text key (I2T-CA)
    Matrix i2i;  // [N, N]  image query, image key (I2I-SA)
    Representation representation = Representation::probabilities;

    int text_len() const noexcept { return static_cast<int>(t2t.rows()); }
    int image_len() const noexcept { return static_cast<int>(i2i.rows()); }

    /// [[t2t, t2i], [i2t, i2i]]
    Matrix recompose() const;
};

/// Throws DimensionError if `text_len` exceeds the side of `full` or the
/// matrix is not square.
JointAttentionBlocks decompose_joint_attention(const Matrix& full, int text_len, int layer = 0, int head = 0,
                                               Representation representation = Representation::probabilities);

/// True when every row sums to 1 within `tol`.
bool rows_are_distributions(const Matrix& m, double tol = 1e-5);

} // namespace flexedit::attn
