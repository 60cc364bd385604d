// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "flexedit/attention/adaptation.hpp"
#include "flexedit/attention/blocks.hpp"
#include "flexedit/attention/feature_cache.hpp"
#include "flexedit/core/tokens.hpp"

namespace flexedit::attn {

/// Which key features are injected at one step/layer.
struct StepFlags {
    bool ca = false;        // I2T-CA injection with adaptation
    bool sa = false;        // I2I-SA injection
    bool sa_adapt = false;  // top-k adaptation of the injected I2I-SA (needs sa)
};

/// Image-query rows [N, L_t + N] of one head after injection: text-key
/// columns from the I2T-CA adaptation when `flags.ca`, image-key columns from
/// the I2I-SA adaptation when `flags.sa_adapt`, or the raw cached I2I-SA when
/// only `flags.sa`. Inactive segments keep the target's values.
Matrix build_injected_row_blocks(const JointAttentionBlocks& target, const AttentionFeatures& cached,
                                 const TokenMapping& mapping, double alpha, int k, StepFlags flags,
                                 SaAdaptStats* stats = nullptr);

/// Applies the injection to one head's full joint attention in place; the
/// text-query rows are left untouched.
void inject_head(Matrix& full, int text_len, int layer, int head, const AttentionFeatures& cached,
                 const TokenMapping& mapping, double alpha, int k, StepFlags flags, SaAdaptStats* stats = nullptr);

} // namespace flexedit::attn
