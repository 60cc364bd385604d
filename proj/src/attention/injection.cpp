// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/attention/injection.hpp"

#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit::attn {

Matrix build_injected_row_blocks(const JointAttentionBlocks& target, const AttentionFeatures& cached,
                                 const TokenMapping& mapping, double alpha, int k, StepFlags flags,
                                 SaAdaptStats* stats) {
    const Eigen::Index L = target.i2t.cols();
    const Eigen::Index N = target.i2i.rows();
    Matrix rows(N, L + N);
    rows.leftCols(L) = target.i2t;
    rows.rightCols(N) = target.i2i;

    if (flags.ca) {
        if (cached.ca_source.rows() != N) {
            throw InjectionError(target.layer, "cached I2T-CA has " + std::to_string(cached.ca_source.rows()) +
                                                   " image rows, evaluation has " + std::to_string(N));
        }
        if (mapping.target_size() != L) {
            throw InjectionError(target.layer, "token mapping covers " + std::to_string(mapping.target_size()) +
                                                   " tokens, evaluation has " + std::to_string(L));
        }
        rows.leftCols(L) = adapt_i2t_ca(target.i2t, cached.ca_source, mapping, alpha);
    }
    if (flags.sa) {
        if (cached.sa_source.rows() != N || cached.sa_source.cols() != N) {
            throw InjectionError(target.layer, "cached I2I-SA shape does not match the evaluation");
        }
        rows.rightCols(N) = flags.sa_adapt ? adapt_i2i_sa(target.i2i, cached.sa_source, k, stats) : cached.sa_source;
    }
    return rows;
}

void inject_head(Matrix& full, int text_len, int layer, int head, const AttentionFeatures& cached,
                 const TokenMapping& mapping, double alpha, int k, StepFlags flags, SaAdaptStats* stats) {
    if (!flags.ca && !flags.sa) return;
    const auto blocks = decompose_joint_attention(full, text_len, layer, head);
    const Eigen::Index N = blocks.image_len();
    full.bottomRows(N) = build_injected_row_blocks(blocks, cached, mapping, alpha, k, flags, stats);
}

} // namespace flexedit::attn
