// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/attention/blocks.hpp"

#include <cmath>
#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit::attn {

Matrix JointAttentionBlocks::recompose() const {
    const Eigen::Index L = t2t.rows();
    const Eigen::Index N = i2i.rows();
    Matrix full(L + N, L + N);
    full.topLeftCorner(L, L) = t2t;
    full.topRightCorner(L, N) = t2i;
    full.bottomLeftCorner(N, L) = i2t;
    full.bottomRightCorner(N, N) = i2i;
    return full;
}

JointAttentionBlocks decompose_joint_attention(const Matrix& full, int text_len, int layer, int head,
                                               Representation representation) {
    if (full.rows() != full.cols()) {
        throw DimensionError("joint attention must be square, got [" + std::to_string(full.rows()) + ", " +
                             std::to_string(full.cols()) + "]");
    }
    if (text_len < 0 || text_len > full.rows()) {
        throw DimensionError("text length " + std::to_string(text_len) + " exceeds matrix side " +
                             std::to_string(full.rows()));
    }
    const Eigen::Index L = text_len;
    const Eigen::Index N = full.rows() - L;
    JointAttentionBlocks b;
    b.layer = layer;
    b.head = head;
    b.representation = representation;
    b.t2t = full.topLeftCorner(L, L);
    b.t2i = full.topRightCorner(L, N);
    b.i2t = full.bottomLeftCorner(N, L);
    b.i2i = full.bottomRightCorner(N, N);
    return b;
}

bool rows_are_distributions(const Matrix& m, double tol) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) sum += m(r, c);
        if (!(std::abs(sum - 1.0) <= tol)) return false;
    }
    return true;
}

} // namespace flexedit::attn
