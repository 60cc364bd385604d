// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "flexedit/core/tensor.hpp"
#include "flexedit/core/tokens.hpp"

namespace flexedit::attn {

/// I2T-CA adaptation. Column i of the result is cache_ca[:, f(i)] when the
/// target token i maps to a source token, else alpha * ca_target[:, i].
/// ca_target is [N, L_t], cache_ca is [N, L_s]; the result is [N, L_t].
Matrix adapt_i2t_ca(const Matrix& ca_target, const Matrix& cache_ca, const TokenMapping& mapping, double alpha);

/// Per-row index sets of the k largest entries, ties to the lower index.
/// Each set is returned in ascending index order; k is clamped to the row length.
using TopKIndexSet = std::vector<std::vector<int>>;

TopKIndexSet topk_rows(const Matrix& sa_source, int k);

struct SaAdaptStats {
    int guarded_rows = 0;  // rows whose target top-k mass was zero
};

/// I2I-SA adaptation. Inside the source's top-k set of row i the target
/// values are rescaled so the set carries the source's mass; elsewhere the
/// source values are kept. Rows whose target mass over the set is zero fall
/// back to the source row.
Matrix adapt_i2i_sa(const Matrix& sa_target, const Matrix& sa_source, int k, SaAdaptStats* stats = nullptr);

} // namespace flexedit::attn
