// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/attention/adaptation.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "flexedit/core/errors.hpp"

namespace flexedit::attn {

Matrix adapt_i2t_ca(const Matrix& ca_target, const Matrix& cache_ca, const TokenMapping& mapping, double alpha) {
    if (mapping.target_size() != ca_target.cols()) {
        throw MappingError("mapping covers " + std::to_string(mapping.target_size()) + " target tokens, I2T-CA has " +
                           std::to_string(ca_target.cols()) + " columns");
    }
    if (ca_target.rows() != cache_ca.rows()) {
        throw DimensionError("target and cached I2T-CA have different image token counts");
    }
    const float scale = static_cast<float>(alpha);
    Matrix out(ca_target.rows(), ca_target.cols());
    for (Eigen::Index i = 0; i < ca_target.cols(); ++i) {
        const auto f = mapping[static_cast<int>(i)];
        if (f) {
            if (*f < 0 || *f >= cache_ca.cols()) {
                throw MappingError("target token " + std::to_string(i) + " maps to source token " +
                                   std::to_string(*f) + ", cache has " + std::to_string(cache_ca.cols()));
            }
            out.col(i) = cache_ca.col(*f);
        } else {
            out.col(i) = scale * ca_target.col(i);
        }
    }
    return out;
}

TopKIndexSet topk_rows(const Matrix& sa_source, int k) {
    const int n = static_cast<int>(sa_source.cols());
    const int kk = std::clamp(k, 0, n);
    TopKIndexSet sets(static_cast<std::size_t>(sa_source.rows()));
    if (kk == 0) return sets;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < sa_source.rows(); ++r) {
        std::iota(order.begin(), order.end(), 0);
        auto row = sa_source.row(r);
        std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&row](int a, int b) {
            return row(a) > row(b) || (row(a) == row(b) && a < b);
        });
        auto& set = sets[static_cast<std::size_t>(r)];
        set.assign(order.begin(), order.begin() + kk);
        std::sort(set.begin(), set.end());
    }
    return sets;
}

Matrix adapt_i2i_sa(const Matrix& sa_target, const Matrix& sa_source, int k, SaAdaptStats* stats) {
    if (sa_target.rows() != sa_source.rows() || sa_target.cols() != sa_source.cols()) {
        throw DimensionError("target and source I2I-SA shapes differ");
    }
    Matrix out = sa_source;
    const auto sets = topk_rows(sa_source, k);
    int guarded = 0;
    for (Eigen::Index r = 0; r < sa_source.rows(); ++r) {
        const auto& set = sets[static_cast<std::size_t>(r)];
        if (set.empty()) continue;
        double source_mass = 0.0;
        double target_mass = 0.0;
        for (int j : set) {
            source_mass += sa_source(r, j);
            target_mass += sa_target(r, j);
        }
        if (target_mass == 0.0) {
            ++guarded;
            continue;
        }
        const double ratio = source_mass / target_mass;
        for (int j : set) out(r, j) = static_cast<float>(static_cast<double>(sa_target(r, j)) * ratio);
    }
    if (guarded > 0) {
        spdlog::warn("I2I-SA adaptation: {} row(s) had zero target mass over the top-{} set; kept source values",
                     guarded, k);
    }
    if (stats) stats->guarded_rows += guarded;
    return out;
}

} // namespace flexedit::attn
