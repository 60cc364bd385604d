// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace flexedit::flow {

/// Discretized time grid. Index i holds t_i with t_0 = 0 (data) and
/// t_T = 1 (noise); values strictly increase with the index.
class TimestepSchedule {
public:
    explicit TimestepSchedule(std::vector<double> t_values);

    /// t_i = i / T.
    static TimestepSchedule uniform(int steps);

    int steps() const noexcept { return static_cast<int>(t_values_.size()) - 1; }
    double t(int index) const;
    const std::vector<double>& values() const noexcept { return t_values_; }

private:
    std::vector<double> t_values_;
};

} // namespace flexedit::flow
