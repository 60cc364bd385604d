// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/flow/schedule.hpp"

#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit::flow {

TimestepSchedule::TimestepSchedule(std::vector<double> t_values) : t_values_(std::move(t_values)) {
    if (t_values_.size() < 2) throw DimensionError("schedule needs at least one step");
    if (t_values_.front() != 0.0 || t_values_.back() != 1.0) {
        throw DimensionError("schedule endpoints must be exactly t_0 = 0 and t_T = 1");
    }
    for (std::size_t i = 1; i < t_values_.size(); ++i) {
        if (!(t_values_[i] > t_values_[i - 1])) {
            throw DimensionError("schedule must strictly increase with the step index (at " + std::to_string(i) + ")");
        }
    }
}

TimestepSchedule TimestepSchedule::uniform(int steps) {
    if (steps < 1) throw DimensionError("schedule needs at least one step");
    std::vector<double> t(static_cast<std::size_t>(steps) + 1);
    for (int i = 0; i <= steps; ++i) t[i] = static_cast<double>(i) / steps;
    return TimestepSchedule(std::move(t));
}

double TimestepSchedule::t(int index) const {
    if (index < 0 || index > steps()) {
        throw LookupError("schedule index " + std::to_string(index) + " outside [0, " + std::to_string(steps()) + "]");
    }
    return t_values_[index];
}

} // namespace flexedit::flow
