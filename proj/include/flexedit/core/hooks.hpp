// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string_view>
#include <utility>
#include <vector>

#include "flexedit/core/config.hpp"
#include "flexedit/core/tensor.hpp"

namespace flexedit {

/// Hook points every backend exposes.
///  - attention_probs: per-head post-softmax joint attention, [(L+N), (L+N)],
///    text tokens first.
///  - residual_image_out: the image rows of a block's pre-residual output
///    f(x), [N, d_model].
enum class HookKind { attention_probs, residual_image_out };

std::string_view to_string(HookKind kind);

struct HookEvent {
    int layer = 0;
    HookKind kind = HookKind::attention_probs;
    int text_len = 0;
    std::vector<Matrix> tensors;
};

/// Per-evaluation registry of capture and override points. Captures record
/// the tensor as the backend produced it; overrides run afterwards and may
/// rewrite the tensors in place, but not reshape them.
class HookSet {
public:
    using Transform = std::function<void(int layer, int text_len, std::vector<Matrix>& tensors)>;

    void capture(int layer, HookKind kind);
    void capture(const LayerSet& layers, HookKind kind);
    void override_with(int layer, HookKind kind, Transform fn);
    /// Override with fixed tensors; shapes are checked when the hook fires.
    void replace_with(int layer, HookKind kind, std::vector<Matrix> tensors);

    bool active(int layer, HookKind kind) const;
    bool empty() const noexcept { return points_.empty(); }

    /// Entry point for backends. Throws InjectionError when an override
    /// changes the number or shape of tensors.
    void dispatch(int layer, HookKind kind, int text_len, std::vector<Matrix>& tensors);

    const std::vector<HookEvent>& events() const noexcept { return events_; }
    std::vector<HookEvent> take_events() { return std::exchange(events_, {}); }

private:
    struct Point {
        bool capture = false;
        Transform transform;
    };
    std::map<std::pair<int, HookKind>, Point> points_;
    std::vector<HookEvent> events_;
};

} // namespace flexedit
