// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/hooks.hpp"

#include <string>

#include "flexedit/core/errors.hpp"

namespace flexedit {

std::string_view to_string(HookKind kind) {
    switch (kind) {
    case HookKind::attention_probs:
        return "attention_probs";
    case HookKind::residual_image_out:
        return "residual_image_out";
    }
    return "unknown";
}

void HookSet::capture(int layer, HookKind kind) { points_[{layer, kind}].capture = true; }

void HookSet::capture(const LayerSet& layers, HookKind kind) {
    for (int l : layers) capture(l, kind);
}

void HookSet::override_with(int layer, HookKind kind, Transform fn) {
    points_[{layer, kind}].transform = std::move(fn);
}

void HookSet::replace_with(int layer, HookKind kind, std::vector<Matrix> tensors) {
    override_with(layer, kind, [replacement = std::move(tensors)](int l, int, std::vector<Matrix>& current) {
        if (replacement.size() != current.size()) {
            throw InjectionError(l, "replacement holds " + std::to_string(replacement.size()) + " tensors, expected " +
                                        std::to_string(current.size()));
        }
        for (std::size_t i = 0; i < current.size(); ++i) {
            if (replacement[i].rows() != current[i].rows() || replacement[i].cols() != current[i].cols()) {
                throw InjectionError(l, "replacement tensor " + std::to_string(i) + " has shape [" +
                                            std::to_string(replacement[i].rows()) + ", " +
                                            std::to_string(replacement[i].cols()) + "], expected [" +
                                            std::to_string(current[i].rows()) + ", " +
                                            std::to_string(current[i].cols()) + "]");
            }
            current[i] = replacement[i];
        }
    });
}

bool HookSet::active(int layer, HookKind kind) const { return points_.contains({layer, kind}); }

void HookSet::dispatch(int layer, HookKind kind, int text_len, std::vector<Matrix>& tensors) {
    auto it = points_.find({layer, kind});
    if (it == points_.end()) return;
    const Point& point = it->second;
    if (point.capture) events_.push_back(HookEvent{layer, kind, text_len, tensors});
    if (!point.transform) return;

    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    shapes.reserve(tensors.size());
    for (const auto& t : tensors) shapes.emplace_back(t.rows(), t.cols());
    point.transform(layer, text_len, tensors);
    if (tensors.size() != shapes.size()) throw InjectionError(layer, "override changed the tensor count");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].rows() != shapes[i].first || tensors[i].cols() != shapes[i].second) {
            throw InjectionError(layer, std::string("override changed the shape of a ") + std::string(to_string(kind)) +
                                            " tensor");
        }
    }
}

} // namespace flexedit
