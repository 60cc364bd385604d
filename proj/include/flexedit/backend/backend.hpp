// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "flexedit/core/hooks.hpp"
#include "flexedit/core/image.hpp"
#include "flexedit/core/latent.hpp"
#include "flexedit/core/tokens.hpp"
#include "flexedit/flow/engine.hpp"
#include "flexedit/flow/schedule.hpp"

namespace flexedit {

/// Opaque guidance parameters. The toy backend ignores them; a FLUX adapter
/// would read its embedded guidance scale from here.
struct Guidance {
    double scale = 0.0;
};

/// Contract every model adapter implements. Layer indices run over the
/// double-stream blocks first, then the single-stream blocks. Hook tensors
/// follow the layouts documented on HookKind. Implementations are read-only
/// after construction; concurrent calls to velocity() are allowed.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string name() const = 0;
    virtual int num_layers() const = 0;
    virtual int num_heads() const = 0;
    virtual LatentShape latent_shape() const = 0;
    virtual int image_height() const = 0;
    virtual int image_width() const = 0;

    virtual TokenSequence tokenize(std::string_view prompt) const = 0;
    virtual LatentGrid encode(const Image& image) const = 0;
    virtual Image decode(const LatentGrid& latent) const = 0;

    /// V(z, t) conditioned on `text`. Hooks fire in layer order.
    virtual std::vector<float> velocity(const LatentGrid& z, double t, const TokenSequence& text, HookSet* hooks,
                                        const Guidance& guidance) const = 0;

    virtual flow::TimestepSchedule schedule(int steps) const = 0;
};

/// A backend bound to one prompt, usable by the flow engine.
class ConditionedField : public flow::VelocityField {
public:
    ConditionedField(const Backend& backend, TokenSequence text, Guidance guidance = {})
        : backend_(backend), text_(std::move(text)), guidance_(guidance) {}

    std::vector<float> evaluate(const LatentGrid& z, double t, HookSet* hooks) const override {
        return backend_.velocity(z, t, text_, hooks, guidance_);
    }

    const TokenSequence& text() const noexcept { return text_; }

private:
    const Backend& backend_;
    TokenSequence text_;
    Guidance guidance_;
};

} // namespace flexedit
