// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "flexedit/backend/backend.hpp"

namespace flexedit::toy {

struct BackendSpec {
    int n_double = 4;
    int n_single = 8;
    int d_model = 64;
    int n_heads = 4;
    LatentShape latent{16, 16, 4};
    int patch = 4;
    int d_text = 32;
    int vocab = 1024;
    int mlp_ratio = 2;
    std::uint64_t seed = 0x7f4a7c15;

    /// FLUX block counts (19 double, 38 single) at toy width, so published
    /// layer indices address the same block kinds.
    static BackendSpec flux_layout();

    int num_layers() const noexcept { return n_double + n_single; }
    /// Throws SpecError.
    void validate() const;
};

/// Whitespace tokenizer: lower-cased words, edge punctuation stripped, one
/// token per word with id 1 + fnv1a(word) mod (vocab - 1). Id 0 pads.
std::vector<int> toy_token_ids(std::string_view prompt, int vocab, std::vector<std::string>* words = nullptr);

/// Miniature MM-DiT with seeded weights: double-stream blocks with separate
/// text/image projections, then single-stream blocks over the shared
/// [text; image] stream. A fixed linear patch codec maps images to latents.
class ToyBackend final : public Backend {
public:
    explicit ToyBackend(const BackendSpec& spec);
    ~ToyBackend() override;

    const BackendSpec& spec() const noexcept { return spec_; }

    std::string name() const override { return "toy"; }
    int num_layers() const override { return spec_.num_layers(); }
    int num_heads() const override { return spec_.n_heads; }
    LatentShape latent_shape() const override { return spec_.latent; }
    int image_height() const override { return spec_.latent.h * spec_.patch; }
    int image_width() const override { return spec_.latent.w * spec_.patch; }

    TokenSequence tokenize(std::string_view prompt) const override;
    LatentGrid encode(const Image& image) const override;
    Image decode(const LatentGrid& latent) const override;
    std::vector<float> velocity(const LatentGrid& z, double t, const TokenSequence& text, HookSet* hooks,
                                const Guidance& guidance) const override;
    flow::TimestepSchedule schedule(int steps) const override;

    bool is_double_stream(int layer) const noexcept { return layer < spec_.n_double; }
    /// Sum of the first block's weights; a cheap determinism fingerprint.
    double first_layer_checksum() const;

private:
    struct Weights;
    BackendSpec spec_;
    std::unique_ptr<Weights> weights_;
};

/// Builds a toy backend; throws SpecError for invalid dimensions.
std::unique_ptr<ToyBackend> build_backend(const BackendSpec& spec);

} // namespace flexedit::toy
