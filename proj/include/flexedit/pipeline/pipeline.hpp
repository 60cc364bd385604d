// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flexedit/attention/feature_cache.hpp"
#include "flexedit/backend/backend.hpp"
#include "flexedit/core/config.hpp"
#include "flexedit/core/image.hpp"
#include "flexedit/core/tokens.hpp"
#include "flexedit/flow/engine.hpp"
#include "flexedit/mask/mask.hpp"

namespace flexedit::pipeline {

struct StepFlags {
    bool ca = false;
    bool sa = false;
    bool sa_adapt = false;
    bool res = false;
    bool blend = false;

    friend bool operator==(const StepFlags&, const StepFlags&) = default;
};

/// Flags per generation step; index 0 is the first step out of z_T.
struct InjectionSchedule {
    std::vector<StepFlags> steps;

    int count_ca() const;
    int count_sa() const;
    int count_sa_adapt() const;
    int count_res() const;
    int count_blend() const;
};

InjectionSchedule build_schedule(const EditConfig& config, bool has_source_prompt);

struct EditRequest {
    Image image;
    std::optional<std::string> source_prompt;
    std::string target_prompt;
    std::optional<std::string> blended_word;
    EditConfig config;
    std::optional<mask::EditMask> user_mask;  // latent resolution, 1 = edit region
};

/// Inversion trajectory plus the mid-step features read from it.
struct Extraction {
    attn::FeatureCache cache;
    flow::Trajectory trajectory;
    TokenSequence source_tokens;
};

Extraction extract_mid_step(const Image& image, const std::optional<std::string>& source_prompt,
                            const EditConfig& config, const Backend& backend);

struct StepRecord {
    int step = 0;       // generation step
    int from_step = 0;  // trajectory index the velocity was evaluated at
    double t = 0.0;
    StepFlags flags;
    std::optional<double> mask_coverage;
    int otsu_bin = -1;
    bool mask_degenerate = false;
    int guarded_rows = 0;
};

struct GenerationResult {
    LatentGrid latent;
    std::vector<StepRecord> steps;
    std::optional<mask::EditMask> last_mask;
};

/// Source of the blending mask for a request: "word", "user_mask" or "none".
std::string mask_source(const EditRequest& request);

GenerationResult generate_with_injection(const EditRequest& request, const attn::FeatureCache& cache,
                                         const flow::Trajectory& source_traj, const InjectionSchedule& schedule,
                                         const Backend& backend);

struct Timings {
    double extract_ms = 0.0;
    double generate_ms = 0.0;
    double decode_ms = 0.0;
    double total_ms = 0.0;
};

struct EditReport {
    EditConfig config;
    bool has_source_prompt = false;
    std::string blend_source = "none";
    int source_tokens = 0;
    int target_tokens = 0;
    int mapped_tokens = 0;
    InjectionSchedule schedule;
    std::vector<StepRecord> steps;
    std::optional<double> final_mask_coverage;
    Timings timings;
};

/// Key-value header followed by a per-step table. Timings are appended only
/// on request so reports can be compared byte for byte.
std::string format_report(const EditReport& report, bool include_timings);

struct EditResult {
    Image image;
    LatentGrid latent;
    EditReport report;
    std::optional<mask::EditMask> final_mask;
};

struct EditOptions {
    std::optional<std::filesystem::path> dump_dir;  // trajectory, cache and final latent as tensors
};

/// Validates the request against the backend. Throws ValidationError.
void validate_request(const EditRequest& request, const Backend& backend);

EditResult reflex_edit(const EditRequest& request, const Backend& backend, const EditOptions& options = {});

/// Edit reusing an extraction made with the same image, source prompt, seed,
/// t_prime and layer sets.
EditResult edit_with_extraction(const EditRequest& request, const Extraction& extraction, const Backend& backend);

} // namespace flexedit::pipeline
