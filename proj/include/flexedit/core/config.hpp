// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flexedit {

/// Sorted, duplicate-free set of layer indices.
using LayerSet = std::vector<int>;

LayerSet layer_range(int first, int last);  // inclusive
LayerSet parse_layer_set(std::string_view text);
std::string format_layer_set(const LayerSet& layers);

/// Every knob of one edit. Defaults are the published settings for a
/// 28-step FLUX-like model.
struct EditConfig {
    int T = 28;                 // sampling steps
    int t_prime = 14;           // extraction step
    double alpha = 4.0;         // scale for unmapped I2T-CA columns
    int k = 20;                 // top-k size for I2I-SA adaptation
    double frac_ca = 0.4;       // injection windows as fractions of T
    double frac_sa = 0.25;
    double frac_res = 0.15;
    double frac_sa_no_source = 0.4;   // windows used when no source prompt is given
    double frac_res_no_source = 0.25;
    double m_frac = 0.7;        // latent blending window
    int n_noising = 7;          // forward-interpolated steps before inversion
    LayerSet attn_layers = layer_range(20, 45);
    LayerSet res_layers = layer_range(13, 19);
    std::optional<int> sa_adapt_start;  // 1-based generation step; unset: 2 with CA injection, 4 without
    std::uint64_t seed = 0;
    std::optional<std::string> blended_word;
    double mask_sigma = 2.0;
    int mask_radius = 4;
    int otsu_bins = 256;

    /// Checks every single-field and cross-field constraint.
    void validate() const;
    /// Checks the layer sets against a model with `num_layers` layers.
    void validate_layers(int num_layers) const;

    int resolved_sa_adapt_start(bool ca_injection) const;

    friend bool operator==(const EditConfig&, const EditConfig&) = default;
};

/// floor(frac * T), the step count of a fractional window.
int window_steps(double frac, int T);

using ConfigOverrides = std::map<std::string, std::string>;

/// Parses `key = value` text. `#` starts a comment. Overrides win over the
/// text; t_prime defaults to T/2 when neither sets it.
EditConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});
EditConfig load_config(const std::optional<std::filesystem::path>& path, const ConfigOverrides& overrides = {});
std::string serialize_config(const EditConfig& config);

/// Applies one `key = value` setting, validating the value itself.
void apply_setting(EditConfig& config, const std::string& key, const std::string& value);

/// Splits "key=value" into its parts; used by the CLI's --set flag.
std::pair<std::string, std::string> split_assignment(std::string_view text);

} // namespace flexedit
