// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flexedit/core/errors.hpp"

namespace flexedit {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& field, std::string_view text) {
    text = trim(text);
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
        throw ValidationError(field, "expected a number, got '" + std::string(text) + "'");
    }
    return value;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void require(bool ok, const std::string& field, const std::string& constraint) {
    if (!ok) throw ValidationError(field, constraint);
}

void require_fraction(double v, const std::string& field) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, field, "must lie in [0, 1]");
}

} // namespace

LayerSet layer_range(int first, int last) {
    LayerSet out;
    for (int i = first; i <= last; ++i) out.push_back(i);
    return out;
}

LayerSet parse_layer_set(std::string_view text) {
    LayerSet out;
    text = trim(text);
    if (text.empty() || text == "none") return out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string_view::npos) comma = text.size();
        auto item = trim(text.substr(pos, comma - pos));
        if (item.empty()) throw ValidationError("layers", "empty entry in layer list");
        auto dash = item.find('-', 1);
        if (dash == std::string_view::npos) {
            out.push_back(parse_number<int>("layers", item));
        } else {
            const int a = parse_number<int>("layers", item.substr(0, dash));
            const int b = parse_number<int>("layers", item.substr(dash + 1));
            if (b < a) throw ValidationError("layers", "descending range '" + std::string(item) + "'");
            for (int i = a; i <= b; ++i) out.push_back(i);
        }
        pos = comma + 1;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string format_layer_set(const LayerSet& layers) {
    if (layers.empty()) return "none";
    std::ostringstream os;
    for (std::size_t i = 0; i < layers.size();) {
        std::size_t j = i;
        while (j + 1 < layers.size() && layers[j + 1] == layers[j] + 1) ++j;
        if (i > 0) os << ',';
        os << layers[i];
        if (j > i) os << '-' << layers[j];
        i = j + 1;
    }
    return os.str();
}

int window_steps(double frac, int T) {
    // Guard against 0.7 * 10 evaluating to 6.999...
    return static_cast<int>(std::floor(frac * T + 1e-9));
}

void EditConfig::validate() const {
    require(T >= 1, "T", "must be at least 1");
    require(t_prime > 0 && t_prime <= T, "t_prime", "must satisfy 0 < t_prime <= T");
    require(std::isfinite(alpha) && alpha >= 1.0, "alpha", "must be >= 1");
    require(k >= 0, "k", "must be >= 0");
    require_fraction(frac_ca, "frac_ca");
    require_fraction(frac_sa, "frac_sa");
    require_fraction(frac_res, "frac_res");
    require_fraction(frac_sa_no_source, "frac_sa_no_source");
    require_fraction(frac_res_no_source, "frac_res_no_source");
    require_fraction(m_frac, "m_frac");
    require(n_noising >= 0 && n_noising < T, "n_noising", "must satisfy 0 <= n_noising < T");
    require(!sa_adapt_start || *sa_adapt_start >= 0, "sa_adapt_start", "must be >= 0");
    for (int l : attn_layers) require(l >= 0, "attn_layers", "layer indices must be >= 0");
    for (int l : res_layers) require(l >= 0, "res_layers", "layer indices must be >= 0");
    require(std::isfinite(mask_sigma) && mask_sigma > 0.0, "mask_sigma", "must be > 0");
    require(mask_radius >= 0, "mask_radius", "must be >= 0");
    require(otsu_bins >= 2, "otsu_bins", "must be >= 2");
    require(!blended_word || !blended_word->empty(), "blended_word", "must not be empty when set");
}

void EditConfig::validate_layers(int num_layers) const {
    for (int l : attn_layers) {
        require(l < num_layers, "attn_layers",
                "layer " + std::to_string(l) + " outside [0, " + std::to_string(num_layers) + ")");
    }
    for (int l : res_layers) {
        require(l < num_layers, "res_layers",
                "layer " + std::to_string(l) + " outside [0, " + std::to_string(num_layers) + ")");
    }
}

int EditConfig::resolved_sa_adapt_start(bool ca_injection) const {
    if (sa_adapt_start) return *sa_adapt_start;
    return ca_injection ? 2 : 4;
}

void apply_setting(EditConfig& c, const std::string& key, const std::string& raw) {
    const std::string value(trim(raw));
    if (key == "T") {
        c.T = parse_number<int>(key, value);
    } else if (key == "t_prime") {
        c.t_prime = parse_number<int>(key, value);
    } else if (key == "alpha") {
        c.alpha = parse_number<double>(key, value);
    } else if (key == "k") {
        c.k = parse_number<int>(key, value);
    } else if (key == "frac_ca") {
        c.frac_ca = parse_number<double>(key, value);
    } else if (key == "frac_sa") {
        c.frac_sa = parse_number<double>(key, value);
    } else if (key == "frac_res") {
        c.frac_res = parse_number<double>(key, value);
    } else if (key == "frac_sa_no_source") {
        c.frac_sa_no_source = parse_number<double>(key, value);
    } else if (key == "frac_res_no_source") {
        c.frac_res_no_source = parse_number<double>(key, value);
    } else if (key == "m_frac") {
        c.m_frac = parse_number<double>(key, value);
    } else if (key == "n_noising") {
        c.n_noising = parse_number<int>(key, value);
    } else if (key == "attn_layers") {
        c.attn_layers = parse_layer_set(value);
    } else if (key == "res_layers") {
        c.res_layers = parse_layer_set(value);
    } else if (key == "sa_adapt_start") {
        if (value == "auto") {
            c.sa_adapt_start.reset();
        } else {
            c.sa_adapt_start = parse_number<int>(key, value);
        }
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "blended_word") {
        if (value.empty()) {
            c.blended_word.reset();
        } else {
            c.blended_word = value;
        }
    } else if (key == "mask_sigma") {
        c.mask_sigma = parse_number<double>(key, value);
    } else if (key == "mask_radius") {
        c.mask_radius = parse_number<int>(key, value);
    } else if (key == "otsu_bins") {
        c.otsu_bins = parse_number<int>(key, value);
    } else {
        throw ValidationError(key, "unknown configuration key");
    }
}

std::pair<std::string, std::string> split_assignment(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
        throw ValidationError(std::string(trim(text)), "expected key=value");
    }
    return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

EditConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
    ConfigOverrides settings;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.find('=') == std::string_view::npos) {
            throw ParseError(line_no, "expected 'key = value'");
        }
        auto [key, value] = split_assignment(line);
        settings[key] = value;
    }
    for (const auto& [key, value] : overrides) settings[key] = value;

    EditConfig config;
    if (auto it = settings.find("T"); it != settings.end()) {
        apply_setting(config, it->first, it->second);
        config.t_prime = std::max(1, config.T / 2);
    }
    for (const auto& [key, value] : settings) {
        if (key != "T") apply_setting(config, key, value);
    }
    config.validate();
    return config;
}

EditConfig load_config(const std::optional<std::filesystem::path>& path, const ConfigOverrides& overrides) {
    if (!path) return parse_config("", overrides);
    std::ifstream in(*path);
    if (!in) throw Error("cannot open config " + path->string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), overrides);
}

std::string serialize_config(const EditConfig& c) {
    std::ostringstream os;
    os << "T = " << c.T << '\n';
    os << "t_prime = " << c.t_prime << '\n';
    os << "alpha = " << format_double(c.alpha) << '\n';
    os << "k = " << c.k << '\n';
    os << "frac_ca = " << format_double(c.frac_ca) << '\n';
    os << "frac_sa = " << format_double(c.frac_sa) << '\n';
    os << "frac_res = " << format_double(c.frac_res) << '\n';
    os << "frac_sa_no_source = " << format_double(c.frac_sa_no_source) << '\n';
    os << "frac_res_no_source = " << format_double(c.frac_res_no_source) << '\n';
    os << "m_frac = " << format_double(c.m_frac) << '\n';
    os << "n_noising = " << c.n_noising << '\n';
    os << "attn_layers = " << format_layer_set(c.attn_layers) << '\n';
    os << "res_layers = " << format_layer_set(c.res_layers) << '\n';
    os << "sa_adapt_start = " << (c.sa_adapt_start ? std::to_string(*c.sa_adapt_start) : std::string("auto")) << '\n';
    os << "seed = " << c.seed << '\n';
    os << "blended_word = " << c.blended_word.value_or("") << '\n';
    os << "mask_sigma = " << format_double(c.mask_sigma) << '\n';
    os << "mask_radius = " << c.mask_radius << '\n';
    os << "otsu_bins = " << c.otsu_bins << '\n';
    return os.str();
}

} // namespace flexedit
