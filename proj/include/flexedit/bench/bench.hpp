// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flexedit/backend/backend.hpp"
#include "flexedit/core/config.hpp"
#include "flexedit/core/image.hpp"
#include "flexedit/mask/mask.hpp"
#include "flexedit/pipeline/pipeline.hpp"

namespace flexedit::bench {

namespace fs = std::filesystem;

struct BenchCase {
    std::string id;
    fs::path image;
    std::optional<std::string> source_prompt;
    std::string target_prompt;
    std::optional<std::string> blended_word;
    std::optional<fs::path> edit_mask;  // PGM at image resolution, white = edited
    ConfigOverrides overrides;
};

/// One JSON object per line; blank lines and lines starting with '#' are
/// skipped. Relative paths resolve against `base_dir`. Throws ParseError.
std::vector<BenchCase> parse_manifest(std::string_view text, const fs::path& base_dir = {});
std::vector<BenchCase> load_manifest(const fs::path& path);

/// PSNR over pixels where `region` is set, in the units of `max_value`.
/// Zero error gives 100 dB. Throws MetricError.
double psnr_masked(const Image& a, const Image& b, const mask::EditMask& region, double max_value);

/// |A n B| / |A u B|; two empty masks give 1.
double iou(const mask::EditMask& a, const mask::EditMask& b);

struct PcaResult {
    Eigen::MatrixXd projection;         // [N, components]
    Eigen::MatrixXd directions;         // [d, components]
    std::vector<double> explained_ratio;  // descending
    bool degenerate = false;
};

PcaResult pca_project(const Eigen::MatrixXd& features, int components = 3);

/// Runs `scorer image prompt` and parses a real number from its stdout.
double run_scorer(const fs::path& scorer, const fs::path& image, const std::string& prompt);

struct CaseResult {
    std::string id;
    bool ok = false;
    std::string error;
    std::optional<double> psnr_non_edit;
    std::optional<double> iou;
    std::optional<double> score;
    std::optional<double> mask_coverage;
    double runtime_ms = 0.0;
};

struct MetricReport {
    std::vector<CaseResult> cases;

    int count_ok() const;
    int count_failed() const;
    std::optional<double> mean_psnr() const;
    std::optional<double> mean_iou() const;
    std::optional<double> mean_score() const;
};

/// Deterministic text form; runtimes are left out.
std::string format_metric_report(const MetricReport& report);

struct BenchOptions {
    fs::path out_dir;
    int threads = 0;  // 0: hardware concurrency
    std::optional<fs::path> scorer;
};

/// Writes per-case outputs under out_dir/cases/<id>/, report.txt and
/// timings.txt at the root. Case failures are recorded and the run goes on.
MetricReport run_benchmark(const std::vector<BenchCase>& cases, const EditConfig& config, const Backend& backend,
                           const BenchOptions& options);

enum class SweepKind { t_prime, k, alpha };

SweepKind parse_sweep_kind(std::string_view text);
std::string_view to_string(SweepKind kind);

struct SweepRow {
    double value = 0.0;
    double recon_mse = 0.0;      // source reconstruction from t_prime against z_0
    double edit_mse = 0.0;       // edited latent against z_0
    std::optional<double> mask_coverage;
};

struct SweepResult {
    SweepKind kind = SweepKind::k;
    std::vector<SweepRow> rows;
    std::vector<Image> images;
    std::vector<LatentGrid> latents;
};

/// One edit per value. k and alpha sweeps share one extraction; a t_prime
/// sweep re-extracts per value. Writes grid.ppm, plot.svg and sweep.txt when
/// out_dir is set.
SweepResult sweep_command(SweepKind kind, const std::vector<double>& values, const pipeline::EditRequest& request,
                          const Backend& backend, const std::optional<fs::path>& out_dir = std::nullopt);

/// Images side by side with a white gutter.
Image image_grid(const std::vector<Image>& images, int gutter = 2);

void write_line_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<double>& xs, const std::vector<double>& ys);
void write_bar_plot(const fs::path& path, const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<double>& values);

/// Residual features of every res layer at t_prime, projected to three
/// principal components and rendered as false-colour images.
struct LayerAnalysis {
    int layer = 0;
    PcaResult pca;
    Image rendering;
};

std::vector<LayerAnalysis> analyze_features(const pipeline::Extraction& extraction, const Backend& backend,
                                            const std::optional<fs::path>& out_dir = std::nullopt);

} // namespace flexedit::bench
