// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "flexedit/backend/toy_backend.hpp"
#include "flexedit/bench/bench.hpp"
#include "flexedit/core/config.hpp"
#include "flexedit/core/errors.hpp"
#include "flexedit/flow/engine.hpp"
#include "flexedit/mask/mask.hpp"
#include "flexedit/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace flexedit;

namespace {

struct CommonArgs {
    std::string model = "flux";
    std::optional<std::string> config_path;
    std::vector<std::string> settings;
    std::string out;
};

struct RequestArgs {
    std::string image;
    std::optional<std::string> source_prompt;
    std::string target_prompt;
    std::optional<std::string> blended_word;
    std::optional<std::string> mask;
};

void add_common(CLI::App* app, CommonArgs& args, const std::string& default_out) {
    args.out = default_out;
    app->add_option("--model", args.model, "toy backend layout: flux (19+38 blocks) or small (4+8)")
        ->check(CLI::IsMember({"flux", "small"}));
    app->add_option("--config", args.config_path, "key = value config file");
    app->add_option("--set", args.settings, "config override key=value (repeatable)");
    app->add_option("--out", args.out, "run directory");
}

void add_request(CLI::App* app, RequestArgs& args, bool need_target) {
    app->add_option("--image", args.image, "8-bit RGB PPM")->required();
    app->add_option("--source-prompt", args.source_prompt);
    auto* target = app->add_option("--target-prompt", args.target_prompt);
    if (need_target) target->required();
    app->add_option("--blended-word", args.blended_word);
    app->add_option("--mask", args.mask, "PGM edit mask at image resolution, white = edit");
}

std::unique_ptr<toy::ToyBackend> make_backend(const CommonArgs& args) {
    return toy::build_backend(args.model == "flux" ? toy::BackendSpec::flux_layout() : toy::BackendSpec{});
}

EditConfig make_config(const CommonArgs& args) {
    ConfigOverrides overrides;
    for (const auto& s : args.settings) overrides.insert_or_assign(split_assignment(s).first, split_assignment(s).second);
    std::optional<fs::path> path;
    if (args.config_path) path = *args.config_path;
    return load_config(path, overrides);
}

pipeline::EditRequest make_request(const RequestArgs& args, const EditConfig& config, const Backend& backend) {
    pipeline::EditRequest r;
    r.image = read_ppm(args.image);
    r.source_prompt = args.source_prompt;
    r.target_prompt = args.target_prompt;
    r.blended_word = args.blended_word;
    r.config = config;
    if (args.mask) {
        const auto m = mask::read_mask(*args.mask);
        r.user_mask = mask::resample_mask(m, backend.latent_shape().h, backend.latent_shape().w);
    }
    return r;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
            throw ValidationError("values", "'" + item + "' is not a number");
        }
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("values", "need at least one value");
    return out;
}

int run_edit(const CommonArgs& common, const RequestArgs& req, bool dump) {
    const auto backend = make_backend(common);
    const auto config = make_config(common);
    const auto request = make_request(req, config, *backend);
    const fs::path out(common.out);
    fs::create_directories(out);
    pipeline::EditOptions options;
    if (dump) options.dump_dir = out / "artifacts";
    const auto result = pipeline::reflex_edit(request, *backend, options);
    write_ppm(quantize_8bit(result.image), out / "edited.ppm");
    if (result.final_mask) {
        mask::write_mask(mask::resample_mask(*result.final_mask, backend->image_height(), backend->image_width()),
                         out / "mask.pgm");
    }
    write_text(out / "report.txt", pipeline::format_report(result.report, true));
    std::cout << (out / "edited.ppm").string() << '\n';
    return 0;
}

int run_invert(const CommonArgs& common, const RequestArgs& req) {
    const auto backend = make_backend(common);
    const auto config = make_config(common);
    const auto image = read_ppm(req.image);
    const fs::path out(common.out);
    const auto schedule = backend->schedule(config.T);
    const ConditionedField field(*backend, backend->tokenize(req.source_prompt.value_or("")));
    const auto z0 = backend->encode(image);
    const auto traj = flow::noised_invert(z0, config, schedule, field);
    flow::write_trajectory(traj, out / "trajectory");

    std::vector<int> steps;
    for (int s = 1; s <= config.T; ++s) steps.push_back(s);
    std::ostringstream table;
    table << "step mse\n";
    for (int s : steps) {
        const auto rec = flow::reconstruct_from_step(traj, s, schedule, field);
        table << s << ' ' << mean_squared_error(rec, z0) << '\n';
    }
    write_text(out / "reconstruction.txt", table.str());
    std::cout << (out / "trajectory").string() << '\n';
    return 0;
}

int run_sweep(const CommonArgs& common, const RequestArgs& req, const std::string& kind, const std::string& values) {
    const auto backend = make_backend(common);
    const auto config = make_config(common);
    const auto request = make_request(req, config, *backend);
    const fs::path out(common.out);
    bench::sweep_command(bench::parse_sweep_kind(kind), parse_values(values), request, *backend, out);
    std::cout << (out / "sweep.txt").string() << '\n';
    return 0;
}

int run_analyze(const CommonArgs& common, const RequestArgs& req) {
    const auto backend = make_backend(common);
    const auto config = make_config(common);
    const auto image = read_ppm(req.image);
    const auto extraction = pipeline::extract_mid_step(image, req.source_prompt, config, *backend);
    const fs::path out(common.out);
    bench::analyze_features(extraction, *backend, out);
    std::cout << (out / "analysis.txt").string() << '\n';
    return 0;
}

int run_bench(const CommonArgs& common, const std::string& manifest, int threads,
              const std::optional<std::string>& scorer) {
    const auto backend = make_backend(common);
    const auto config = make_config(common);
    bench::BenchOptions options;
    options.out_dir = common.out;
    options.threads = threads;
    if (scorer) options.scorer = *scorer;
    const auto report = bench::run_benchmark(bench::load_manifest(manifest), config, *backend, options);
    std::cout << bench::format_metric_report(report);
    return report.count_failed() == 0 ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real-image editing for rectified-flow MM-DiT models"};
    app.require_subcommand(1);
    std::string log_level = "warn";
    app.add_option("--log-level", log_level)->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    CommonArgs edit_common, invert_common, sweep_common, analyze_common, bench_common;
    RequestArgs edit_req, invert_req, sweep_req, analyze_req;
    bool dump = false;
    std::string sweep_kind, sweep_values, manifest;
    int threads = 0;
    std::optional<std::string> scorer;

    auto* edit = app.add_subcommand("edit", "edit one image");
    add_common(edit, edit_common, "runs/edit");
    add_request(edit, edit_req, true);
    edit->add_flag("--dump", dump, "write trajectory, feature cache and latents as tensors");

    auto* invert = app.add_subcommand("invert", "invert an image and measure reconstruction per step");
    add_common(invert, invert_common, "runs/invert");
    invert->add_option("--image", invert_req.image)->required();
    invert->add_option("--source-prompt", invert_req.source_prompt);

    auto* sweep = app.add_subcommand("sweep", "edit once per parameter value");
    add_common(sweep, sweep_common, "runs/sweep");
    add_request(sweep, sweep_req, true);
    sweep->add_option("--kind", sweep_kind)->required()->check(CLI::IsMember({"t_prime", "k", "alpha"}));
    sweep->add_option("--values", sweep_values, "comma separated")->required();

    auto* analyze = app.add_subcommand("analyze", "PCA plots of mid-step residual features");
    add_common(analyze, analyze_common, "runs/analyze");
    analyze->add_option("--image", analyze_req.image)->required();
    analyze->add_option("--source-prompt", analyze_req.source_prompt);

    auto* benchmark = app.add_subcommand("bench", "run a manifest of edits");
    add_common(benchmark, bench_common, "runs/bench");
    benchmark->add_option("--manifest", manifest)->required();
    benchmark->add_option("--threads", threads, "worker count, 0 for all cores");
    benchmark->add_option("--scorer", scorer, "executable called as: scorer IMAGE PROMPT");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*edit) return run_edit(edit_common, edit_req, dump);
        if (*invert) return run_invert(invert_common, invert_req);
        if (*sweep) return run_sweep(sweep_common, sweep_req, sweep_kind, sweep_values);
        if (*analyze) return run_analyze(analyze_common, analyze_req);
        if (*benchmark) return run_bench(bench_common, manifest, threads, scorer);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
