// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/bench/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "flexedit/core/errors.hpp"
#include "flexedit/core/tensor_io.hpp"

namespace flexedit::bench {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr double kPsnrCap = 100.0;

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string("-"); }

std::string json_scalar(const json& v, std::size_t line, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number() || v.is_boolean()) return v.dump();
    throw ParseError(line, "override '" + key + "' must be a string, number or boolean");
}

std::string required_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line, std::string("missing required key '") + key + "'");
    if (!it->is_string()) throw ParseError(line, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(line, std::string("'") + key + "' must be a string");
    return it->get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::optional<double> mean_of(const std::vector<CaseResult>& cases, std::optional<double> CaseResult::*field) {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : cases) {
        if (c.ok && c.*field) {
            sum += *(c.*field);
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

Image to_8bit_scale(const Image& image) {
    Image q = quantize_8bit(image);
    for (auto& v : q.rgb) v = std::round(v * 255.0f);
    return q;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

mask::EditMask mask_from_gray(const GrayImage& g) {
    mask::EditMask m = mask::EditMask::filled(g.height, g.width, false);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) m.bits[i] = g.pixels[i] >= 128 ? 1 : 0;
    return m;
}

} // namespace

std::vector<BenchCase> parse_manifest(std::string_view text, const fs::path& base_dir) {
    static const std::set<std::string> known{"id", "image", "source_prompt", "target_prompt",
                                             "blended_word", "edit_mask", "overrides"};
    std::vector<BenchCase> cases;
    std::set<std::string> ids;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed record: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line_no, "record must be a JSON object");
        for (const auto& [key, value] : obj.items()) {
            (void)value;
            if (!known.contains(key)) throw ParseError(line_no, "unknown key '" + key + "'");
        }
        BenchCase c;
        c.id = required_string(obj, "id", line_no);
        if (c.id.empty() || c.id.find_first_of("/\\ \t") != std::string::npos) {
            throw ParseError(line_no, "id '" + c.id + "' must be non-empty without slashes or spaces");
        }
        if (!ids.insert(c.id).second) throw ParseError(line_no, "duplicate id '" + c.id + "'");
        c.image = resolve(base_dir, required_string(obj, "image", line_no));
        c.target_prompt = required_string(obj, "target_prompt", line_no);
        c.source_prompt = optional_string(obj, "source_prompt", line_no);
        c.blended_word = optional_string(obj, "blended_word", line_no);
        if (auto m = optional_string(obj, "edit_mask", line_no)) c.edit_mask = resolve(base_dir, *m);
        if (auto it = obj.find("overrides"); it != obj.end()) {
            if (!it->is_object()) throw ParseError(line_no, "'overrides' must be an object");
            for (const auto& [key, value] : it->items()) c.overrides[key] = json_scalar(value, line_no, key);
            try {
                parse_config("", c.overrides);
            } catch (const ValidationError& e) {
                throw ParseError(line_no, e.what());
            }
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

std::vector<BenchCase> load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open manifest " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

double psnr_masked(const Image& a, const Image& b, const mask::EditMask& region, double max_value) {
    if (a.height != b.height || a.width != b.width) throw MetricError("PSNR images differ in shape");
    if (region.h != a.height || region.w != a.width) throw MetricError("PSNR mask does not match the image shape");
    if (!(max_value > 0.0)) throw MetricError("PSNR max_value must be positive");
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (!region.at(y, x)) continue;
            for (int ch = 0; ch < 3; ++ch) {
                const double d = static_cast<double>(a.at(y, x, ch)) - b.at(y, x, ch);
                sum += d * d;
            }
            n += 3;
        }
    }
    if (n == 0) throw MetricError("PSNR mask is empty");
    const double mse = sum / static_cast<double>(n);
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

double iou(const mask::EditMask& a, const mask::EditMask& b) {
    if (a.h != b.h || a.w != b.w) throw MetricError("IoU masks differ in shape");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
        uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
    }
    if (uni == 0) {
        spdlog::info("IoU of two empty masks is defined as 1");
        return 1.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

PcaResult pca_project(const Eigen::MatrixXd& features, int components) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols();
    if (components < 1 || components > d) throw MetricError("component count must lie in [1, d]");
    if (n < components) throw MetricError("PCA needs at least as many rows as components");

    const Eigen::RowVectorXd mean = features.colwise().mean();
    const Eigen::MatrixXd centered = features.rowwise() - mean;
    PcaResult out;
    out.projection = Eigen::MatrixXd::Zero(n, components);
    out.directions = Eigen::MatrixXd::Zero(d, components);
    out.explained_ratio.assign(static_cast<std::size_t>(components), 0.0);

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double total = sv.squaredNorm();
    if (!(total > 0.0)) {
        spdlog::warn("PCA input has zero variance; returning a zero projection");
        out.degenerate = true;
        return out;
    }
    for (int k = 0; k < components; ++k) {
        Eigen::VectorXd v = k < sv.size() ? Eigen::VectorXd(svd.matrixV().col(k)) : Eigen::VectorXd::Zero(d);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        out.directions.col(k) = v;
        out.explained_ratio[static_cast<std::size_t>(k)] = k < sv.size() ? sv(k) * sv(k) / total : 0.0;
    }
    out.projection = centered * out.directions;
    return out;
}

double run_scorer(const fs::path& scorer, const fs::path& image, const std::string& prompt) {
    auto quote = [](const std::string& s) {
        std::string q = "'";
        for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
        return q + "'";
    };
    const std::string cmd = quote(scorer.string()) + " " + quote(image.string()) + " " + quote(prompt);
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw MetricError("cannot start scorer " + scorer.string());
    std::string output;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
    const int status = pclose(pipe);
    if (status != 0) throw MetricError("scorer exited with status " + std::to_string(status));
    const auto start = output.find_first_not_of(" \t\r\n");
    if (start == std::string::npos) throw MetricError("scorer printed nothing");
    double value = 0.0;
    const auto end = output.data() + output.size();
    const auto res = std::from_chars(output.data() + start, end, value);
    if (res.ec != std::errc() || !std::isfinite(value)) throw MetricError("scorer output is not a real number");
    return value;
}

int MetricReport::count_ok() const {
    return static_cast<int>(std::count_if(cases.begin(), cases.end(), [](const CaseResult& c) { return c.ok; }));
}
int MetricReport::count_failed() const { return static_cast<int>(cases.size()) - count_ok(); }
std::optional<double> MetricReport::mean_psnr() const { return mean_of(cases, &CaseResult::psnr_non_edit); }
std::optional<double> MetricReport::mean_iou() const { return mean_of(cases, &CaseResult::iou); }
std::optional<double> MetricReport::mean_score() const { return mean_of(cases, &CaseResult::score); }

std::string format_metric_report(const MetricReport& report) {
    std::ostringstream os;
    os << "# benchmark report\n";
    os << "cases = " << report.cases.size() << '\n';
    os << "ok = " << report.count_ok() << '\n';
    os << "failed = " << report.count_failed() << '\n';
    os << "mean_psnr_non_edit = " << fmt_opt(report.mean_psnr()) << '\n';
    os << "mean_iou = " << fmt_opt(report.mean_iou()) << '\n';
    os << "mean_score = " << fmt_opt(report.mean_score()) << '\n';
    os << "\n[cases]\n";
    os << "id status psnr_non_edit iou score mask_coverage error\n";
    for (const auto& c : report.cases) {
        os << c.id << ' ' << (c.ok ? "ok" : "failed") << ' ' << fmt_opt(c.psnr_non_edit) << ' ' << fmt_opt(c.iou)
           << ' ' << fmt_opt(c.score) << ' ' << fmt_opt(c.mask_coverage) << ' ';
        std::string err = c.error.empty() ? std::string("-") : c.error;
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << err << '\n';
    }
    return os.str();
}

MetricReport run_benchmark(const std::vector<BenchCase>& cases, const EditConfig& config, const Backend& backend,
                           const BenchOptions& options) {
    fs::create_directories(options.out_dir / "cases");
    MetricReport report;
    report.cases.resize(cases.size());

    auto run_case = [&](std::size_t index) {
        const BenchCase& bc = cases[index];
        CaseResult& result = report.cases[index];
        result.id = bc.id;
        const auto start = Clock::now();
        try {
            const fs::path dir = options.out_dir / "cases" / bc.id;
            fs::create_directories(dir);
            pipeline::EditRequest request;
            request.image = read_ppm(bc.image);
            request.source_prompt = bc.source_prompt;
            request.target_prompt = bc.target_prompt;
            request.blended_word = bc.blended_word;
            request.config = config;
            for (const auto& [key, value] : bc.overrides) apply_setting(request.config, key, value);
            request.config.validate();

            const auto edit = pipeline::reflex_edit(request, backend);
            const Image edited = quantize_8bit(edit.image);
            write_ppm(edited, dir / "edited.ppm");
            write_text(dir / "report.txt", pipeline::format_report(edit.report, false));
            result.mask_coverage = edit.report.final_mask_coverage;

            std::optional<mask::EditMask> predicted;
            if (edit.final_mask) {
                predicted = mask::resample_mask(*edit.final_mask, edited.height, edited.width);
                mask::write_mask(*predicted, dir / "mask.pgm");
            }
            if (bc.edit_mask) {
                const auto truth = mask_from_gray(read_pgm(*bc.edit_mask));
                const auto non_edit = truth.complement();
                if (non_edit.count() > 0) {
                    result.psnr_non_edit =
                        psnr_masked(to_8bit_scale(request.image), to_8bit_scale(edited), non_edit, 255.0);
                }
                if (predicted) result.iou = iou(*predicted, truth);
            }
            if (options.scorer) result.score = run_scorer(*options.scorer, dir / "edited.ppm", bc.target_prompt);
            result.ok = true;
        } catch (const std::exception& e) {
            result.ok = false;
            result.error = e.what();
            spdlog::error("case {} failed: {}", bc.id, e.what());
        }
        result.runtime_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    };

    int threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, std::max(1, static_cast<int>(cases.size())));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) {
        pool.emplace_back([&] {
            for (std::size_t idx = next++; idx < cases.size(); idx = next++) run_case(idx);
        });
    }
    for (auto& t : pool) t.join();

    write_text(options.out_dir / "report.txt", format_metric_report(report));
    std::ostringstream timings;
    timings << "id runtime_ms\n";
    for (const auto& c : report.cases) timings << c.id << ' ' << fmt_double(c.runtime_ms) << '\n';
    write_text(options.out_dir / "timings.txt", timings.str());
    return report;
}

SweepKind parse_sweep_kind(std::string_view text) {
    if (text == "t_prime") return SweepKind::t_prime;
    if (text == "k") return SweepKind::k;
    if (text == "alpha") return SweepKind::alpha;
    throw ValidationError("kind", "must be one of t_prime, k, alpha");
}

std::string_view to_string(SweepKind kind) {
    switch (kind) {
        case SweepKind::t_prime: return "t_prime";
        case SweepKind::k: return "k";
        case SweepKind::alpha: return "alpha";
    }
    return "?";
}

SweepResult sweep_command(SweepKind kind, const std::vector<double>& values, const pipeline::EditRequest& request,
                          const Backend& backend, const std::optional<fs::path>& out_dir) {
    if (values.empty()) throw ValidationError("values", "sweep needs at least one value");
    SweepResult out;
    out.kind = kind;

    auto with_value = [&](double v) {
        pipeline::EditRequest r = request;
        const std::string text = fmt_double(v);
        switch (kind) {
            case SweepKind::t_prime: apply_setting(r.config, "t_prime", text); break;
            case SweepKind::k: apply_setting(r.config, "k", text); break;
            case SweepKind::alpha: apply_setting(r.config, "alpha", text); break;
        }
        r.config.validate();
        return r;
    };

    std::optional<pipeline::Extraction> shared;
    if (kind != SweepKind::t_prime) {
        shared = pipeline::extract_mid_step(request.image, request.source_prompt, request.config, backend);
    }
    const auto schedule = backend.schedule(request.config.T);
    const ConditionedField source_field(backend, backend.tokenize(request.source_prompt.value_or("")));

    for (double v : values) {
        const pipeline::EditRequest r = with_value(v);
        std::optional<pipeline::Extraction> own;
        if (!shared) own = pipeline::extract_mid_step(r.image, r.source_prompt, r.config, backend);
        const pipeline::Extraction& ex = shared ? *shared : *own;
        const auto edit = pipeline::edit_with_extraction(r, ex, backend);

        SweepRow row;
        row.value = v;
        const LatentGrid& z0 = ex.trajectory.at(0);
        row.recon_mse =
            mean_squared_error(flow::reconstruct_from_step(ex.trajectory, r.config.t_prime, schedule, source_field), z0);
        row.edit_mse = mean_squared_error(edit.latent, z0);
        row.mask_coverage = edit.report.final_mask_coverage;
        out.rows.push_back(row);
        out.images.push_back(quantize_8bit(edit.image));
        out.latents.push_back(edit.latent);
    }

    if (out_dir) {
        fs::create_directories(*out_dir);
        std::vector<Image> tiles{quantize_8bit(request.image)};
        tiles.insert(tiles.end(), out.images.begin(), out.images.end());
        write_ppm(image_grid(tiles), *out_dir / "grid.ppm");
        std::ostringstream table;
        table << "# sweep over " << to_string(kind) << "; grid.ppm shows the source then one tile per value\n";
        table << "value recon_mse edit_mse mask_coverage\n";
        std::vector<double> xs;
        std::vector<double> ys;
        for (const auto& row : out.rows) {
            table << fmt_double(row.value) << ' ' << fmt_double(row.recon_mse) << ' ' << fmt_double(row.edit_mse)
                  << ' ' << fmt_opt(row.mask_coverage) << '\n';
            xs.push_back(row.value);
            ys.push_back(kind == SweepKind::t_prime ? row.recon_mse : row.edit_mse);
        }
        write_text(*out_dir / "sweep.txt", table.str());
        const std::string metric = kind == SweepKind::t_prime ? "reconstruction MSE" : "edited latent MSE to source";
        write_line_plot(*out_dir / "plot.svg", metric + " vs " + std::string(to_string(kind)),
                        std::string(to_string(kind)), metric, xs, ys);
    }
    return out;
}

Image image_grid(const std::vector<Image>& images, int gutter) {
    if (images.empty()) return Image();
    int height = 0;
    int width = 0;
    for (const auto& im : images) {
        height = std::max(height, im.height);
        width += im.width;
    }
    width += gutter * static_cast<int>(images.size() - 1);
    Image out(height, width, 1.0f);
    int x0 = 0;
    for (const auto& im : images) {
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x)
                for (int ch = 0; ch < 3; ++ch) out.at(y, x0 + x, ch) = im.at(y, x, ch);
        x0 += im.width + gutter;
    }
    return out;
}

void write_line_plot(const fs::path& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.empty()) throw Error("plot needs matching, non-empty series");
    constexpr double W = 480, H = 320, L = 70, R = 20, Top = 40, B = 50;
    auto [xmin_it, xmax_it] = std::minmax_element(xs.begin(), xs.end());
    auto [ymin_it, ymax_it] = std::minmax_element(ys.begin(), ys.end());
    double xmin = *xmin_it, xmax = *xmax_it, ymin = *ymin_it, ymax = *ymax_it;
    if (xmax == xmin) { xmin -= 1; xmax += 1; }
    if (ymax == ymin) { ymin -= 1; ymax += 1; }
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - Top - B); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
       << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << Top << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << xml_escape(x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (Top + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (Top + H - B) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(ymin) << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_double(ymin)
       << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(ymax) << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_double(ymax)
       << "</text>\n";
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) os << px(xs[i]) << ',' << py(ys[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i]) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
        os << "<text x=\"" << px(xs[i]) << "\" y=\"" << H - B + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
           << fmt_double(xs[i]) << "</text>\n";
    }
    os << "</svg>\n";
    write_text(path, os.str());
}

void write_bar_plot(const fs::path& path, const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<double>& values) {
    if (labels.size() != values.size() || values.empty()) throw Error("plot needs matching, non-empty series");
    constexpr double W = 360, H = 260, L = 40, B = 40, Top = 40;
    const double vmax = std::max(1e-12, *std::max_element(values.begin(), values.end()));
    const double slot = (W - L - 10) / static_cast<double>(values.size());
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
       << "</text>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double h = std::max(0.0, values[i]) / vmax * (H - Top - B);
        const double x = L + slot * static_cast<double>(i) + slot * 0.15;
        os << "<rect x=\"" << x << "\" y=\"" << H - B - h << "\" width=\"" << slot * 0.7 << "\" height=\"" << h
           << "\" fill=\"#1f77b4\"/>\n";
        os << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << H - B + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
           << xml_escape(labels[i]) << "</text>\n";
        os << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << H - B - h - 4
           << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_double(std::round(values[i] * 1000.0) / 1000.0)
           << "</text>\n";
    }
    os << "</svg>\n";
    write_text(path, os.str());
}

std::vector<LayerAnalysis> analyze_features(const pipeline::Extraction& extraction, const Backend& backend,
                                            const std::optional<fs::path>& out_dir) {
    const LatentShape shape = backend.latent_shape();
    const int scale = std::max(1, backend.image_height() / shape.h);
    std::vector<LayerAnalysis> out;
    for (const auto& [layer, features] : extraction.cache.residual) {
        LayerAnalysis a;
        a.layer = layer;
        a.pca = pca_project(features.cast<double>(), 3);
        a.rendering = Image(shape.h * scale, shape.w * scale);
        for (int k = 0; k < 3; ++k) {
            const auto col = a.pca.projection.col(k);
            const double lo = col.minCoeff();
            const double span = col.maxCoeff() - lo;
            for (int p = 0; p < static_cast<int>(shape.spatial()); ++p) {
                const float v = span > 0 ? static_cast<float>((col(p) - lo) / span) : 0.5f;
                const int y = p / shape.w;
                const int x = p % shape.w;
                for (int dy = 0; dy < scale; ++dy)
                    for (int dx = 0; dx < scale; ++dx) a.rendering.at(y * scale + dy, x * scale + dx, k) = v;
            }
        }
        out.push_back(std::move(a));
    }
    if (out_dir) {
        fs::create_directories(*out_dir);
        std::ostringstream table;
        table << "layer ratio_1 ratio_2 ratio_3 degenerate\n";
        for (const auto& a : out) {
            write_ppm(a.rendering, *out_dir / ("residual_pca_l" + std::to_string(a.layer) + ".ppm"));
            table << a.layer;
            for (double r : a.pca.explained_ratio) table << ' ' << fmt_double(r);
            table << ' ' << a.pca.degenerate << '\n';
            write_bar_plot(*out_dir / ("residual_pca_l" + std::to_string(a.layer) + ".svg"),
                           "explained variance, layer " + std::to_string(a.layer), {"PC1", "PC2", "PC3"},
                           a.pca.explained_ratio);
        }
        write_text(*out_dir / "analysis.txt", table.str());
    }
    return out;
}

} // namespace flexedit::bench
