// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/pipeline/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "flexedit/attention/blocks.hpp"
#include "flexedit/attention/injection.hpp"
#include "flexedit/core/errors.hpp"
#include "flexedit/core/tensor_io.hpp"

namespace flexedit::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Token indices of every word of `word` (as the backend tokenizes it) in `seq`.
std::vector<int> word_indices(const TokenSequence& seq, const std::string& word, const Backend& backend) {
    std::set<int> out;
    for (const auto& [key, spans] : backend.tokenize(word).word_spans) {
        (void)spans;
        for (int i : seq.word_tokens(key)) out.insert(i);
    }
    return {out.begin(), out.end()};
}

int count_if_flag(const InjectionSchedule& s, bool StepFlags::*flag) {
    return static_cast<int>(std::count_if(s.steps.begin(), s.steps.end(), [&](const StepFlags& f) { return f.*flag; }));
}

mask::EditMask mask_from_saliency(const mask::SaliencyMap& saliency, const EditConfig& config, int step,
                                  StepRecord& record) {
    const auto smoothed = mask::gaussian_smooth(saliency, config.mask_sigma, config.mask_radius);
    auto otsu = mask::otsu_threshold(smoothed, config.otsu_bins);
    otsu.mask.step_index = step;
    record.otsu_bin = otsu.threshold_bin;
    record.mask_degenerate = otsu.degenerate;
    return otsu.mask;
}

class InjectionObserver final : public flow::StepObserver {
public:
    InjectionObserver(const EditRequest& request, const attn::FeatureCache& cache, const flow::Trajectory& source,
                      const InjectionSchedule& schedule, const TokenMapping& mapping,
                      std::vector<int> target_word_tokens, std::optional<mask::SaliencyMap> fallback_saliency,
                      const LatentShape& shape)
        : request_(request),
          config_(request.config),
          cache_(cache),
          source_(source),
          schedule_(schedule),
          mapping_(mapping),
          target_word_tokens_(std::move(target_word_tokens)),
          fallback_saliency_(std::move(fallback_saliency)),
          shape_(shape) {}

    HookSet* hooks_for(int run_step, int from_step) override {
        StepRecord record;
        record.step = run_step;
        record.from_step = from_step;
        record.t = source_.at(from_step).t_value;
        record.flags = schedule_.steps.at(static_cast<std::size_t>(run_step));
        records_.push_back(record);

        const StepFlags& f = record.flags;
        const bool want_saliency = f.blend && request_.blended_word && !request_.user_mask &&
                                   !target_word_tokens_.empty();
        i2t_blocks_.clear();
        stats_ = {};
        if (!f.ca && !f.sa && !f.res && !want_saliency) return nullptr;

        hooks_ = HookSet();
        if (f.ca || f.sa || want_saliency) {
            const attn::StepFlags attn_flags{f.ca, f.sa, f.sa_adapt};
            for (int layer : config_.attn_layers) {
                hooks_.override_with(layer, HookKind::attention_probs,
                                     [this, attn_flags, want_saliency](int l, int text_len, std::vector<Matrix>& heads) {
                                         for (std::size_t h = 0; h < heads.size(); ++h) {
                                             const int head = static_cast<int>(h);
                                             if (want_saliency) {
                                                 const Eigen::Index n = heads[h].rows() - text_len;
                                                 i2t_blocks_.push_back(heads[h].bottomLeftCorner(n, text_len));
                                             }
                                             if (attn_flags.ca || attn_flags.sa) {
                                                 attn::inject_head(heads[h], text_len, l, head,
                                                                   cache_.attention_at(l, head), mapping_,
                                                                   config_.alpha, config_.k, attn_flags, &stats_);
                                             }
                                         }
                                     });
            }
        }
        if (f.res) {
            for (int layer : config_.res_layers) {
                hooks_.replace_with(layer, HookKind::residual_image_out, {cache_.residual_at(layer)});
            }
        }
        return &hooks_;
    }

    void after_step(int run_step, HookSet*, LatentGrid& next) override {
        StepRecord& record = records_.back();
        record.guarded_rows = stats_.guarded_rows;
        if (!schedule_.steps.at(static_cast<std::size_t>(run_step)).blend) return;

        std::optional<mask::EditMask> m;
        if (request_.user_mask) {
            m = *request_.user_mask;
        } else if (request_.blended_word) {
            if (!i2t_blocks_.empty()) {
                const auto saliency = mask::word_saliency(i2t_blocks_, target_word_tokens_, shape_.h, shape_.w);
                m = mask_from_saliency(saliency, config_, next.step_index, record);
            } else if (fallback_saliency_) {
                m = mask_from_saliency(*fallback_saliency_, config_, next.step_index, record);
            }
        }
        if (!m) return;
        m->step_index = next.step_index;
        next = mask::blend_latents(next, source_.at(next.step_index), *m);
        record.mask_coverage = m->coverage();
        last_mask_ = std::move(m);
    }

    std::vector<StepRecord> take_records() { return std::move(records_); }
    std::optional<mask::EditMask> last_mask() const { return last_mask_; }

private:
    const EditRequest& request_;
    const EditConfig& config_;
    const attn::FeatureCache& cache_;
    const flow::Trajectory& source_;
    const InjectionSchedule& schedule_;
    const TokenMapping& mapping_;
    std::vector<int> target_word_tokens_;
    std::optional<mask::SaliencyMap> fallback_saliency_;
    LatentShape shape_;

    HookSet hooks_;
    std::vector<Matrix> i2t_blocks_;
    attn::SaAdaptStats stats_;
    std::vector<StepRecord> records_;
    std::optional<mask::EditMask> last_mask_;
};

// The blended word may come from the request or from the config; both end up set.
EditRequest normalized(const EditRequest& request) {
    EditRequest out = request;
    if (!out.blended_word) out.blended_word = out.config.blended_word;
    out.config.blended_word = out.blended_word;
    return out;
}

} // namespace

int InjectionSchedule::count_ca() const { return count_if_flag(*this, &StepFlags::ca); }
int InjectionSchedule::count_sa() const { return count_if_flag(*this, &StepFlags::sa); }
int InjectionSchedule::count_sa_adapt() const { return count_if_flag(*this, &StepFlags::sa_adapt); }
int InjectionSchedule::count_res() const { return count_if_flag(*this, &StepFlags::res); }
int InjectionSchedule::count_blend() const { return count_if_flag(*this, &StepFlags::blend); }

InjectionSchedule build_schedule(const EditConfig& config, bool has_source_prompt) {
    const int T = config.T;
    const int ca = has_source_prompt ? window_steps(config.frac_ca, T) : 0;
    const int sa = window_steps(has_source_prompt ? config.frac_sa : config.frac_sa_no_source, T);
    const int res = window_steps(has_source_prompt ? config.frac_res : config.frac_res_no_source, T);
    const int blend = window_steps(config.m_frac, T);
    const int adapt_from = config.resolved_sa_adapt_start(ca > 0);

    InjectionSchedule s;
    s.steps.resize(static_cast<std::size_t>(T));
    for (int g = 0; g < T; ++g) {
        StepFlags& f = s.steps[static_cast<std::size_t>(g)];
        f.ca = g < ca;
        f.sa = g < sa;
        f.sa_adapt = f.sa && g + 1 >= adapt_from;
        f.res = g < res;
        f.blend = g < blend;
    }
    return s;
}

Extraction extract_mid_step(const Image& image, const std::optional<std::string>& source_prompt,
                            const EditConfig& config, const Backend& backend) {
    config.validate();
    config.validate_layers(backend.num_layers());
    const auto schedule = backend.schedule(config.T);
    const LatentGrid z0 = backend.encode(image);
    TokenSequence tokens = backend.tokenize(source_prompt.value_or(""));
    const ConditionedField field(backend, tokens);

    flow::Trajectory traj = flow::noised_invert(z0, config, schedule, field);

    HookSet hooks;
    hooks.capture(config.attn_layers, HookKind::attention_probs);
    hooks.capture(config.res_layers, HookKind::residual_image_out);
    const int tp = config.t_prime;
    backend.velocity(traj.at(tp), schedule.t(tp), tokens, &hooks, {});
    attn::FeatureCache cache = attn::capture_features(hooks.take_events(), config, tp);
    return Extraction{std::move(cache), std::move(traj), std::move(tokens)};
}

std::string mask_source(const EditRequest& request) {
    if (request.user_mask) return "user_mask";
    if ((request.blended_word || request.config.blended_word) && request.source_prompt) return "word";
    return "none";
}

GenerationResult generate_with_injection(const EditRequest& raw_request, const attn::FeatureCache& cache,
                                         const flow::Trajectory& source_traj, const InjectionSchedule& schedule,
                                         const Backend& backend) {
    const EditRequest request = normalized(raw_request);
    const EditConfig& config = request.config;
    if (static_cast<int>(schedule.steps.size()) != config.T) {
        throw ValidationError("schedule", "has " + std::to_string(schedule.steps.size()) + " steps, T is " +
                                              std::to_string(config.T));
    }
    const auto time_schedule = backend.schedule(config.T);
    const TokenSequence target = backend.tokenize(request.target_prompt);
    std::optional<TokenSequence> source;
    if (request.source_prompt) source = backend.tokenize(*request.source_prompt);
    const TokenMapping mapping = source ? build_token_mapping(*source, target) : build_token_mapping(std::nullopt, target);

    const LatentShape shape = backend.latent_shape();
    std::vector<int> target_word_tokens;
    std::optional<mask::SaliencyMap> fallback;
    if (request.blended_word && source && !request.user_mask) {
        const auto source_word = word_indices(*source, *request.blended_word, backend);
        for (int i = 0; i < mapping.target_size(); ++i) {
            const auto f = mapping[i];
            if (f && std::binary_search(source_word.begin(), source_word.end(), *f)) target_word_tokens.push_back(i);
        }
        if (target_word_tokens.empty() && !source_word.empty()) {
            // The word was replaced in the target: read its saliency from the cached source attention.
            std::vector<Matrix> blocks;
            for (const auto& [key, features] : cache.attention) blocks.push_back(features.ca_source);
            if (!blocks.empty()) fallback = mask::word_saliency(blocks, source_word, shape.h, shape.w);
        }
    }

    InjectionObserver observer(request, cache, source_traj, schedule, mapping, std::move(target_word_tokens),
                               std::move(fallback), shape);
    const ConditionedField field(backend, target);
    const LatentGrid& start = source_traj.at(config.T);
    flow::Trajectory out = flow::euler_sample(start, time_schedule, field, &observer);
    return GenerationResult{out.at(0), observer.take_records(), observer.last_mask()};
}

void validate_request(const EditRequest& raw_request, const Backend& backend) {
    const EditRequest request = normalized(raw_request);
    request.config.validate();
    request.config.validate_layers(backend.num_layers());
    if (request.image.height != backend.image_height() || request.image.width != backend.image_width()) {
        throw ValidationError("image", "must be " + std::to_string(backend.image_height()) + "x" +
                                           std::to_string(backend.image_width()));
    }
    if (request.blended_word) {
        if (!request.source_prompt) throw ValidationError("blended_word", "requires a source prompt");
        if (word_indices(backend.tokenize(*request.source_prompt), *request.blended_word, backend).empty()) {
            throw ValidationError("blended_word", "'" + *request.blended_word + "' does not appear in the source prompt");
        }
    }
    if (request.user_mask) {
        const auto shape = backend.latent_shape();
        if (request.user_mask->h != shape.h || request.user_mask->w != shape.w) {
            throw ValidationError("user_mask", "must be " + std::to_string(shape.h) + "x" + std::to_string(shape.w));
        }
    }
}

EditResult edit_with_extraction(const EditRequest& raw_request, const Extraction& extraction, const Backend& backend) {
    const EditRequest request = normalized(raw_request);
    validate_request(request, backend);
    const auto start = Clock::now();
    const bool has_source = request.source_prompt.has_value();

    InjectionSchedule schedule = build_schedule(request.config, has_source);
    const std::string blend_source = mask_source(request);
    if (blend_source == "none") {
        for (auto& f : schedule.steps) f.blend = false;
    }
    GenerationResult gen =
        generate_with_injection(request, extraction.cache, extraction.trajectory, schedule, backend);
    const double generate_ms = elapsed_ms(start);

    const auto decode_start = Clock::now();
    Image image = backend.decode(gen.latent);

    EditReport report;
    report.config = request.config;
    report.has_source_prompt = has_source;
    report.blend_source = blend_source;
    const TokenSequence target = backend.tokenize(request.target_prompt);
    report.target_tokens = target.size();
    if (has_source) {
        const TokenSequence source = backend.tokenize(*request.source_prompt);
        report.source_tokens = source.size();
        report.mapped_tokens = build_token_mapping(source, target).mapped_count();
    }
    report.schedule = schedule;
    report.steps = std::move(gen.steps);
    if (gen.last_mask) report.final_mask_coverage = gen.last_mask->coverage();
    report.timings.generate_ms = generate_ms;
    report.timings.decode_ms = elapsed_ms(decode_start);
    report.timings.total_ms = elapsed_ms(start);

    for (const auto& r : report.steps) {
        if (r.guarded_rows > 0) {
            spdlog::warn("step {}: {} I2I-SA rows had zero target mass inside the top-k set", r.step, r.guarded_rows);
        }
    }
    return EditResult{std::move(image), std::move(gen.latent), std::move(report), std::move(gen.last_mask)};
}

EditResult reflex_edit(const EditRequest& raw_request, const Backend& backend, const EditOptions& options) {
    const EditRequest request = normalized(raw_request);
    validate_request(request, backend);
    const auto start = Clock::now();
    const Extraction extraction = extract_mid_step(request.image, request.source_prompt, request.config, backend);
    const double extract_ms = elapsed_ms(start);
    EditResult result = edit_with_extraction(request, extraction, backend);
    result.report.timings.extract_ms = extract_ms;
    result.report.timings.total_ms = elapsed_ms(start);

    if (options.dump_dir) {
        const auto& dir = *options.dump_dir;
        flow::write_trajectory(extraction.trajectory, dir / "inversion");
        attn::export_cache(extraction.cache, dir / "cache");
        write_tensor(result.latent.to_tensor(), dir / "edited_latent.rtn");
        if (result.final_mask) mask::write_mask(*result.final_mask, dir / "final_mask.pgm");
    }
    return result;
}

std::string format_report(const EditReport& report, bool include_timings) {
    std::ostringstream os;
    os << "# edit report\n";
    os << "has_source_prompt = " << (report.has_source_prompt ? "true" : "false") << '\n';
    os << "blending = " << (report.blend_source == "none" ? "disabled" : "enabled") << '\n';
    os << "blend_source = " << report.blend_source << '\n';
    os << "source_tokens = " << report.source_tokens << '\n';
    os << "target_tokens = " << report.target_tokens << '\n';
    os << "mapped_tokens = " << report.mapped_tokens << '\n';
    os << "ca_steps = " << report.schedule.count_ca() << '\n';
    os << "sa_steps = " << report.schedule.count_sa() << '\n';
    os << "sa_adapt_steps = " << report.schedule.count_sa_adapt() << '\n';
    os << "res_steps = " << report.schedule.count_res() << '\n';
    os << "blend_steps = " << report.schedule.count_blend() << '\n';
    os << "final_mask_coverage = "
       << (report.final_mask_coverage ? fmt_double(*report.final_mask_coverage) : std::string("none")) << '\n';
    os << "\n[config]\n" << serialize_config(report.config);
    os << "\n[steps]\n";
    os << "step from_step t ca sa sa_adapt res blend mask_coverage otsu_bin degenerate guarded_rows\n";
    for (const auto& r : report.steps) {
        os << r.step << ' ' << r.from_step << ' ' << fmt_double(r.t) << ' ' << r.flags.ca << ' ' << r.flags.sa << ' '
           << r.flags.sa_adapt << ' ' << r.flags.res << ' ' << r.flags.blend << ' '
           << (r.mask_coverage ? fmt_double(*r.mask_coverage) : std::string("-")) << ' ' << r.otsu_bin << ' '
           << r.mask_degenerate << ' ' << r.guarded_rows << '\n';
    }
    if (include_timings) {
        os << "\n[timings_ms]\n";
        os << "extract = " << fmt_double(report.timings.extract_ms) << '\n';
        os << "generate = " << fmt_double(report.timings.generate_ms) << '\n';
        os << "decode = " << fmt_double(report.timings.decode_ms) << '\n';
        os << "total = " << fmt_double(report.timings.total_ms) << '\n';
    }
    return os.str();
}

} // namespace flexedit::pipeline
