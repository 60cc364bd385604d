// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include "flexedit/core/errors.hpp"
#include "flexedit/flow/engine.hpp"
#include "flexedit/pipeline/pipeline.hpp"
#include "support.hpp"

using namespace flexedit;
using namespace flexedit::pipeline;
using flexedit::testing::Gen;

namespace {

EditRequest make_request(int T = 8) {
    EditRequest r;
    r.image = testing::tiled_image(64, 64, 7);
    r.source_prompt = "a cat sitting on a mat";
    r.target_prompt = "a dog sitting on a mat";
    r.config = testing::small_config(T);
    return r;
}

// Every flag set is a prefix of the generation steps.
bool is_prefix(const InjectionSchedule& s, bool StepFlags::*flag) {
    bool seen_off = false;
    for (const auto& f : s.steps) {
        if (!(f.*flag)) seen_off = true;
        else if (seen_off) return false;
    }
    return true;
}

std::string report_value(const std::string& report, const std::string& key) {
    std::istringstream in(report);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key + " = ", 0) == 0) return line.substr(key.size() + 3);
    }
    return {};
}

} // namespace

TEST_CASE("injection schedules") {
    EditConfig c;
    SUBCASE("defaults with a source prompt") {
        const auto s = build_schedule(c, true);
        REQUIRE(s.steps.size() == 28);
        CHECK(s.count_ca() == 11);
        CHECK(s.count_sa() == 7);
        CHECK(s.count_res() == 4);
        CHECK(s.count_blend() == 19);
        CHECK(s.count_sa_adapt() == 6);
        CHECK_FALSE(s.steps[0].sa_adapt);
        CHECK(s.steps[1].sa_adapt);
    }
    SUBCASE("defaults without a source prompt") {
        const auto s = build_schedule(c, false);
        CHECK(s.count_ca() == 0);
        CHECK(s.count_sa() == 11);
        CHECK(s.count_res() == 7);
        CHECK(s.count_sa_adapt() == 8);
        CHECK_FALSE(s.steps[2].sa_adapt);
        CHECK(s.steps[3].sa_adapt);
    }
    SUBCASE("explicit adaptation start") {
        c.sa_adapt_start = 1;
        CHECK(build_schedule(c, true).count_sa_adapt() == 7);
        c.sa_adapt_start = 0;
        CHECK(build_schedule(c, false).count_sa_adapt() == 11);
    }
    SUBCASE("random configs give prefix windows with floor counts") {
        Gen g(50);
        for (int trial = 0; trial < 200; ++trial) {
            EditConfig r;
            r.T = g.integer(1, 60);
            r.frac_ca = g.real();
            r.frac_sa = g.real();
            r.frac_res = g.real();
            r.frac_sa_no_source = g.real();
            r.frac_res_no_source = g.real();
            r.m_frac = g.real();
            const bool src = g.coin();
            const auto s = build_schedule(r, src);
            CHECK(static_cast<int>(s.steps.size()) == r.T);
            CHECK(is_prefix(s, &StepFlags::ca));
            CHECK(is_prefix(s, &StepFlags::sa));
            CHECK(is_prefix(s, &StepFlags::res));
            CHECK(is_prefix(s, &StepFlags::blend));
            CHECK(s.count_ca() == (src ? window_steps(r.frac_ca, r.T) : 0));
            CHECK(s.count_sa() == window_steps(src ? r.frac_sa : r.frac_sa_no_source, r.T));
            CHECK(s.count_blend() == static_cast<int>(std::floor(r.m_frac * r.T + 1e-9)));
            CHECK(s.count_sa_adapt() <= s.count_sa());
            for (const auto& f : s.steps) CHECK((!f.sa_adapt || f.sa));
        }
    }
}

TEST_CASE("mid-step extraction") {
    const auto& b = testing::small_backend();
    const auto r = make_request();

    const Extraction a = extract_mid_step(r.image, r.source_prompt, r.config, b);
    CHECK(a.cache.extraction_step == 4);
    CHECK(a.trajectory.first_step() == 0);
    CHECK(a.trajectory.last_step() == 8);
    CHECK(bit_equal(a.trajectory.at(0).data, b.encode(r.image).data));
    CHECK(a.cache.attention.size() == 9 * 4);
    CHECK(a.cache.residual.size() == 3);
    CHECK(a.cache.text_len == 6);
    CHECK(a.source_tokens.size() == 6);

    const Extraction again = extract_mid_step(r.image, r.source_prompt, r.config, b);
    CHECK(attn::bit_equal(a.cache, again.cache));
    CHECK(bit_equal(a.trajectory.at(8).data, again.trajectory.at(8).data));

    EditConfig end = r.config;
    end.t_prime = 8;
    const Extraction at_end = extract_mid_step(r.image, r.source_prompt, end, b);
    CHECK(at_end.cache.extraction_step == 8);
    CHECK_FALSE(attn::bit_equal(at_end.cache, a.cache));

    const Extraction none = extract_mid_step(r.image, std::nullopt, r.config, b);
    CHECK(none.cache.text_len == 1);
    CHECK(none.source_tokens.token_ids == std::vector<int>{0});

    EditConfig bad = r.config;
    bad.attn_layers = {3, 12};
    CHECK_THROWS_AS(extract_mid_step(r.image, r.source_prompt, bad, b), ValidationError);
}

TEST_CASE("generation with an empty schedule is plain sampling") {
    const auto& b = testing::small_backend();
    auto r = make_request();
    const Extraction ex = extract_mid_step(r.image, r.source_prompt, r.config, b);
    InjectionSchedule empty;
    empty.steps.resize(8);
    const auto gen = generate_with_injection(r, ex.cache, ex.trajectory, empty, b);
    const ConditionedField target(b, b.tokenize(r.target_prompt));
    const auto plain = flow::euler_sample(ex.trajectory.at(8), b.schedule(8), target);
    CHECK(bit_equal(gen.latent.data, plain.at(0).data));
    REQUIRE(gen.steps.size() == 8);
    CHECK(gen.steps[0].from_step == 8);
    CHECK(gen.steps[7].from_step == 1);
    CHECK_FALSE(gen.last_mask);

    SUBCASE("an all-ones user mask does not change the result") {
        r.user_mask = mask::EditMask::filled(16, 16, true);
        InjectionSchedule blend_only = empty;
        for (auto& f : blend_only.steps) f.blend = true;
        const auto out = generate_with_injection(r, ex.cache, ex.trajectory, blend_only, b);
        CHECK(bit_equal(out.latent.data, plain.at(0).data));
        CHECK(out.steps[3].mask_coverage == 1.0);
    }
    SUBCASE("schedule length must match T") {
        InjectionSchedule short_schedule;
        short_schedule.steps.resize(7);
        CHECK_THROWS_AS(generate_with_injection(r, ex.cache, ex.trajectory, short_schedule, b), ValidationError);
    }
}

TEST_CASE("blending keeps the source outside the mask") {
    const auto& b = testing::small_backend();
    auto r = make_request();
    r.config.m_frac = 1.0;
    const Extraction ex = extract_mid_step(r.image, r.source_prompt, r.config, b);
    const LatentGrid& z0 = ex.trajectory.at(0);

    SUBCASE("an empty user mask returns the source latent") {
        r.user_mask = mask::EditMask::filled(16, 16, false);
        const auto out = edit_with_extraction(r, ex, b);
        CHECK(bit_equal(out.latent.data, z0.data));
        CHECK(out.report.final_mask_coverage == 0.0);
    }
    SUBCASE("a partial user mask") {
        mask::EditMask m = mask::EditMask::filled(16, 16, false);
        for (int y = 4; y < 12; ++y)
            for (int x = 2; x < 9; ++x) m.bits[y * 16 + x] = 1;
        r.user_mask = m;
        const auto out = edit_with_extraction(r, ex, b);
        CHECK(out.report.blend_source == "user_mask");
        bool inside_changed = false;
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                for (int c = 0; c < 4; ++c) {
                    if (!m.at(y, x)) CHECK(out.latent.at(y, x, c) == z0.at(y, x, c));
                    else inside_changed |= out.latent.at(y, x, c) != z0.at(y, x, c);
                }
            }
        }
        CHECK(inside_changed);
    }
    SUBCASE("word masks are recomputed every blended step") {
        r.blended_word = "mat";
        r.target_prompt = "a dog sitting on a mat";
        const auto out = edit_with_extraction(r, ex, b);
        CHECK(out.report.blend_source == "word");
        REQUIRE(out.final_mask);
        for (const auto& s : out.report.steps) {
            CHECK(s.flags.blend);
            CHECK(s.mask_coverage.has_value());
            CHECK(s.otsu_bin >= 0);
        }
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                if (out.final_mask->at(y, x)) continue;
                for (int c = 0; c < 4; ++c) CHECK(out.latent.at(y, x, c) == z0.at(y, x, c));
            }
        }
    }
    SUBCASE("a replaced word falls back to the cached source attention") {
        r.blended_word = "cat";
        const auto out = edit_with_extraction(r, ex, b);
        REQUIRE(out.final_mask);
        for (const auto& s : out.report.steps) CHECK(s.otsu_bin >= 0);
        // The fallback saliency is fixed, so every step uses the same mask.
        double first = *out.report.steps.front().mask_coverage;
        for (const auto& s : out.report.steps) CHECK(*s.mask_coverage == first);
    }
}

TEST_CASE("top-k of zero matches unadapted source self-attention injection") {
    const auto& b = testing::small_backend();
    auto r = make_request();
    r.config.frac_sa = 0.5;
    r.config.m_frac = 0.0;
    const Extraction ex = extract_mid_step(r.image, r.source_prompt, r.config, b);
    auto zero_k = r;
    zero_k.config.k = 0;
    const auto schedule = build_schedule(r.config, true);
    REQUIRE(schedule.count_sa_adapt() > 0);
    auto no_adapt = schedule;
    for (auto& f : no_adapt.steps) f.sa_adapt = false;
    const auto a = generate_with_injection(zero_k, ex.cache, ex.trajectory, schedule, b);
    const auto c = generate_with_injection(r, ex.cache, ex.trajectory, no_adapt, b);
    CHECK(bit_equal(a.latent.data, c.latent.data));
    const auto d = generate_with_injection(r, ex.cache, ex.trajectory, schedule, b);
    CHECK_FALSE(bit_equal(a.latent.data, d.latent.data));
}

TEST_CASE("full edit and report") {
    const auto& b = testing::small_backend();
    auto r = make_request();
    r.blended_word = "mat";
    const auto dump = testing::scratch_dir("pipeline_dump");
    const auto out = reflex_edit(r, b, EditOptions{dump});
    CHECK(out.image.height == 64);
    CHECK(out.latent.step_index == 0);

    const Extraction ex = extract_mid_step(r.image, r.source_prompt, r.config, b);
    const auto reused = edit_with_extraction(r, ex, b);
    CHECK(bit_equal(reused.latent.data, out.latent.data));

    const std::string text = format_report(out.report, false);
    CHECK(text == format_report(reused.report, false));
    CHECK(text.find("[timings_ms]") == std::string::npos);
    CHECK(format_report(out.report, true).find("[timings_ms]") != std::string::npos);
    const auto s = build_schedule(r.config, true);
    CHECK(report_value(text, "ca_steps") == std::to_string(s.count_ca()));
    CHECK(report_value(text, "sa_steps") == std::to_string(s.count_sa()));
    CHECK(report_value(text, "sa_adapt_steps") == std::to_string(s.count_sa_adapt()));
    CHECK(report_value(text, "res_steps") == std::to_string(s.count_res()));
    CHECK(report_value(text, "blend_steps") == std::to_string(s.count_blend()));
    CHECK(report_value(text, "blending") == "enabled");
    CHECK(report_value(text, "source_tokens") == "6");
    CHECK(report_value(text, "mapped_tokens") == "5");
    CHECK(report_value(text, "blended_word") == "mat");

    CHECK(std::filesystem::exists(dump / "inversion" / "index.txt"));
    CHECK(std::filesystem::exists(dump / "cache" / "manifest.txt"));
    CHECK(std::filesystem::exists(dump / "edited_latent.rtn"));
    CHECK(std::filesystem::exists(dump / "final_mask.pgm"));

    SUBCASE("no source prompt disables blending") {
        auto plain = make_request();
        plain.source_prompt.reset();
        const auto res = reflex_edit(plain, b);
        const std::string t = format_report(res.report, false);
        CHECK(report_value(t, "blending") == "disabled");
        CHECK(report_value(t, "ca_steps") == "0");
        CHECK(report_value(t, "blend_steps") == "0");
        CHECK(report_value(t, "has_source_prompt") == "false");
        CHECK_FALSE(res.final_mask);
    }
}

TEST_CASE("request validation") {
    const auto& b = testing::small_backend();
    auto bad = [&](auto edit, const char* field) {
        auto r = make_request();
        edit(r);
        try {
            validate_request(r, b);
            FAIL("expected a ValidationError");
        } catch (const ValidationError& e) {
            CHECK(e.field() == field);
        }
    };
    CHECK_NOTHROW(validate_request(make_request(), b));
    bad([](EditRequest& r) { r.image = Image(32, 32); }, "image");
    bad([](EditRequest& r) { r.source_prompt.reset(), r.blended_word = "cat"; }, "blended_word");
    bad([](EditRequest& r) { r.blended_word = "bird"; }, "blended_word");
    bad([](EditRequest& r) { r.config.blended_word = "bird"; }, "blended_word");
    bad([](EditRequest& r) { r.user_mask = mask::EditMask::filled(8, 8, true); }, "user_mask");
    bad([](EditRequest& r) { r.config.res_layers = {40}; }, "res_layers");
    bad([](EditRequest& r) { r.config.t_prime = 9; }, "t_prime");

    auto r = make_request();
    CHECK(mask_source(r) == "none");
    r.blended_word = "cat";
    CHECK(mask_source(r) == "word");
    r.user_mask = mask::EditMask::filled(16, 16, true);
    CHECK(mask_source(r) == "user_mask");
}
