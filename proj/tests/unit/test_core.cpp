// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "flexedit/core/config.hpp"
#include "flexedit/core/errors.hpp"
#include "flexedit/core/hooks.hpp"
#include "flexedit/core/image.hpp"
#include "flexedit/core/latent.hpp"
#include "flexedit/core/rng.hpp"
#include "flexedit/core/tensor_io.hpp"
#include "flexedit/core/tokens.hpp"
#include "support.hpp"

using namespace flexedit;
using flexedit::testing::Gen;

namespace {

template <typename Fn>
std::size_t format_error_offset(Fn&& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.offset();
    }
    FAIL("expected a FormatError");
    return 0;
}

// Textbook prefix-DP LCS length; the library uses a suffix table and a walk.
int lcs_length(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i)
        for (std::size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

} // namespace

TEST_CASE("tensor container round trips") {
    SUBCASE("2x2 identity") {
        const Tensor t({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
        CHECK(bit_equal(decode_tensor(encode_tensor(t)), t));
    }
    SUBCASE("scalar") {
        const Tensor t({}, {3.5f});
        const Tensor back = decode_tensor(encode_tensor(t));
        CHECK(back.rank() == 0);
        CHECK(bit_equal(back, t));
    }
    SUBCASE("header layout") {
        const auto bytes = encode_tensor(Tensor({3}, {1.0f, 2.0f, 3.0f}));
        REQUIRE(bytes.size() == 4 + 1 + 1 + 4 + 12);
        CHECK(std::memcmp(bytes.data(), "RTN1", 4) == 0);
        CHECK(bytes[4] == 0);
        CHECK(bytes[5] == 1);
        CHECK(bytes[6] == 3);
        CHECK(bytes[7] == 0);
        const std::uint32_t one = std::bit_cast<std::uint32_t>(1.0f);
        CHECK(bytes[10] == (one & 0xff));
        CHECK(bytes[13] == (one >> 24));
    }
    SUBCASE("file io") {
        const auto dir = testing::scratch_dir("tensor_io");
        const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
        write_tensor(t, dir / "t.rtn");
        CHECK(bit_equal(read_tensor(dir / "t.rtn"), t));
    }
}

TEST_CASE("random tensors of every rank round trip bit-exactly") {
    Gen g(11);
    const float specials[] = {0.0f, -0.0f, std::numeric_limits<float>::infinity(),
                              std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::quiet_NaN()};
    for (int trial = 0; trial < 200; ++trial) {
        const int rank = g.integer(0, 4);
        std::vector<std::uint32_t> dims;
        for (int r = 0; r < rank; ++r) dims.push_back(static_cast<std::uint32_t>(g.integer(0, 5)));
        std::vector<float> data(Tensor::element_count(dims));
        for (auto& v : data) v = g.coin(0.1) ? specials[g.integer(0, 4)] : std::bit_cast<float>(static_cast<std::uint32_t>(g.u64()));
        const Tensor t(dims, data);
        CHECK(bit_equal(decode_tensor(encode_tensor(t)), t));
    }
}

TEST_CASE("malformed tensor bytes report the byte offset") {
    const auto good = encode_tensor(Tensor({2, 2}, {1, 2, 3, 4}));
    auto bytes = good;

    SUBCASE("truncated payload") {
        bytes.pop_back();
        CHECK(format_error_offset([&] { decode_tensor(bytes); }) == bytes.size());
    }
    SUBCASE("bad magic") {
        bytes[2] = 'X';
        CHECK(format_error_offset([&] { decode_tensor(bytes); }) == 2);
    }
    SUBCASE("unsupported dtype") {
        bytes[4] = 7;
        CHECK(format_error_offset([&] { decode_tensor(bytes); }) == 4);
    }
    SUBCASE("rank above four") {
        bytes[5] = 5;
        CHECK(format_error_offset([&] { decode_tensor(bytes); }) == 5);
    }
    SUBCASE("truncated dims") {
        bytes.resize(8);
        CHECK_THROWS_AS(decode_tensor(bytes), FormatError);
    }
    SUBCASE("trailing bytes") {
        bytes.push_back(0);
        CHECK(format_error_offset([&] { decode_tensor(bytes); }) == good.size());
    }
    SUBCASE("rank five cannot be written") {
        CHECK_THROWS_AS(encode_tensor(Tensor({1, 1, 1, 1, 1}, {1.0f})), DimensionError);
    }
}

TEST_CASE("config defaults and overrides") {
    SUBCASE("empty text gives the published defaults") {
        const EditConfig c = load_config(std::nullopt);
        CHECK(c.T == 28);
        CHECK(c.t_prime == 14);
        CHECK(c.alpha == 4.0);
        CHECK(c.k == 20);
        CHECK(c.frac_ca == 0.4);
        CHECK(c.frac_sa == 0.25);
        CHECK(c.frac_res == 0.15);
        CHECK(c.m_frac == 0.7);
        CHECK(c.n_noising == 7);
        CHECK(c.attn_layers == layer_range(20, 45));
        CHECK(c.res_layers == layer_range(13, 19));
        CHECK(c.resolved_sa_adapt_start(true) == 2);
        CHECK(c.resolved_sa_adapt_start(false) == 4);
    }
    SUBCASE("alpha override leaves everything else") {
        EditConfig expected;
        expected.alpha = 1.0;
        CHECK(parse_config("", {{"alpha", "1"}}) == expected);
    }
    SUBCASE("t_prime zero is rejected naming the field") {
        try {
            parse_config("", {{"t_prime", "0"}});
            FAIL("expected a ValidationError");
        } catch (const ValidationError& e) {
            CHECK(e.field() == "t_prime");
        }
    }
    SUBCASE("overrides win over file text") {
        CHECK(parse_config("k = 5\nalpha = 2 # comment\n", {{"k", "7"}}).k == 7);
        CHECK(parse_config("k = 5\nalpha = 2 # comment\n").alpha == 2.0);
    }
    SUBCASE("changing T moves the default extraction step") {
        CHECK(parse_config("T = 10").t_prime == 5);
        CHECK(parse_config("T = 10\nt_prime = 3").t_prime == 3);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(parse_config("", {{"bogus", "1"}}), ValidationError);
        CHECK_THROWS_AS(parse_config("", {{"alpha", "0.5"}}), ValidationError);
        CHECK_THROWS_AS(parse_config("", {{"n_noising", "28"}}), ValidationError);
        CHECK_THROWS_AS(parse_config("", {{"k", "-1"}}), ValidationError);
        CHECK_THROWS_AS(parse_config("", {{"frac_ca", "1.5"}}), ValidationError);
        CHECK_THROWS_AS(parse_config("", {{"k", "abc"}}), ValidationError);
        try {
            parse_config("T = 28\n\njust words\n");
            FAIL("expected a ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("layer sets are checked against the model") {
        const EditConfig c;
        CHECK_NOTHROW(c.validate_layers(57));
        CHECK_THROWS_AS(c.validate_layers(12), ValidationError);
    }
}

TEST_CASE("layer set syntax") {
    CHECK(parse_layer_set("13-19") == layer_range(13, 19));
    CHECK(parse_layer_set("1,3,5-7") == LayerSet{1, 3, 5, 6, 7});
    CHECK(parse_layer_set("7,1,1") == LayerSet{1, 7});
    CHECK(parse_layer_set("").empty());
    CHECK(parse_layer_set("none").empty());
    CHECK(format_layer_set({1, 3, 5, 6, 7}) == "1,3,5-7");
    CHECK(format_layer_set({}) == "none");
    CHECK_THROWS_AS(parse_layer_set("5-3"), ValidationError);
    CHECK_THROWS_AS(parse_layer_set("a"), ValidationError);
}

TEST_CASE("fractional windows use the floor rule") {
    CHECK(window_steps(0.4, 28) == 11);
    CHECK(window_steps(0.25, 28) == 7);
    CHECK(window_steps(0.15, 28) == 4);
    CHECK(window_steps(0.7, 28) == 19);
    CHECK(window_steps(1.0, 28) == 28);
    CHECK(window_steps(0.0, 28) == 0);
    CHECK(window_steps(0.5, 7) == 3);
}

TEST_CASE("config serialization is idempotent on random configs") {
    Gen g(5);
    for (int trial = 0; trial < 100; ++trial) {
        EditConfig c;
        c.T = g.integer(1, 60);
        c.t_prime = g.integer(1, c.T);
        c.alpha = 1.0 + g.real(0, 10);
        c.k = g.integer(0, 300);
        c.frac_ca = g.real();
        c.frac_sa = g.real();
        c.frac_res = g.real();
        c.frac_sa_no_source = g.real();
        c.frac_res_no_source = g.real();
        c.m_frac = g.real();
        c.n_noising = g.integer(0, c.T - 1);
        c.attn_layers.clear();
        for (int l = 0; l < 60; ++l)
            if (g.coin(0.3)) c.attn_layers.push_back(l);
        c.res_layers = layer_range(g.integer(0, 10), g.integer(10, 20));
        if (g.coin()) c.sa_adapt_start = g.integer(0, 10);
        c.seed = g.u64();
        if (g.coin()) c.blended_word = "w" + std::to_string(g.integer(0, 99));
        c.mask_sigma = g.real(0.1, 5);
        c.mask_radius = g.integer(0, 8);
        c.otsu_bins = g.integer(2, 512);
        REQUIRE_NOTHROW(c.validate());
        const std::string text = serialize_config(c);
        const EditConfig back = parse_config(text);
        CHECK(back == c);
        CHECK(serialize_config(back) == text);
    }
}

TEST_CASE("token mapping by longest common subsequence") {
    // "a goat and a cat" -> "a horse and a cat", one id per word.
    const std::vector<int> source{1, 2, 3, 1, 4};
    const std::vector<int> target{1, 5, 3, 1, 4};
    const TokenMapping f = build_token_mapping(source, target);
    CHECK(f.target_size() == 5);
    CHECK(f.source_size() == 5);
    CHECK(f[0] == 0);
    CHECK_FALSE(f[1].has_value());
    CHECK(f[2] == 2);
    CHECK(f[3] == 3);
    CHECK(f[4] == 4);

    CHECK(build_token_mapping(source, source) == TokenMapping::identity(5));

    TokenSequence t;
    t.token_ids = target;
    t.embeddings = Matrix::Zero(5, 2);
    const TokenMapping none = build_token_mapping(std::nullopt, t);
    CHECK(none.target_size() == 5);
    CHECK(none.mapped_count() == 0);

    CHECK_THROWS_AS(TokenMapping({std::optional<int>(3)}, 3), MappingError);
    CHECK_THROWS_AS(TokenMapping({std::optional<int>(-1)}, 3), MappingError);
}

TEST_CASE("token mapping is total, monotone and maximal on random sequences") {
    Gen g(21);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<int> a(static_cast<std::size_t>(g.integer(1, 12)));
        std::vector<int> b(static_cast<std::size_t>(g.integer(1, 12)));
        for (auto& x : a) x = g.integer(0, 4);
        for (auto& x : b) x = g.integer(0, 4);
        const TokenMapping f = build_token_mapping(a, b);
        REQUIRE(f.target_size() == static_cast<int>(b.size()));
        int last = -1;
        for (int i = 0; i < f.target_size(); ++i) {
            if (!f[i]) continue;
            CHECK(*f[i] > last);
            CHECK(a[static_cast<std::size_t>(*f[i])] == b[static_cast<std::size_t>(i)]);
            last = *f[i];
        }
        CHECK(f.mapped_count() == lcs_length(a, b));
    }
}

TEST_CASE("token sequence invariants") {
    TokenSequence s;
    s.token_ids = {4, 5};
    s.embeddings = Matrix::Zero(2, 3);
    s.word_spans["cat"] = {TokenSpan{1, 2}};
    CHECK_NOTHROW(s.validate());
    CHECK(s.word_tokens("cat") == std::vector<int>{1});
    CHECK(s.word_tokens("dog").empty());
    s.word_spans["dog"] = {TokenSpan{1, 3}};
    CHECK_THROWS_AS(s.validate(), DimensionError);
    TokenSequence empty;
    CHECK_THROWS_AS(empty.validate(), DimensionError);
}

TEST_CASE("latents, rng and images") {
    SUBCASE("latent grid checks its size") {
        CHECK_THROWS_AS(LatentGrid(LatentShape{2, 2, 2}, std::vector<float>(7), 0, 0.0), DimensionError);
        const LatentGrid a(LatentShape{1, 2, 1}, {1.0f, 3.0f}, 0, 0.0);
        const LatentGrid b(LatentShape{1, 2, 1}, {0.0f, 1.0f}, 0, 0.0);
        CHECK(mean_squared_error(a, b) == doctest::Approx(2.5));
        const Tensor t = a.to_tensor();
        CHECK(t.dims == std::vector<std::uint32_t>{1, 2, 1});
        CHECK(bit_equal(LatentGrid::from_tensor(t, 0, 0.0).data, a.data));
    }
    SUBCASE("rng is seeded and labels separate streams") {
        Rng a(9), b(9);
        CHECK(a.normal_vector(16) == b.normal_vector(16));
        CHECK(derive_seed(9, 1) != derive_seed(9, 2));
        Rng c(3);
        double sum = 0.0, sq = 0.0;
        const int n = 20000;
        for (int i = 0; i < n; ++i) {
            const double v = c.normal();
            sum += v;
            sq += v * v;
        }
        CHECK(std::abs(sum / n) < 0.05);
        CHECK(std::abs(sq / n - 1.0) < 0.05);
    }
    SUBCASE("ppm and pgm round trip") {
        const auto dir = testing::scratch_dir("image_io");
        const Image img = quantize_8bit(testing::tiled_image(16, 24, 3));
        write_ppm(img, dir / "a.ppm");
        const Image back = read_ppm(dir / "a.ppm");
        CHECK(back.height == 16);
        CHECK(back.width == 24);
        CHECK(back.rgb == img.rgb);
        GrayImage g{2, 3, {0, 10, 20, 30, 40, 255}};
        write_pgm(g, dir / "g.pgm");
        CHECK(read_pgm(dir / "g.pgm").pixels == g.pixels);
        std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
        CHECK_THROWS_AS(read_ppm(dir / "bad.ppm"), CodecError);
        CHECK_THROWS_AS(read_ppm(dir / "missing.ppm"), CodecError);
    }
}

TEST_CASE("hook set capture, override and shape checks") {
    HookSet hooks;
    CHECK(hooks.empty());
    hooks.capture(3, HookKind::attention_probs);
    hooks.override_with(3, HookKind::attention_probs,
                        [](int, int, std::vector<Matrix>& t) { t[0].setConstant(2.0f); });
    CHECK(hooks.active(3, HookKind::attention_probs));
    CHECK_FALSE(hooks.active(3, HookKind::residual_image_out));

    std::vector<Matrix> tensors{Matrix::Ones(2, 2)};
    hooks.dispatch(3, HookKind::attention_probs, 1, tensors);
    CHECK(tensors[0](0, 0) == 2.0f);
    REQUIRE(hooks.events().size() == 1);
    CHECK(hooks.events()[0].tensors[0](0, 0) == 1.0f);  // captured before the override
    CHECK(hooks.events()[0].text_len == 1);
    CHECK(hooks.take_events().size() == 1);
    CHECK(hooks.events().empty());

    HookSet bad;
    bad.replace_with(5, HookKind::residual_image_out, {Matrix::Zero(3, 2)});
    std::vector<Matrix> res{Matrix::Zero(4, 2)};
    try {
        bad.dispatch(5, HookKind::residual_image_out, 0, res);
        FAIL("expected an InjectionError");
    } catch (const InjectionError& e) {
        CHECK(e.layer() == 5);
    }

    HookSet grow;
    grow.override_with(1, HookKind::attention_probs, [](int, int, std::vector<Matrix>& t) { t.push_back(t[0]); });
    std::vector<Matrix> one{Matrix::Zero(2, 2)};
    CHECK_THROWS_AS(grow.dispatch(1, HookKind::attention_probs, 0, one), InjectionError);
}
