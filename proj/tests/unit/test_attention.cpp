// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flexedit/attention/adaptation.hpp"
#include "flexedit/attention/blocks.hpp"
#include "flexedit/attention/feature_cache.hpp"
#include "flexedit/attention/injection.hpp"
#include "flexedit/core/errors.hpp"
#include "support.hpp"

using namespace flexedit;
using namespace flexedit::attn;
using flexedit::testing::Gen;

namespace {

Matrix make(int rows, int cols, std::initializer_list<float> values) {
    Matrix m(rows, cols);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

// Sort (value desc, index asc), keep the first k, return ascending indices.
std::vector<int> brute_topk(const Matrix& m, int row, int k) {
    std::vector<int> idx(static_cast<std::size_t>(m.cols()));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return m(row, a) > m(row, b); });
    idx.resize(static_cast<std::size_t>(std::clamp<Eigen::Index>(k, 0, m.cols())));
    std::sort(idx.begin(), idx.end());
    return idx;
}

HookEvent attention_event(int layer, int text_len, std::vector<Matrix> heads) {
    return HookEvent{layer, HookKind::attention_probs, text_len, std::move(heads)};
}

HookEvent residual_event(int layer, int text_len, Matrix m) {
    return HookEvent{layer, HookKind::residual_image_out, text_len, {std::move(m)}};
}

} // namespace

TEST_CASE("joint attention splits into modality blocks") {
    Gen g(10);
    const Matrix full = g.stochastic(7, 7);
    const auto b = decompose_joint_attention(full, 3, 5, 2);
    CHECK(b.layer == 5);
    CHECK(b.head == 2);
    CHECK(b.text_len() == 3);
    CHECK(b.image_len() == 4);
    CHECK(b.t2t.rows() == 3);
    CHECK(b.t2i.cols() == 4);
    CHECK(b.i2t.rows() == 4);
    CHECK(b.i2t.cols() == 3);
    CHECK(b.i2t(1, 2) == full(4, 2));
    CHECK(b.i2i(3, 0) == full(6, 3));
    CHECK(b.recompose() == full);
    CHECK(rows_are_distributions(full));

    const auto no_text = decompose_joint_attention(full, 0);
    CHECK(no_text.i2i == full);

    CHECK_THROWS_AS(decompose_joint_attention(full, 8), DimensionError);
    CHECK_THROWS_AS(decompose_joint_attention(Matrix(3, 4), 1), DimensionError);
    CHECK_FALSE(rows_are_distributions(make(1, 2, {0.5f, 0.6f})));
}

TEST_CASE("I2T-CA adaptation") {
    SUBCASE("hand example") {
        const Matrix target = make(2, 2, {0.1f, 0.3f, 0.2f, 0.4f});
        const Matrix cache = make(2, 2, {0.5f, 0.9f, 0.6f, 0.7f});
        const TokenMapping f({0, std::nullopt}, 2);
        const Matrix out = adapt_i2t_ca(target, cache, f, 2.0);
        CHECK(out(0, 0) == 0.5f);
        CHECK(out(1, 0) == 0.6f);
        CHECK(out(0, 1) == doctest::Approx(0.6));
        CHECK(out(1, 1) == doctest::Approx(0.8));
    }
    SUBCASE("identity mapping returns the cache") {
        Gen g(11);
        const Matrix target = g.stochastic(6, 4);
        const Matrix cache = g.stochastic(6, 4);
        CHECK(adapt_i2t_ca(target, cache, TokenMapping::identity(4), 4.0) == cache);
        CHECK(adapt_i2t_ca(target, cache, TokenMapping::unmapped(4), 1.0) == target);
    }
    SUBCASE("errors") {
        const Matrix target(3, 2);
        CHECK_THROWS_AS(adapt_i2t_ca(target, Matrix(3, 2), TokenMapping::identity(3), 1.0), MappingError);
        CHECK_THROWS_AS(adapt_i2t_ca(target, Matrix(4, 2), TokenMapping::identity(2), 1.0), DimensionError);
        CHECK_THROWS_AS(adapt_i2t_ca(target, Matrix(3, 1), TokenMapping({0, 1}, 2), 1.0), MappingError);
    }
    SUBCASE("scaling keeps the argmax over unmapped columns") {
        Gen g(12);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = g.integer(1, 12);
            const int lt = g.integer(1, 9);
            const int ls = g.integer(1, 9);
            const Matrix target = g.stochastic(n, lt);
            const Matrix cache = g.stochastic(n, ls);
            const TokenMapping f = g.mapping(lt, ls, 0.5);
            const double alpha = g.real(0.1, 10.0);
            const Matrix out = adapt_i2t_ca(target, cache, f, alpha);
            std::vector<int> unmapped;
            for (int i = 0; i < lt; ++i) {
                if (f[i]) {
                    CHECK(out.col(i) == cache.col(*f[i]));
                } else {
                    unmapped.push_back(i);
                }
            }
            if (unmapped.empty()) continue;
            for (int r = 0; r < n; ++r) {
                auto best = [&](const Matrix& m) {
                    int arg = unmapped.front();
                    for (int c : unmapped) {
                        if (m(r, c) > m(r, arg)) arg = c;
                    }
                    return arg;
                };
                CHECK(best(out) == best(target));
            }
        }
    }
}

TEST_CASE("top-k index sets") {
    const Matrix m = make(2, 4, {0.1f, 0.4f, 0.4f, 0.1f, 0.3f, 0.2f, 0.3f, 0.2f});
    const auto sets = topk_rows(m, 2);
    CHECK(sets[0] == std::vector<int>{1, 2});
    CHECK(sets[1] == std::vector<int>{0, 2});
    CHECK(topk_rows(m, 1)[0] == std::vector<int>{1});
    CHECK(topk_rows(m, 0)[0].empty());
    CHECK(topk_rows(m, 99)[1] == std::vector<int>{0, 1, 2, 3});

    Gen g(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = g.integer(1, 16);
        const Matrix s = g.stochastic(g.integer(1, 6), n, g.coin());
        const int k = g.integer(0, n + 2);
        const auto got = topk_rows(s, k);
        for (int r = 0; r < s.rows(); ++r) CHECK(got[static_cast<std::size_t>(r)] == brute_topk(s, r, k));
    }
}

TEST_CASE("I2I-SA adaptation") {
    SUBCASE("hand example") {
        const Matrix target = make(1, 3, {0.2f, 0.3f, 0.5f});
        const Matrix source = make(1, 3, {0.5f, 0.4f, 0.1f});
        const Matrix out = adapt_i2i_sa(target, source, 2);
        CHECK(out(0, 0) == doctest::Approx(0.36));
        CHECK(out(0, 1) == doctest::Approx(0.54));
        CHECK(out(0, 2) == 0.1f);
    }
    SUBCASE("k = 0 keeps the source and equal inputs are a fixed point") {
        Gen g(14);
        const Matrix target = g.stochastic(5, 5);
        const Matrix source = g.stochastic(5, 5);
        CHECK(adapt_i2i_sa(target, source, 0) == source);
        const Matrix same = adapt_i2i_sa(source, source, 3);
        CHECK(same.isApprox(source, 1e-6f));
    }
    SUBCASE("zero target mass falls back to the source row") {
        const Matrix target = make(2, 3, {0.0f, 0.0f, 1.0f, 0.2f, 0.3f, 0.5f});
        const Matrix source = make(2, 3, {0.5f, 0.4f, 0.1f, 0.5f, 0.4f, 0.1f});
        SaAdaptStats stats;
        const Matrix out = adapt_i2i_sa(target, source, 2, &stats);
        CHECK(stats.guarded_rows == 1);
        CHECK(out.row(0) == source.row(0));
        CHECK(out.allFinite());
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(adapt_i2i_sa(Matrix(2, 3), Matrix(3, 3), 1), DimensionError);
    }
    SUBCASE("row mass is preserved and k = 1 reproduces the source peak") {
        Gen g(15);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = g.integer(1, 20);
            const Matrix target = g.stochastic(n, n, g.coin(0.3));
            const Matrix source = g.stochastic(n, n, g.coin(0.3));
            const int k = g.integer(1, n);
            SaAdaptStats stats;
            const Matrix out = adapt_i2i_sa(target, source, k, &stats);
            const auto sets = topk_rows(source, k);
            for (int r = 0; r < n; ++r) {
                CHECK(std::abs(out.row(r).sum() - source.row(r).sum()) <= 1e-5f);
                double target_mass = 0.0;
                for (int j : sets[static_cast<std::size_t>(r)]) target_mass += target(r, j);
                if (target_mass == 0.0) continue;
                for (int j = 0; j < n; ++j) {
                    const auto& set = sets[static_cast<std::size_t>(r)];
                    if (!std::binary_search(set.begin(), set.end(), j)) CHECK(out(r, j) == source(r, j));
                }
            }
            const Matrix one = adapt_i2i_sa(target, source, 1);
            for (int r = 0; r < n; ++r) {
                const int j = topk_rows(source, 1)[static_cast<std::size_t>(r)].front();
                if (target(r, j) != 0.0f) CHECK(one(r, j) == doctest::Approx(source(r, j)).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("feature capture from hook events") {
    Gen g(16);
    EditConfig c;
    c.attn_layers = {2, 3};
    c.res_layers = {1};
    const int L = 3;
    const int N = 4;
    std::vector<HookEvent> events{
        residual_event(1, L, g.matrix(N, 8)),
        attention_event(2, L, {g.stochastic(L + N, L + N), g.stochastic(L + N, L + N)}),
        attention_event(3, L, {g.stochastic(L + N, L + N), g.stochastic(L + N, L + N)}),
        attention_event(7, L, {g.stochastic(L + N, L + N)}),
    };

    const FeatureCache cache = capture_features(events, c, 14);
    CHECK(cache.extraction_step == 14);
    CHECK(cache.text_len == L);
    CHECK(cache.image_len == N);
    CHECK(cache.attention.size() == 4);
    CHECK(cache.heads_per_layer() == 2);
    CHECK(cache.attention_layers() == LayerSet{2, 3});
    CHECK(cache.residual_layers() == LayerSet{1});
    CHECK_FALSE(cache.has_attention(7));
    CHECK(cache.attention_at(3, 1).ca_source == events[2].tensors[1].bottomLeftCorner(N, L));
    CHECK(cache.attention_at(3, 1).sa_source == events[2].tensors[1].bottomRightCorner(N, N));
    CHECK(cache.residual_at(1) == events[0].tensors[0]);
    CHECK_THROWS_AS(cache.attention_at(7, 0), LookupError);
    CHECK_THROWS_AS(cache.residual_at(2), LookupError);

    SUBCASE("empty layer sets give an empty cache") {
        EditConfig none;
        none.attn_layers.clear();
        none.res_layers.clear();
        const auto empty = capture_features(events, none, 3);
        CHECK(empty.attention.empty());
        CHECK(empty.residual.empty());
    }
    SUBCASE("missing layers name the layer") {
        EditConfig more = c;
        more.attn_layers = {2, 5};
        try {
            capture_features(events, more, 0);
            FAIL("expected a CaptureError");
        } catch (const CaptureError& e) {
            CHECK(e.layer() == 5);
        }
        more = c;
        more.res_layers = {9};
        CHECK_THROWS_AS(capture_features(events, more, 0), CaptureError);
    }
    SUBCASE("non-finite tensors are rejected") {
        auto bad = events;
        bad[1].tensors[0](0, 0) = std::numeric_limits<float>::infinity();
        CHECK_THROWS_AS(capture_features(bad, c, 0), CaptureError);
    }
    SUBCASE("export and import round trip") {
        const auto dir = testing::scratch_dir("feature_cache");
        export_cache(cache, dir);
        CHECK(std::filesystem::exists(dir / "manifest.txt"));
        const FeatureCache back = import_cache(dir);
        CHECK(bit_equal(back, cache));
        CHECK(back.extraction_step == 14);
    }
}

TEST_CASE("capture from the flux-layout toy model") {
    const auto& backend = testing::flux_backend();
    const EditConfig c;  // attn 20-45, res 13-19
    const auto text = backend.tokenize("a photo of a cat");
    const auto shape = backend.latent_shape();
    Gen g(17);
    const LatentGrid z(shape, g.floats(shape.size()), 14, 0.5);

    auto run = [&] {
        HookSet hooks;
        hooks.capture(c.attn_layers, HookKind::attention_probs);
        hooks.capture(c.res_layers, HookKind::residual_image_out);
        backend.velocity(z, 0.5, text, &hooks, {});
        return capture_features(hooks.events(), c, 14);
    };
    const FeatureCache a = run();
    CHECK(a.attention.size() == 26 * 4);
    CHECK(a.residual.size() == 7);
    CHECK(a.text_len == text.size());
    CHECK(a.image_len == shape.h * shape.w);
    for (const auto& [key, f] : a.attention) {
        CHECK(f.ca_source.cols() == text.size());
        CHECK(f.sa_source.rows() == shape.h * shape.w);
    }
    CHECK(bit_equal(a, run()));
}

TEST_CASE("injection by flags") {
    Gen g(18);
    const int L = 3;
    const int N = 5;
    const Matrix full = g.stochastic(L + N, L + N);
    const AttentionFeatures cached{g.stochastic(N, L), g.stochastic(N, N)};
    const TokenMapping f({0, std::nullopt, 2}, 3);
    const auto blocks = decompose_joint_attention(full, L, 4, 0);

    SUBCASE("no flags leave the matrix alone") {
        Matrix m = full;
        inject_head(m, L, 4, 0, cached, f, 2.0, 2, {});
        CHECK(m == full);
    }
    SUBCASE("ca only") {
        Matrix m = full;
        inject_head(m, L, 4, 0, cached, f, 2.0, 2, {true, false, false});
        CHECK(m.topRows(L) == full.topRows(L));
        CHECK(m.bottomLeftCorner(N, L) == adapt_i2t_ca(blocks.i2t, cached.ca_source, f, 2.0));
        CHECK(m.bottomRightCorner(N, N) == blocks.i2i);
    }
    SUBCASE("sa without adaptation copies the cache") {
        Matrix m = full;
        inject_head(m, L, 4, 0, cached, f, 2.0, 2, {false, true, false});
        CHECK(m.bottomLeftCorner(N, L) == blocks.i2t);
        CHECK(m.bottomRightCorner(N, N) == cached.sa_source);
    }
    SUBCASE("sa with adaptation") {
        Matrix m = full;
        SaAdaptStats stats;
        inject_head(m, L, 4, 0, cached, f, 2.0, 2, {true, true, true}, &stats);
        CHECK(m.bottomRightCorner(N, N) == adapt_i2i_sa(blocks.i2i, cached.sa_source, 2));
        CHECK(stats.guarded_rows == 0);
    }
    SUBCASE("shape mismatches raise InjectionError with the layer") {
        const AttentionFeatures wrong{g.stochastic(N + 1, L), g.stochastic(N + 1, N + 1)};
        Matrix m = full;
        try {
            inject_head(m, L, 4, 0, wrong, f, 2.0, 2, {true, false, false});
            FAIL("expected an InjectionError");
        } catch (const InjectionError& e) {
            CHECK(e.layer() == 4);
        }
        CHECK_THROWS_AS(inject_head(m, L, 4, 0, wrong, f, 2.0, 2, {false, true, false}), InjectionError);
        CHECK_THROWS_AS(inject_head(m, L, 4, 0, cached, TokenMapping::identity(2), 2.0, 2, {true, false, false}),
                        InjectionError);
    }
}
