// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/backend/toy_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include <Eigen/QR>

#include "flexedit/core/errors.hpp"
#include "flexedit/core/rng.hpp"

namespace flexedit::toy {

namespace {

using RowVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;

Matrix random_matrix(Rng& rng, int rows, int cols, double stddev) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal() * stddev);
    return m;
}

Matrix layer_norm(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const float mean = x.row(r).mean();
        const RowVec centered = x.row(r).array() - mean;
        const float var = centered.squaredNorm() / static_cast<float>(x.cols());
        out.row(r) = centered / std::sqrt(var + 1e-6f);
    }
    return out;
}

Matrix modulate(const Matrix& x, const RowVec& shift, const RowVec& scale) {
    Matrix out = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out.row(r) = x.row(r).cwiseProduct((scale.array() + 1.0f).matrix()) + shift;
    }
    return out;
}

Matrix scale_rows(const Matrix& x, const RowVec& gate) {
    Matrix out = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(r).cwiseProduct(gate);
    return out;
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

float gelu(float v) {
    constexpr float c = 0.7978845608028654f;
    return 0.5f * v * (1.0f + std::tanh(c * (v + 0.044715f * v * v * v)));
}

Matrix apply(const Matrix& x, float (*fn)(float)) { return x.unaryExpr(fn); }

void rms_norm_rows(Eigen::Ref<Matrix> x) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const float ms = x.row(r).squaredNorm() / static_cast<float>(x.cols());
        x.row(r) /= std::sqrt(ms + 1e-6f);
    }
}

Matrix sinusoid(int count, int dim, double offset_scale) {
    Matrix out(count, dim);
    const int half = dim / 2;
    for (int i = 0; i < count; ++i) {
        for (int j = 0; j < half; ++j) {
            const double freq = std::pow(10000.0, -static_cast<double>(j) / half);
            const double a = (i + offset_scale) * freq;
            out(i, j) = static_cast<float>(std::sin(a));
            out(i, half + j) = static_cast<float>(std::cos(a));
        }
    }
    return out;
}

RowVec time_features(double t, int dim) {
    RowVec out(dim);
    const int half = dim / 2;
    for (int j = 0; j < half; ++j) {
        const double freq = std::pow(1000.0, -static_cast<double>(j) / half);
        const double a = 1000.0 * t * freq;
        out(j) = static_cast<float>(std::sin(a));
        out(half + j) = static_cast<float>(std::cos(a));
    }
    return out;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool finite(const Matrix& m) { return m.allFinite(); }

struct StreamWeights {
    Matrix mod;    // [d, 6d]
    Matrix qkv;    // [d, 3d]
    Matrix proj;   // [d, d]
    Matrix mlp1;   // [d, r*d]
    Matrix mlp2;   // [r*d, d]
};

struct DoubleBlock {
    StreamWeights img;
    StreamWeights txt;
};

struct SingleBlock {
    Matrix mod;      // [d, 3d]
    Matrix linear1;  // [d, 3d + r*d]
    Matrix linear2;  // [d + r*d, d]
};

} // namespace

struct ToyBackend::Weights {
    Matrix img_in;       // [c, d]
    Matrix txt_in;       // [d_text, d]
    Matrix time1;        // [d, d]
    Matrix time2;        // [d, d]
    Matrix pooled;       // [d_text, d]
    Matrix vocab_table;  // [vocab, d_text]
    std::vector<DoubleBlock> doubles;
    std::vector<SingleBlock> singles;
    Matrix final_mod;    // [d, 2d]
    Matrix final_out;    // [d, c]
    Matrix img_pos;      // [N, d]
    Matrix encoder;      // [c, p*p*3]
    Matrix decoder;      // [p*p*3, c]
    float gate_bias = 0.0f;
};

BackendSpec BackendSpec::flux_layout() {
    BackendSpec spec;
    spec.n_double = 19;
    spec.n_single = 38;
    return spec;
}

void BackendSpec::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw SpecError(std::string("invalid backend spec: ") + what);
    };
    require(n_double >= 0 && n_single >= 0 && n_double + n_single >= 1, "need at least one block");
    require(d_model >= 2 && n_heads >= 1 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(d_model % 2 == 0, "d_model must be even");
    require(latent.h >= 1 && latent.w >= 1 && latent.c >= 4, "latent must be at least 1x1x4");
    require(patch >= 1, "patch must be positive");
    require(latent.c <= patch * patch * 3, "latent channels exceed patch size");
    require(d_text >= 1, "d_text must be positive");
    require(vocab >= 2, "vocab must hold padding and one word");
    require(mlp_ratio >= 1, "mlp_ratio must be positive");
}

std::vector<int> toy_token_ids(std::string_view prompt, int vocab, std::vector<std::string>* words) {
    std::vector<int> ids;
    std::size_t i = 0;
    while (i < prompt.size()) {
        while (i < prompt.size() && std::isspace(static_cast<unsigned char>(prompt[i]))) ++i;
        std::size_t j = i;
        while (j < prompt.size() && !std::isspace(static_cast<unsigned char>(prompt[j]))) ++j;
        std::string word;
        for (std::size_t k = i; k < j; ++k) word += static_cast<char>(std::tolower(static_cast<unsigned char>(prompt[k])));
        auto is_punct = [](char ch) { return std::ispunct(static_cast<unsigned char>(ch)) != 0; };
        while (!word.empty() && is_punct(word.back())) word.pop_back();
        std::size_t lead = 0;
        while (lead < word.size() && is_punct(word[lead])) ++lead;
        word.erase(0, lead);
        if (!word.empty()) {
            ids.push_back(1 + static_cast<int>(fnv1a(word) % static_cast<std::uint64_t>(vocab - 1)));
            if (words) words->push_back(word);
        }
        i = j;
    }
    return ids;
}

ToyBackend::ToyBackend(const BackendSpec& spec) : spec_(spec), weights_(std::make_unique<Weights>()) {
    spec_.validate();
    const int d = spec_.d_model;
    const int c = spec_.latent.c;
    const int r = spec_.mlp_ratio * d;
    const int pp3 = spec_.patch * spec_.patch * 3;
    Rng rng(spec_.seed);
    auto inv = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    const double mod_std = 0.5 / std::sqrt(static_cast<double>(d));

    Weights& w = *weights_;
    w.img_in = random_matrix(rng, c, d, inv(c));
    w.txt_in = random_matrix(rng, spec_.d_text, d, inv(spec_.d_text));
    w.time1 = random_matrix(rng, d, d, inv(d));
    w.time2 = random_matrix(rng, d, d, inv(d));
    w.pooled = random_matrix(rng, spec_.d_text, d, 0.5 * inv(spec_.d_text));
    w.vocab_table = random_matrix(rng, spec_.vocab, spec_.d_text, 1.0);
    auto stream = [&] {
        StreamWeights s;
        s.mod = random_matrix(rng, d, 6 * d, mod_std);
        s.qkv = random_matrix(rng, d, 3 * d, inv(d));
        s.proj = random_matrix(rng, d, d, inv(d));
        s.mlp1 = random_matrix(rng, d, r, inv(d));
        s.mlp2 = random_matrix(rng, r, d, inv(r));
        return s;
    };
    for (int i = 0; i < spec_.n_double; ++i) {
        DoubleBlock b;
        b.img = stream();
        b.txt = stream();
        w.doubles.push_back(std::move(b));
    }
    for (int i = 0; i < spec_.n_single; ++i) {
        SingleBlock b;
        b.mod = random_matrix(rng, d, 3 * d, mod_std);
        b.linear1 = random_matrix(rng, d, 3 * d + r, inv(d));
        b.linear2 = random_matrix(rng, d + r, d, inv(d + r));
        w.singles.push_back(std::move(b));
    }
    w.final_mod = random_matrix(rng, d, 2 * d, mod_std);
    w.final_out = random_matrix(rng, d, c, inv(d));
    w.img_pos = sinusoid(static_cast<int>(spec_.latent.spatial()), d, 0.0) * 0.5f;
    w.gate_bias = static_cast<float>(1.0 / std::sqrt(static_cast<double>(spec_.num_layers())));

    // Codec: per-colour patch means plus seeded texture directions, all
    // orthonormalised, mixed by a seeded orthogonal matrix.
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(pp3, c);
    const double dc = 1.0 / spec_.patch;
    for (int k = 0; k < pp3; ++k) basis(k, k % 3) = dc;
    for (int col = 3; col < c; ++col) {
        for (int k = 0; k < pp3; ++k) basis(k, col) = rng.normal();
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(pp3, c);
    // Keep the DC directions' sign so a brighter patch has larger channels.
    for (int col = 0; col < 3; ++col) {
        if (q.col(col).dot(basis.col(col)) < 0) q.col(col) *= -1.0;
    }
    Eigen::MatrixXd g(c, c);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> mix_qr(g);
    const Eigen::MatrixXd mix = mix_qr.householderQ() * Eigen::MatrixXd::Identity(c, c);
    const Eigen::MatrixXd enc = mix * q.transpose();
    const Eigen::MatrixXd dec = enc.completeOrthogonalDecomposition().pseudoInverse();
    w.encoder = enc.cast<float>();
    w.decoder = dec.cast<float>();
}

ToyBackend::~ToyBackend() = default;

TokenSequence ToyBackend::tokenize(std::string_view prompt) const {
    std::vector<std::string> words;
    TokenSequence seq;
    seq.token_ids = toy_token_ids(prompt, spec_.vocab, &words);
    for (std::size_t i = 0; i < words.size(); ++i) {
        const int at = static_cast<int>(i);
        seq.word_spans[words[i]].push_back(TokenSpan{at, at + 1});
    }
    if (seq.token_ids.empty()) seq.token_ids.push_back(0);
    seq.embeddings.resize(seq.size(), spec_.d_text);
    for (int i = 0; i < seq.size(); ++i) seq.embeddings.row(i) = weights_->vocab_table.row(seq.token_ids[i]);
    return seq;
}

LatentGrid ToyBackend::encode(const Image& image) const {
    if (image.height != image_height() || image.width != image_width()) {
        throw CodecError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         ", backend expects " + std::to_string(image_height()) + "x" + std::to_string(image_width()));
    }
    const int p = spec_.patch;
    LatentGrid z = LatentGrid::zeros(spec_.latent);
    Eigen::VectorXf patch(p * p * 3);
    for (int y = 0; y < spec_.latent.h; ++y) {
        for (int x = 0; x < spec_.latent.w; ++x) {
            int k = 0;
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int ch = 0; ch < 3; ++ch) patch(k++) = image.at(y * p + dy, x * p + dx, ch);
            const Eigen::VectorXf code = weights_->encoder * patch;
            for (int ch = 0; ch < spec_.latent.c; ++ch) z.at(y, x, ch) = code(ch);
        }
    }
    return z;
}

Image ToyBackend::decode(const LatentGrid& latent) const {
    if (!(latent.shape == spec_.latent)) throw CodecError("latent shape does not match backend");
    const int p = spec_.patch;
    Image out(image_height(), image_width());
    Eigen::VectorXf code(spec_.latent.c);
    for (int y = 0; y < spec_.latent.h; ++y) {
        for (int x = 0; x < spec_.latent.w; ++x) {
            for (int ch = 0; ch < spec_.latent.c; ++ch) code(ch) = latent.at(y, x, ch);
            const Eigen::VectorXf patch = weights_->decoder * code;
            int k = 0;
            for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx)
                    for (int ch = 0; ch < 3; ++ch) out.at(y * p + dy, x * p + dx, ch) = patch(k++);
        }
    }
    return out;
}

flow::TimestepSchedule ToyBackend::schedule(int steps) const { return flow::TimestepSchedule::uniform(steps); }

double ToyBackend::first_layer_checksum() const {
    const Matrix& m = weights_->doubles.empty() ? weights_->singles.front().linear1 : weights_->doubles.front().img.qkv;
    return m.cast<double>().sum();
}

namespace {

// Joint attention over `qkv` rows [q | k | v]; fires the probability hook and
// returns the concatenated head outputs.
Matrix joint_attention(const Matrix& qkv, int d, int heads, int layer, int text_len, HookSet* hooks) {
    const int rows = static_cast<int>(qkv.rows());
    const int dh = d / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<Matrix> probs(heads);
    std::vector<Matrix> values(heads);
    for (int h = 0; h < heads; ++h) {
        Matrix q = qkv.middleCols(h * dh, dh);
        Matrix k = qkv.middleCols(d + h * dh, dh);
        values[h] = qkv.middleCols(2 * d + h * dh, dh);
        rms_norm_rows(q);
        rms_norm_rows(k);
        Matrix s = (q * k.transpose()) * scale;
        for (int r = 0; r < rows; ++r) {
            const float mx = s.row(r).maxCoeff();
            s.row(r) = (s.row(r).array() - mx).exp();
            s.row(r) /= s.row(r).sum();
        }
        probs[h] = std::move(s);
    }
    if (hooks != nullptr && hooks->active(layer, HookKind::attention_probs)) {
        hooks->dispatch(layer, HookKind::attention_probs, text_len, probs);
    }
    Matrix out(rows, d);
    for (int h = 0; h < heads; ++h) out.middleCols(h * dh, dh) = probs[h] * values[h];
    return out;
}

RowVec segment(const RowVec& v, int index, int d) { return v.segment(static_cast<Eigen::Index>(index) * d, d); }

} // namespace

std::vector<float> ToyBackend::velocity(const LatentGrid& z, double t, const TokenSequence& text, HookSet* hooks,
                                        const Guidance&) const {
    if (!(z.shape == spec_.latent)) throw DimensionError("latent shape does not match backend");
    if (text.embeddings.cols() != spec_.d_text || text.embeddings.rows() != text.size() || text.size() < 1) {
        throw DimensionError("text embeddings must be [L, " + std::to_string(spec_.d_text) + "] with L >= 1");
    }
    const Weights& w = *weights_;
    const int d = spec_.d_model;
    const int c = spec_.latent.c;
    const int n = static_cast<int>(spec_.latent.spatial());
    const int L = text.size();

    Eigen::Map<const Matrix> latent(z.data.data(), n, c);
    Matrix img = latent * w.img_in + w.img_pos;
    Matrix txt = text.embeddings * w.txt_in + sinusoid(L, d, 0.5) * 0.5f;

    RowVec vec = time_features(t, d) * w.time1;
    vec = vec.unaryExpr(&silu) * w.time2;
    vec += text.embeddings.colwise().mean() * w.pooled;
    const RowVec act = vec.unaryExpr(&silu);

    auto check = [&](const Matrix& m, int layer) {
        if (!finite(m)) throw NumericError(z.step_index, layer, "activation overflow");
    };

    int layer = 0;
    for (const DoubleBlock& b : w.doubles) {
        const RowVec mi = act * b.img.mod;
        const RowVec mt = act * b.txt.mod;
        auto gate = [&](const RowVec& m, int idx) {
            return RowVec((segment(m, idx, d).array() + w.gate_bias).matrix());
        };
        const Matrix img_n = modulate(layer_norm(img), segment(mi, 0, d), segment(mi, 1, d));
        const Matrix txt_n = modulate(layer_norm(txt), segment(mt, 0, d), segment(mt, 1, d));
        Matrix qkv(L + n, 3 * d);
        qkv.topRows(L) = txt_n * b.txt.qkv;
        qkv.bottomRows(n) = img_n * b.img.qkv;
        const Matrix attn = joint_attention(qkv, d, spec_.n_heads, layer, L, hooks);

        const Matrix img_attn = scale_rows(attn.bottomRows(n) * b.img.proj, gate(mi, 2));
        const Matrix txt_attn = scale_rows(attn.topRows(L) * b.txt.proj, gate(mt, 2));
        const Matrix img_mid = img + img_attn;
        const Matrix txt_mid = txt + txt_attn;

        const Matrix img_mlp_in = modulate(layer_norm(img_mid), segment(mi, 3, d), segment(mi, 4, d));
        const Matrix txt_mlp_in = modulate(layer_norm(txt_mid), segment(mt, 3, d), segment(mt, 4, d));
        const Matrix img_mlp = scale_rows(apply(img_mlp_in * b.img.mlp1, &gelu) * b.img.mlp2, gate(mi, 5));
        const Matrix txt_mlp = scale_rows(apply(txt_mlp_in * b.txt.mlp1, &gelu) * b.txt.mlp2, gate(mt, 5));

        std::vector<Matrix> f{img_attn + img_mlp};
        if (hooks != nullptr && hooks->active(layer, HookKind::residual_image_out)) {
            hooks->dispatch(layer, HookKind::residual_image_out, L, f);
        }
        img = img + f[0];
        txt = txt_mid + txt_mlp;
        check(img, layer);
        check(txt, layer);
        ++layer;
    }

    Matrix x(L + n, d);
    x.topRows(L) = txt;
    x.bottomRows(n) = img;
    const int r = spec_.mlp_ratio * d;
    for (const SingleBlock& b : w.singles) {
        const RowVec m = act * b.mod;
        const Matrix xn = modulate(layer_norm(x), segment(m, 0, d), segment(m, 1, d));
        const Matrix h = xn * b.linear1;
        const Matrix attn = joint_attention(h.leftCols(3 * d), d, spec_.n_heads, layer, L, hooks);
        Matrix cat(L + n, d + r);
        cat.leftCols(d) = attn;
        cat.rightCols(r) = apply(h.rightCols(r), &gelu);
        const RowVec g = (segment(m, 2, d).array() + w.gate_bias).matrix();
        Matrix f = scale_rows(cat * b.linear2, g);
        if (hooks != nullptr && hooks->active(layer, HookKind::residual_image_out)) {
            std::vector<Matrix> image_part{f.bottomRows(n)};
            hooks->dispatch(layer, HookKind::residual_image_out, L, image_part);
            f.bottomRows(n) = image_part[0];
        }
        x += f;
        check(x, layer);
        ++layer;
    }

    const RowVec fm = act * w.final_mod;
    const Matrix out = modulate(layer_norm(x.bottomRows(n)), segment(fm, 0, d), segment(fm, 1, d)) * w.final_out;
    check(out, -1);
    return std::vector<float>(out.data(), out.data() + out.size());
}

std::unique_ptr<ToyBackend> build_backend(const BackendSpec& spec) { return std::make_unique<ToyBackend>(spec); }

} // namespace flexedit::toy
