// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/attention/feature_cache.hpp"

#include <fstream>
#include <sstream>

#include "flexedit/attention/blocks.hpp"
#include "flexedit/core/errors.hpp"
#include "flexedit/core/tensor_io.hpp"

namespace flexedit::attn {

const AttentionFeatures& FeatureCache::attention_at(int layer, int head) const {
    auto it = attention.find({layer, head});
    if (it == attention.end()) {
        throw LookupError("feature cache has no attention for layer " + std::to_string(layer) + ", head " +
                          std::to_string(head));
    }
    return it->second;
}

const Matrix& FeatureCache::residual_at(int layer) const {
    auto it = residual.find(layer);
    if (it == residual.end()) throw LookupError("feature cache has no residual for layer " + std::to_string(layer));
    return it->second;
}

bool FeatureCache::has_attention(int layer) const {
    auto it = attention.lower_bound({layer, 0});
    return it != attention.end() && it->first.first == layer;
}

int FeatureCache::heads_per_layer() const {
    if (attention.empty()) return 0;
    const int first = attention.begin()->first.first;
    int n = 0;
    for (const auto& [key, _] : attention) n += key.first == first ? 1 : 0;
    return n;
}

LayerSet FeatureCache::attention_layers() const {
    LayerSet out;
    for (const auto& [key, _] : attention) {
        if (out.empty() || out.back() != key.first) out.push_back(key.first);
    }
    return out;
}

LayerSet FeatureCache::residual_layers() const {
    LayerSet out;
    for (const auto& [layer, _] : residual) out.push_back(layer);
    return out;
}

bool bit_equal(const FeatureCache& a, const FeatureCache& b) {
    if (a.extraction_step != b.extraction_step || a.text_len != b.text_len || a.image_len != b.image_len) return false;
    if (a.attention.size() != b.attention.size() || a.residual.size() != b.residual.size()) return false;
    for (const auto& [key, fa] : a.attention) {
        auto it = b.attention.find(key);
        if (it == b.attention.end()) return false;
        if (!flexedit::bit_equal(fa.ca_source, it->second.ca_source) ||
            !flexedit::bit_equal(fa.sa_source, it->second.sa_source)) {
            return false;
        }
    }
    for (const auto& [layer, ra] : a.residual) {
        auto it = b.residual.find(layer);
        if (it == b.residual.end() || !flexedit::bit_equal(ra, it->second)) return false;
    }
    return true;
}

namespace {

const HookEvent* find_event(const std::vector<HookEvent>& events, int layer, HookKind kind) {
    for (const auto& e : events) {
        if (e.layer == layer && e.kind == kind) return &e;
    }
    return nullptr;
}

void require_finite(const Matrix& m, int layer) {
    if (!m.allFinite()) throw CaptureError(layer, "captured tensor holds non-finite values");
}

void check_image_len(FeatureCache& cache, Eigen::Index n, int layer) {
    if (cache.image_len == 0) {
        cache.image_len = static_cast<int>(n);
    } else if (cache.image_len != n) {
        throw CaptureError(layer, "image token count " + std::to_string(n) + " differs from " +
                                      std::to_string(cache.image_len));
    }
}

} // namespace

FeatureCache capture_features(const std::vector<HookEvent>& events, const EditConfig& config, int extraction_step) {
    FeatureCache cache;
    cache.extraction_step = extraction_step;
    bool text_len_set = false;
    for (int layer : config.attn_layers) {
        const HookEvent* e = find_event(events, layer, HookKind::attention_probs);
        if (!e) throw CaptureError(layer, "no attention event was captured");
        if (text_len_set && e->text_len != cache.text_len) throw CaptureError(layer, "text length changed");
        cache.text_len = e->text_len;
        text_len_set = true;
        for (std::size_t h = 0; h < e->tensors.size(); ++h) {
            require_finite(e->tensors[h], layer);
            auto blocks = decompose_joint_attention(e->tensors[h], e->text_len, layer, static_cast<int>(h));
            check_image_len(cache, blocks.i2i.rows(), layer);
            cache.attention[{layer, static_cast<int>(h)}] = {std::move(blocks.i2t), std::move(blocks.i2i)};
        }
    }
    for (int layer : config.res_layers) {
        const HookEvent* e = find_event(events, layer, HookKind::residual_image_out);
        if (!e || e->tensors.size() != 1) throw CaptureError(layer, "no residual event was captured");
        require_finite(e->tensors.front(), layer);
        check_image_len(cache, e->tensors.front().rows(), layer);
        if (!text_len_set) cache.text_len = e->text_len;
        cache.residual[layer] = e->tensors.front();
    }
    return cache;
}

void export_cache(const FeatureCache& cache, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    if (!manifest) throw Error("cannot write " + (dir / "manifest.txt").string());
    manifest << "# text_len " << cache.text_len << " image_len " << cache.image_len << '\n';
    manifest << "# layer head kind extraction_step file\n";
    for (const auto& [key, f] : cache.attention) {
        const auto [layer, head] = key;
        const std::string stem = "l" + std::to_string(layer) + "_h" + std::to_string(head);
        write_tensor(Tensor::from_matrix(f.ca_source), dir / (stem + "_ca.rtn"));
        write_tensor(Tensor::from_matrix(f.sa_source), dir / (stem + "_sa.rtn"));
        manifest << layer << ' ' << head << " ca " << cache.extraction_step << ' ' << stem << "_ca.rtn\n";
        manifest << layer << ' ' << head << " sa " << cache.extraction_step << ' ' << stem << "_sa.rtn\n";
    }
    for (const auto& [layer, r] : cache.residual) {
        const std::string file = "l" + std::to_string(layer) + "_res.rtn";
        write_tensor(Tensor::from_matrix(r), dir / file);
        manifest << layer << " -1 residual " << cache.extraction_step << ' ' << file << '\n';
    }
}

FeatureCache import_cache(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw Error("cannot open " + (dir / "manifest.txt").string());
    FeatureCache cache;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (line.rfind("# text_len ", 0) == 0) {
            std::istringstream is(line.substr(2));
            std::string a, b;
            is >> a >> cache.text_len >> b >> cache.image_len;
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        int layer = 0, head = 0;
        std::string kind, file;
        if (!(is >> layer >> head >> kind >> cache.extraction_step >> file)) {
            throw ParseError(line_no, "expected 'layer head kind extraction_step file'");
        }
        Matrix m = read_tensor(dir / file).to_matrix();
        if (kind == "ca") {
            cache.attention[{layer, head}].ca_source = std::move(m);
        } else if (kind == "sa") {
            cache.attention[{layer, head}].sa_source = std::move(m);
        } else if (kind == "residual") {
            cache.residual[layer] = std::move(m);
        } else {
            throw ParseError(line_no, "unknown feature kind '" + kind + "'");
        }
    }
    return cache;
}

} // namespace flexedit::attn
