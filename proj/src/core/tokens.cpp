// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/core/tokens.hpp"

#include <algorithm>

#include "flexedit/core/errors.hpp"

namespace flexedit {

std::vector<int> TokenSequence::word_tokens(const std::string& word) const {
    std::vector<int> out;
    auto it = word_spans.find(word);
    if (it == word_spans.end()) return out;
    for (const auto& span : it->second) {
        for (int i = span.begin; i < span.end; ++i) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void TokenSequence::validate() const {
    if (token_ids.empty()) throw DimensionError("token sequence must hold at least one token");
    if (embeddings.rows() != size()) throw DimensionError("embedding rows must equal the token count");
    for (const auto& [word, spans] : word_spans) {
        for (const auto& s : spans) {
            if (s.begin < 0 || s.end > size() || s.begin >= s.end) {
                throw DimensionError("word span for '" + word + "' is out of range");
            }
        }
    }
}

TokenMapping::TokenMapping(std::vector<std::optional<int>> target_to_source, int source_size)
    : target_to_source_(std::move(target_to_source)), source_size_(source_size) {
    for (const auto& f : target_to_source_) {
        if (f && (*f < 0 || *f >= source_size_)) {
            throw MappingError("mapped source index " + std::to_string(*f) + " outside source length " +
                               std::to_string(source_size_));
        }
    }
}

TokenMapping TokenMapping::unmapped(int target_size) {
    return TokenMapping(std::vector<std::optional<int>>(static_cast<std::size_t>(target_size)), 0);
}

TokenMapping TokenMapping::identity(int size) {
    std::vector<std::optional<int>> f(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) f[i] = i;
    return TokenMapping(std::move(f), size);
}

int TokenMapping::mapped_count() const noexcept {
    return static_cast<int>(std::count_if(target_to_source_.begin(), target_to_source_.end(),
                                          [](const auto& f) { return f.has_value(); }));
}

TokenMapping build_token_mapping(std::span<const int> source_ids, std::span<const int> target_ids) {
    const std::size_t ns = source_ids.size();
    const std::size_t nt = target_ids.size();
    // suffix[i][j] = LCS length of source[i:] and target[j:]
    std::vector<int> suffix((ns + 1) * (nt + 1), 0);
    auto at = [nt](std::size_t i, std::size_t j) { return i * (nt + 1) + j; };
    for (std::size_t i = ns; i-- > 0;) {
        for (std::size_t j = nt; j-- > 0;) {
            suffix[at(i, j)] = source_ids[i] == target_ids[j]
                                   ? suffix[at(i + 1, j + 1)] + 1
                                   : std::max(suffix[at(i + 1, j)], suffix[at(i, j + 1)]);
        }
    }

    std::vector<std::optional<int>> f(nt);
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ns && j < nt) {
        if (source_ids[i] == target_ids[j] && suffix[at(i, j)] == suffix[at(i + 1, j + 1)] + 1) {
            f[j] = static_cast<int>(i);
            ++i;
            ++j;
        } else if (suffix[at(i + 1, j)] >= suffix[at(i, j + 1)]) {
            ++i;
        } else {
            ++j;
        }
    }
    return TokenMapping(std::move(f), static_cast<int>(ns));
}

TokenMapping build_token_mapping(const TokenSequence& source, const TokenSequence& target) {
    return build_token_mapping(std::span<const int>(source.token_ids), std::span<const int>(target.token_ids));
}

TokenMapping build_token_mapping(std::nullopt_t, const TokenSequence& target) {
    return TokenMapping::unmapped(target.size());
}

} // namespace flexedit
