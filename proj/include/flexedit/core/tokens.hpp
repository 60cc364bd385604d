// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flexedit/core/tensor.hpp"

namespace flexedit {

/// Half-open token index range [begin, end).
struct TokenSpan {
    int begin = 0;
    int end = 0;

    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct TokenSequence {
    std::vector<int> token_ids;
    Matrix embeddings;                                    // [L, d_text]
    std::map<std::string, std::vector<TokenSpan>> word_spans;

    int size() const noexcept { return static_cast<int>(token_ids.size()); }

    /// All token indices covered by `word`, ascending; empty if absent.
    std::vector<int> word_tokens(const std::string& word) const;

    /// Throws DimensionError when the invariants do not hold.
    void validate() const;
};

/// Partial map from target token index to source token index.
class TokenMapping {
public:
    TokenMapping() = default;
    TokenMapping(std::vector<std::optional<int>> target_to_source, int source_size);

    static TokenMapping unmapped(int target_size);
    static TokenMapping identity(int size);

    int target_size() const noexcept { return static_cast<int>(target_to_source_.size()); }
    int source_size() const noexcept { return source_size_; }
    std::optional<int> operator[](int target_index) const { return target_to_source_.at(target_index); }
    const std::vector<std::optional<int>>& entries() const noexcept { return target_to_source_; }
    int mapped_count() const noexcept;

    friend bool operator==(const TokenMapping&, const TokenMapping&) = default;

private:
    std::vector<std::optional<int>> target_to_source_;
    int source_size_ = 0;
};

/// Longest-common-subsequence alignment over token ids. Aligned target
/// positions map to their source partner; the rest map to nothing.
TokenMapping build_token_mapping(std::span<const int> source_ids, std::span<const int> target_ids);
TokenMapping build_token_mapping(const TokenSequence& source, const TokenSequence& target);
/// No source prompt: every target position is unmapped.
TokenMapping build_token_mapping(std::nullopt_t, const TokenSequence& target);

} // namespace flexedit
