// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-pair-encoding subword vocabulary. Pre-tokenization lowercases and
// splits on whitespace and punctuation boundaries; the last symbol of every
// word carries an end-of-word marker so decoding can restore spacing.

#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "qglab/common.h"

namespace qglab {

struct TokenSequence {
    std::vector<int> ids;
    bool truncated = false;
};

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kSep = 4;
    static constexpr int kNumSpecials = 5;

    // What decode emits for an UNK id.
    static const std::string& unk_glyph();

    Vocabulary() = default;
    Vocabulary(std::vector<std::string> tokens,
               std::vector<std::pair<std::string, std::string>> merges);

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    int token_id(const std::string& tok) const;
    const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

    // Subword ids of `text` with no specials and no truncation.
    std::vector<int> encode_content(const std::string& text) const;

    // BOS + content + EOS, truncated to max_len (the head is kept). The
    // truncated flag is set iff anything was cut; EOS is present iff not.
    TokenSequence encode(const std::string& text, int max_len) const;

    // Token ids back to text. PAD/BOS/EOS/SEP are omitted; UNK renders as
    // unk_glyph(). Word boundaries become single spaces.
    std::string decode(const std::vector<int>& ids) const;

    std::string to_json_string() const;
    static Vocabulary from_json_string(const std::string& text);
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<int> word_ids(const std::string& word) const;

    std::vector<std::string> tokens_;
    std::vector<std::pair<std::string, std::string>> merges_;
    std::unordered_map<std::string, int> token_to_id_;
    std::map<std::pair<std::string, std::string>, int> merge_rank_;
};

// Lowercase + split on whitespace and punctuation boundaries. Alphanumeric
// runs form words; every other non-space byte is its own word.
std::vector<std::string> pretokenize(const std::string& text);

// The canonical text form the tokenizer round-trips to: pre-tokens joined by
// single spaces.
std::string normalize_text(const std::string& text);

// Learns merges by pair frequency (most frequent first; ties break to the
// lexicographically smaller pair) until vocab_size tokens exist or no pair
// occurs twice. Deterministic for a fixed corpus order.
Vocabulary train_bpe(const std::vector<std::string>& corpus, int vocab_size);

}  // namespace qglab
