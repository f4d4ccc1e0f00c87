// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0

#include "qglab/bpe.h"

#include <cctype>
#include <fstream>

#include <json.hpp>

namespace qglab {

namespace {

const char* kEndMark = "</w>";
const char* kSpecialTokens[Vocabulary::kNumSpecials] = {"<pad>", "<s>", "</s>",
                                                        "<unk>", "<sep>"};

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

// Symbols of a word: one per byte, end marker appended to the last.
std::vector<std::string> word_symbols(const std::string& word) {
    std::vector<std::string> syms;
    syms.reserve(word.size());
    for (std::size_t i = 0; i < word.size(); ++i) {
        std::string s(1, word[i]);
        if (i + 1 == word.size()) s += kEndMark;
        syms.push_back(std::move(s));
    }
    return syms;
}

}  // namespace

const std::string& Vocabulary::unk_glyph() {
    static const std::string glyph = "<unk>";
    return glyph;
}

std::vector<std::string> pretokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        const char lc = static_cast<char>(std::tolower(c));
        if (is_word_byte(c)) {
            cur += lc;
        } else {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(c)) words.emplace_back(1, lc);
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

std::string normalize_text(const std::string& text) {
    std::string out;
    for (const auto& w : pretokenize(text)) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens,
                       std::vector<std::pair<std::string, std::string>> merges)
    : tokens_(std::move(tokens)), merges_(std::move(merges)) {
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
        if (!token_to_id_.emplace(tokens_[static_cast<std::size_t>(i)], i).second) {
            throw FormatError("vocabulary: duplicate token '" +
                              tokens_[static_cast<std::size_t>(i)] + "'");
        }
    }
    for (int i = 0; i < kNumSpecials; ++i) {
        if (i >= size() || tokens_[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
            throw FormatError("vocabulary: special tokens must occupy ids 0..4");
        }
    }
    for (int r = 0; r < static_cast<int>(merges_.size()); ++r) {
        const auto& m = merges_[static_cast<std::size_t>(r)];
        if (token_to_id_.find(m.first) == token_to_id_.end() ||
            token_to_id_.find(m.second) == token_to_id_.end() ||
            token_to_id_.find(m.first + m.second) == token_to_id_.end()) {
            throw FormatError("vocabulary: merge rule (" + m.first + "," +
                              m.second + ") references unknown tokens");
        }
        merge_rank_.emplace(m, r);
    }
}

int Vocabulary::token_id(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? -1 : it->second;
}

std::vector<int> Vocabulary::word_ids(const std::string& word) const {
    std::vector<std::string> syms = word_symbols(word);
    // Repeatedly apply the earliest-learned merge present anywhere in the
    // symbol list, merging occurrences left to right.
    while (syms.size() > 1) {
        int best_rank = -1;
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = merge_rank_.find({syms[i], syms[i + 1]});
            if (it != merge_rank_.end() &&
                (best_rank < 0 || it->second < best_rank)) {
                best_rank = it->second;
            }
        }
        if (best_rank < 0) break;
        const auto& rule = merges_[static_cast<std::size_t>(best_rank)];
        std::vector<std::string> next;
        next.reserve(syms.size());
        for (std::size_t i = 0; i < syms.size();) {
            if (i + 1 < syms.size() && syms[i] == rule.first &&
                syms[i + 1] == rule.second) {
                next.push_back(rule.first + rule.second);
                i += 2;
            } else {
                next.push_back(syms[i]);
                i += 1;
            }
        }
        syms = std::move(next);
    }
    std::vector<int> ids;
    ids.reserve(syms.size());
    for (const auto& s : syms) {
        const int id = token_id(s);
        ids.push_back(id < 0 ? kUnk : id);
    }
    return ids;
}

std::vector<int> Vocabulary::encode_content(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : pretokenize(text)) {
        const auto wi = word_ids(w);
        ids.insert(ids.end(), wi.begin(), wi.end());
    }
    return ids;
}

TokenSequence Vocabulary::encode(const std::string& text, int max_len) const {
    if (max_len < 2) {
        throw std::invalid_argument("encode: max_len must be at least 2");
    }
    TokenSequence seq;
    seq.ids.push_back(kBos);
    const auto content = encode_content(text);
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    seq.ids.push_back(kEos);
    if (static_cast<int>(seq.ids.size()) > max_len) {
        seq.ids.resize(static_cast<std::size_t>(max_len));
        seq.truncated = true;
    }
    return seq;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string joined;
    for (int id : ids) {
        if (id < 0 || id >= size()) {
            throw std::invalid_argument("decode: id " + std::to_string(id) +
                                        " out of range for vocabulary of " +
                                        std::to_string(size()));
        }
        if (id == kPad || id == kBos || id == kEos || id == kSep) continue;
        if (id == kUnk) {
            joined += unk_glyph();
            continue;
        }
        joined += tokens_[static_cast<std::size_t>(id)];
    }
    // End-of-word markers become spaces.
    std::string out;
    std::size_t pos = 0;
    const std::string mark = kEndMark;
    while (pos < joined.size()) {
        const std::size_t hit = joined.find(mark, pos);
        if (hit == std::string::npos) {
            out += joined.substr(pos);
            break;
        }
        out += joined.substr(pos, hit - pos);
        out += ' ';
        pos = hit + mark.size();
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

Vocabulary train_bpe(const std::vector<std::string>& corpus, int vocab_size) {
    std::map<std::string, std::int64_t> word_freq;
    for (const auto& doc : corpus) {
        for (const auto& w : pretokenize(doc)) word_freq[w] += 1;
    }
    if (word_freq.empty()) {
        throw std::invalid_argument("train_bpe: corpus has no tokens");
    }

    std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
    words.reserve(word_freq.size());
    std::map<std::string, bool> base;
    for (const auto& [w, f] : word_freq) {
        auto syms = word_symbols(w);
        for (const auto& s : syms) base[s] = true;
        words.emplace_back(std::move(syms), f);
    }

    const int base_count = static_cast<int>(base.size());
    if (vocab_size <= Vocabulary::kNumSpecials + base_count) {
        throw std::invalid_argument(
            "train_bpe: vocab_size " + std::to_string(vocab_size) +
            " does not exceed specials + " + std::to_string(base_count) +
            " base symbols");
    }

    std::vector<std::string> tokens = {"<pad>", "<s>", "</s>", "<unk>", "<sep>"};
    for (const auto& [s, _] : base) tokens.push_back(s);

    std::vector<std::pair<std::string, std::string>> merges;
    while (static_cast<int>(tokens.size()) < vocab_size) {
        std::map<std::pair<std::string, std::string>, std::int64_t> pair_freq;
        for (const auto& [syms, f] : words) {
            for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
                pair_freq[{syms[i], syms[i + 1]}] += f;
            }
        }
        std::pair<std::string, std::string> best;
        std::int64_t best_count = 0;
        for (const auto& [p, c] : pair_freq) {
            if (c > best_count) {
                best = p;
                best_count = c;
            }
        }
        if (best_count < 2) break;

        merges.push_back(best);
        tokens.push_back(best.first + best.second);
        for (auto& [syms, f] : words) {
            std::vector<std::string> next;
            next.reserve(syms.size());
            for (std::size_t i = 0; i < syms.size();) {
                if (i + 1 < syms.size() && syms[i] == best.first &&
                    syms[i + 1] == best.second) {
                    next.push_back(best.first + best.second);
                    i += 2;
                } else {
                    next.push_back(syms[i]);
                    i += 1;
                }
            }
            syms = std::move(next);
        }
    }
    return Vocabulary(std::move(tokens), std::move(merges));
}

std::string Vocabulary::to_json_string() const {
    nlohmann::json j;
    j["tokens"] = tokens_;
    auto merges = nlohmann::json::array();
    for (const auto& m : merges_) {
        merges.push_back(nlohmann::json::array({m.first, m.second}));
    }
    j["merges"] = merges;
    j["specials"] = {{"pad", kPad}, {"bos", kBos}, {"eos", kEos},
                     {"unk", kUnk}, {"sep", kSep}};
    return j.dump();
}

Vocabulary Vocabulary::from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("vocabulary: invalid JSON: ") + e.what());
    }
    if (!j.contains("tokens") || !j.contains("merges") || !j.contains("specials")) {
        throw FormatError("vocabulary: missing tokens/merges/specials");
    }
    const std::map<std::string, int> expected = {
        {"pad", kPad}, {"bos", kBos}, {"eos", kEos}, {"unk", kUnk}, {"sep", kSep}};
    for (const auto& [name, id] : expected) {
        if (!j["specials"].contains(name) || j["specials"][name].get<int>() != id) {
            throw FormatError("vocabulary: special '" + name + "' must map to " +
                              std::to_string(id));
        }
    }
    std::vector<std::string> tokens = j["tokens"].get<std::vector<std::string>>();
    std::vector<std::pair<std::string, std::string>> merges;
    for (const auto& m : j["merges"]) {
        if (!m.is_array() || m.size() != 2) {
            throw FormatError("vocabulary: merge rules must be string pairs");
        }
        merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
    }
    return Vocabulary(std::move(tokens), std::move(merges));
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary file " + path);
    out << to_json_string();
    if (!out) throw IoError("failed writing vocabulary file " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary file " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json_string(text);
}

}  // namespace qglab
