// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0

#include "qglab/corpus.h"

#include <algorithm>
#include <array>
#include <cctype>

namespace qglab {

bool looks_english(const std::string& text) {
    static const std::array<const char*, 16> stopwords = {
        "the", "a", "an", "is", "are", "was", "to", "of",
        "and", "in", "it", "you", "that", "for", "what", "how"};
    std::int64_t letters = 0;
    std::int64_t ascii_letters = 0;
    for (char raw : text) {
        const auto c = static_cast<unsigned char>(raw);
        if (c >= 0x80) {
            ++letters;
        } else if (std::isalpha(c)) {
            ++letters;
            ++ascii_letters;
        }
    }
    if (letters == 0) return false;
    const double ratio = static_cast<double>(ascii_letters) /
                         static_cast<double>(letters);
    if (ratio < 0.9) return false;
    std::int64_t hits = 0;
    for (const auto& w : pretokenize(text)) {
        for (const char* sw : stopwords) {
            if (w == sw) {
                ++hits;
                break;
            }
        }
    }
    return hits >= 1;
}

FilterResult filter_qa_pairs(const std::vector<QAPair>& pairs) {
    FilterResult res;
    for (const auto& p : pairs) {
        if (p.question.empty() || p.answer.empty()) {
            res.drops["malformed"] += 1;
            continue;
        }
        const bool english =
            p.lang.empty() ? looks_english(p.question + " " + p.answer)
                           : p.lang == "en";
        if (!english) {
            res.drops["lang"] += 1;
            continue;
        }
        if (p.rating < 1) {
            res.drops["rating"] += 1;
            continue;
        }
        res.kept.push_back(p);
    }
    return res;
}

NQFilterResult filter_nq_examples(const std::vector<QGExample>& examples) {
    NQFilterResult res;
    for (const auto& e : examples) {
        if (e.answer_type == AnswerType::span) {
            res.kept.push_back(e);
        } else {
            res.drops[answer_type_name(e.answer_type)] += 1;
        }
    }
    return res;
}

CorpusStats corpus_stats(const std::vector<QAPair>& pairs, const Vocabulary* vocab) {
    if (pairs.empty()) {
        throw std::domain_error("corpus_stats: empty stream has no statistics");
    }
    double q_total = 0.0;
    double a_total = 0.0;
    for (const auto& p : pairs) {
        if (vocab) {
            q_total += static_cast<double>(vocab->encode_content(p.question).size());
            a_total += static_cast<double>(vocab->encode_content(p.answer).size());
        } else {
            q_total += static_cast<double>(pretokenize(p.question).size());
            a_total += static_cast<double>(pretokenize(p.answer).size());
        }
    }
    CorpusStats stats;
    stats.count = static_cast<std::int64_t>(pairs.size());
    stats.avg_question_tokens = q_total / static_cast<double>(stats.count);
    stats.avg_answer_tokens = a_total / static_cast<double>(stats.count);
    return stats;
}

TokenSequence build_qg_input(const QGExample& ex, const Vocabulary& vocab,
                             int max_src_len) {
    if (ex.answer_type != AnswerType::span) {
        throw std::invalid_argument(
            std::string("build_qg_input: answer_type must be span, got ") +
            answer_type_name(ex.answer_type));
    }
    TokenSequence seq;
    seq.ids.push_back(Vocabulary::kBos);
    const auto span_ids = vocab.encode_content(ex.answer_span());
    seq.ids.insert(seq.ids.end(), span_ids.begin(), span_ids.end());
    seq.ids.push_back(Vocabulary::kSep);
    const auto passage_ids = vocab.encode_content(ex.passage);
    seq.ids.insert(seq.ids.end(), passage_ids.begin(), passage_ids.end());
    seq.ids.push_back(Vocabulary::kEos);
    if (static_cast<int>(seq.ids.size()) > max_src_len) {
        seq.ids.resize(static_cast<std::size_t>(max_src_len));
        seq.truncated = true;
    }
    return seq;
}

}  // namespace qglab
