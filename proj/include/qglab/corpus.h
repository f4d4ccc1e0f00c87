// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus filtering, task input construction, corpus statistics and
// deterministic subsampling.

#pragma once

#include <algorithm>
#include <map>

#include "qglab/bpe.h"
#include "qglab/records.h"

namespace qglab {

struct FilterResult {
    std::vector<QAPair> kept;
    std::map<std::string, std::int64_t> drops;  // reason -> count
};

struct NQFilterResult {
    std::vector<QGExample> kept;
    std::map<std::string, std::int64_t> drops;
};

// English-or-unlabeled heuristic used when a record carries no language tag:
// ASCII-letter ratio plus common-stopword hits.
bool looks_english(const std::string& text);

// Keeps English pairs rated positively by at least one user (net rating
// >= 1), preserving order. Empty question/answer counts as malformed.
// Drop reasons: "lang", "rating", "malformed".
FilterResult filter_qa_pairs(const std::vector<QAPair>& pairs);

// Keeps paragraph-enclosed answer spans; drops list/table long answers,
// yes-no and unanswerable questions, and whole-paragraph answers.
NQFilterResult filter_nq_examples(const std::vector<QGExample>& examples);

struct CorpusStats {
    double avg_question_tokens = 0.0;
    double avg_answer_tokens = 0.0;
    std::int64_t count = 0;
};

// Average question/answer lengths before truncation. With a vocabulary the
// counts are subword tokens; without one they are pre-tokenizer words.
CorpusStats corpus_stats(const std::vector<QAPair>& pairs, const Vocabulary* vocab);

// Answer span, separator, passage: BOS + span + SEP + passage + EOS,
// truncated to max_src_len. Only span examples are valid inputs.
TokenSequence build_qg_input(const QGExample& ex, const Vocabulary& vocab,
                             int max_src_len);

// ceil(fraction * n) items chosen uniformly without replacement. A fixed seed
// yields nested subsets across fractions (a permutation is drawn once and
// prefixes are taken), and items keep their original relative order, so
// fraction 1.0 is the identity.
template <class T>
std::vector<T> subsample(const std::vector<T>& dataset, double fraction,
                         std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("subsample: fraction must be in (0, 1]");
    }
    const std::int64_t n = static_cast<std::int64_t>(dataset.size());
    const auto k = static_cast<std::int64_t>(
        std::ceil(fraction * static_cast<double>(n)));
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    perm.resize(static_cast<std::size_t>(k));
    std::sort(perm.begin(), perm.end());
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(k));
    for (auto i : perm) out.push_back(dataset[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace qglab
