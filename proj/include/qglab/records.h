// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// Corpus record kinds and their JSONL schemas. One record per line, UTF-8.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qglab/common.h"

namespace qglab {

struct QAPair {
    std::string question;
    std::string answer;
    int rating = 0;
    std::string lang;   // 2-letter code; empty means unlabeled
    std::string source;
};

struct SummarizationExample {
    std::string document;
    std::string summary;
};

enum class AnswerType { span, yes_no, unanswerable, list, table, paragraph };

const char* answer_type_name(AnswerType t);
std::optional<AnswerType> answer_type_from_name(const std::string& name);

struct QGExample {
    std::string passage;
    std::int64_t answer_start = 0;
    std::int64_t answer_end = 0;
    std::string question;
    AnswerType answer_type = AnswerType::span;

    std::string answer_span() const {
        return passage.substr(static_cast<std::size_t>(answer_start),
                              static_cast<std::size_t>(answer_end - answer_start));
    }
};

// Strict readers: any malformed line raises DataError naming the file and
// 1-based line number. Writers emit one JSON object per line.
std::vector<QAPair> read_qa_jsonl(const std::string& path);
std::vector<SummarizationExample> read_summarization_jsonl(const std::string& path);
std::vector<QGExample> read_qg_jsonl(const std::string& path);

void write_qa_jsonl(const std::string& path, const std::vector<QAPair>& pairs);
void write_summarization_jsonl(const std::string& path,
                               const std::vector<SummarizationExample>& examples);
void write_qg_jsonl(const std::string& path, const std::vector<QGExample>& examples);

// Tolerant reader for the mining door: unparseable or schema-violating lines
// are skipped and counted instead of raising.
struct QAReadResult {
    std::vector<QAPair> pairs;
    std::int64_t malformed = 0;
};
QAReadResult read_qa_jsonl_tolerant(const std::string& path);

}  // namespace qglab
