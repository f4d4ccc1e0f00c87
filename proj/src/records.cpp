// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0

#include "qglab/records.h"

#include <fstream>
#include <functional>

#include <json.hpp>

namespace qglab {

using nlohmann::json;

const char* answer_type_name(AnswerType t) {
    switch (t) {
        case AnswerType::span: return "span";
        case AnswerType::yes_no: return "yes_no";
        case AnswerType::unanswerable: return "unanswerable";
        case AnswerType::list: return "list";
        case AnswerType::table: return "table";
        case AnswerType::paragraph: return "paragraph";
    }
    return "span";
}

std::optional<AnswerType> answer_type_from_name(const std::string& name) {
    if (name == "span") return AnswerType::span;
    if (name == "yes_no") return AnswerType::yes_no;
    if (name == "unanswerable") return AnswerType::unanswerable;
    if (name == "list") return AnswerType::list;
    if (name == "table") return AnswerType::table;
    if (name == "paragraph") return AnswerType::paragraph;
    return std::nullopt;
}

namespace {

std::string require_string(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_string()) {
        throw std::runtime_error(std::string("missing or non-string field '") +
                                 field + "'");
    }
    return j[field].get<std::string>();
}

std::int64_t require_int(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_number_integer()) {
        throw std::runtime_error(std::string("missing or non-integer field '") +
                                 field + "'");
    }
    return j[field].get<std::int64_t>();
}

QAPair parse_qa(const json& j) {
    QAPair p;
    p.question = require_string(j, "question");
    p.answer = require_string(j, "answer");
    p.rating = static_cast<int>(require_int(j, "rating"));
    if (j.contains("lang")) {
        if (!j["lang"].is_string()) throw std::runtime_error("non-string field 'lang'");
        p.lang = j["lang"].get<std::string>();
    }
    if (j.contains("source")) {
        if (!j["source"].is_string()) throw std::runtime_error("non-string field 'source'");
        p.source = j["source"].get<std::string>();
    }
    return p;
}

SummarizationExample parse_summarization(const json& j) {
    SummarizationExample e;
    e.document = require_string(j, "document");
    e.summary = require_string(j, "summary");
    if (e.document.empty() || e.summary.empty()) {
        throw std::runtime_error("document and summary must be non-empty");
    }
    return e;
}

QGExample parse_qg(const json& j) {
    QGExample e;
    e.passage = require_string(j, "passage");
    e.answer_start = require_int(j, "answer_start");
    e.answer_end = require_int(j, "answer_end");
    e.question = require_string(j, "question");
    const std::string tname = require_string(j, "answer_type");
    const auto t = answer_type_from_name(tname);
    if (!t) throw std::runtime_error("unknown answer_type '" + tname + "'");
    e.answer_type = *t;
    if (e.answer_type == AnswerType::span) {
        if (e.answer_start < 0 || e.answer_start >= e.answer_end ||
            e.answer_end > static_cast<std::int64_t>(e.passage.size())) {
            throw std::runtime_error("span offsets out of range");
        }
    }
    return e;
}

template <class T>
std::vector<T> read_jsonl(const std::string& path,
                          const std::function<T(const json&)>& parse) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read input file " + path);
    std::vector<T> out;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path, lineno, std::string("invalid JSON: ") + e.what());
        }
        try {
            out.push_back(parse(j));
        } catch (const std::exception& e) {
            throw DataError(path, lineno, e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<QAPair> read_qa_jsonl(const std::string& path) {
    return read_jsonl<QAPair>(path, parse_qa);
}

std::vector<SummarizationExample> read_summarization_jsonl(const std::string& path) {
    return read_jsonl<SummarizationExample>(path, parse_summarization);
}

std::vector<QGExample> read_qg_jsonl(const std::string& path) {
    return read_jsonl<QGExample>(path, parse_qg);
}

QAReadResult read_qa_jsonl_tolerant(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read input file " + path);
    QAReadResult res;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            res.pairs.push_back(parse_qa(json::parse(line)));
        } catch (const std::exception&) {
            res.malformed += 1;
        }
    }
    return res;
}

namespace {

void write_lines(const std::string& path, const std::vector<json>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write output file " + path);
    for (const auto& j : lines) out << j.dump() << '\n';
    if (!out) throw IoError("failed writing output file " + path);
}

}  // namespace

void write_qa_jsonl(const std::string& path, const std::vector<QAPair>& pairs) {
    std::vector<json> lines;
    lines.reserve(pairs.size());
    for (const auto& p : pairs) {
        lines.push_back(json{{"question", p.question},
                             {"answer", p.answer},
                             {"rating", p.rating},
                             {"lang", p.lang},
                             {"source", p.source}});
    }
    write_lines(path, lines);
}

void write_summarization_jsonl(const std::string& path,
                               const std::vector<SummarizationExample>& examples) {
    std::vector<json> lines;
    lines.reserve(examples.size());
    for (const auto& e : examples) {
        lines.push_back(json{{"document", e.document}, {"summary", e.summary}});
    }
    write_lines(path, lines);
}

void write_qg_jsonl(const std::string& path, const std::vector<QGExample>& examples) {
    std::vector<json> lines;
    lines.reserve(examples.size());
    for (const auto& e : examples) {
        lines.push_back(json{{"passage", e.passage},
                             {"answer_start", e.answer_start},
                             {"answer_end", e.answer_end},
                             {"question", e.question},
                             {"answer_type", answer_type_name(e.answer_type)}});
    }
    write_lines(path, lines);
}

}  // namespace qglab
