#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rbsteer/errors.hpp"
#include "rbsteer/strings.hpp"

namespace rbsteer {

// One reasoning run of a model on one question, with a correctness label.
struct ReasoningTrace {
    std::string id;
    std::string dataset;
    std::string model;
    std::string question;
    std::string reasoning_text;
    std::string answer;
    bool correct = false;
    std::map<std::string, std::string> meta;

    friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

struct Corpus {
    std::vector<ReasoningTrace> traces;

    std::size_t size() const { return traces.size(); }
    bool empty() const { return traces.empty(); }
};

namespace detail {

using json = nlohmann::json;

inline std::string require_string(const json& j, const std::string& field,
                                  const std::string& file, std::size_t line) {
    auto it = j.find(field);
    if (it == j.end()) throw ParseError(file, line, "missing field \"" + field + "\"");
    if (!it->is_string()) throw ParseError(file, line, "field \"" + field + "\" must be a string");
    return it->get<std::string>();
}

inline bool require_bool(const json& j, const std::string& field, const std::string& file,
                         std::size_t line) {
    auto it = j.find(field);
    if (it == j.end()) throw ParseError(file, line, "missing field \"" + field + "\"");
    if (!it->is_boolean()) throw ParseError(file, line, "field \"" + field + "\" must be a boolean");
    return it->get<bool>();
}

}  // namespace detail

// Loads a trace corpus from JSONL: one JSON object per line, blank lines
// skipped. Errors name the offending line and field. Trace ids must be
// unique across the file.
inline Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path.string());
    Corpus corpus;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        detail::json j;
        try {
            j = detail::json::parse(line);
        } catch (const detail::json::exception& e) {
            throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw ParseError(path.string(), line_no, "expected a JSON object");
        ReasoningTrace t;
        t.id = detail::require_string(j, "id", path.string(), line_no);
        t.dataset = detail::require_string(j, "dataset", path.string(), line_no);
        t.model = detail::require_string(j, "model", path.string(), line_no);
        t.question = detail::require_string(j, "question", path.string(), line_no);
        t.reasoning_text = detail::require_string(j, "reasoning", path.string(), line_no);
        t.answer = detail::require_string(j, "answer", path.string(), line_no);
        t.correct = detail::require_bool(j, "correct", path.string(), line_no);
        if (auto it = j.find("meta"); it != j.end()) {
            if (!it->is_object())
                throw ParseError(path.string(), line_no, "field \"meta\" must be an object");
            for (const auto& [key, value] : it->items()) {
                if (!value.is_string())
                    throw ParseError(path.string(), line_no,
                                     "field \"meta." + key + "\" must be a string");
                t.meta[key] = value.get<std::string>();
            }
        }
        if (!ids.insert(t.id).second)
            throw ParseError(path.string(), line_no, "duplicate trace id \"" + t.id + "\"");
        corpus.traces.push_back(std::move(t));
    }
    return corpus;
}

// Writes JSONL that load_corpus reads back field-for-field.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path.string());
    for (const auto& t : corpus.traces) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["dataset"] = t.dataset;
        j["model"] = t.model;
        j["question"] = t.question;
        j["reasoning"] = t.reasoning_text;
        j["answer"] = t.answer;
        j["correct"] = t.correct;
        if (!t.meta.empty()) j["meta"] = t.meta;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing corpus file: " + path.string());
}

inline Corpus filter_correct(const Corpus& corpus) {
    Corpus out;
    for (const auto& t : corpus.traces) {
        if (t.correct) out.traces.push_back(t);
    }
    return out;
}

inline Corpus filter_incorrect(const Corpus& corpus) {
    Corpus out;
    for (const auto& t : corpus.traces) {
        if (!t.correct) out.traces.push_back(t);
    }
    return out;
}

// Exact-string grading helper: true when the two strings are equal after
// trimming surrounding whitespace. Never applied implicitly; corpus labels
// come from the `correct` field as stored.
inline bool exact_match(std::string_view answer, std::string_view reference) {
    return trim(answer) == trim(reference);
}

}  // namespace rbsteer
