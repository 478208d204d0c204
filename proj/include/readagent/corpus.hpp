#pragma once

#include <cctype>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace readagent {

using Json = nlohmann::json;

struct CorpusError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Number of maximal non-whitespace runs in `text`.
inline int word_count(std::string_view text) {
    int count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        bool space = std::isspace(c) != 0;
        if (!space && !in_word) {
            ++count;
            in_word = true;
        } else if (space) {
            in_word = false;
        }
    }
    return count;
}

/// Splits raw text into paragraphs on runs of blank lines. Internal
/// whitespace collapses to single spaces; empty fragments are dropped.
inline std::vector<std::string> split_paragraphs(std::string_view raw_text) {
    std::vector<std::string> paragraphs;
    std::string current;
    std::size_t pos = 0;
    auto flush = [&] {
        // collapse whitespace runs and trim
        std::string normalized;
        normalized.reserve(current.size());
        bool pending_space = false;
        for (unsigned char c : current) {
            if (std::isspace(c)) {
                pending_space = !normalized.empty();
            } else {
                if (pending_space) normalized.push_back(' ');
                pending_space = false;
                normalized.push_back(static_cast<char>(c));
            }
        }
        if (!normalized.empty()) paragraphs.push_back(std::move(normalized));
        current.clear();
    };
    while (pos <= raw_text.size()) {
        std::size_t eol = raw_text.find('\n', pos);
        if (eol == std::string_view::npos) eol = raw_text.size();
        std::string_view line = raw_text.substr(pos, eol - pos);
        bool blank = true;
        for (unsigned char c : line) {
            if (!std::isspace(c)) {
                blank = false;
                break;
            }
        }
        if (blank) {
            flush();
        } else {
            if (!current.empty()) current.push_back('\n');
            current.append(line);
        }
        if (eol == raw_text.size()) break;
        pos = eol + 1;
    }
    flush();
    return paragraphs;
}

/// Immutable ordered paragraph sequence; the unit of pagination.
struct Document {
    std::string id;
    std::string title;
    std::vector<std::string> paragraphs;
    long long source_words = 0;

    static Document from_text(std::string id, std::string title, std::string_view raw_text) {
        Document doc;
        doc.id = std::move(id);
        doc.title = std::move(title);
        doc.paragraphs = split_paragraphs(raw_text);
        for (const auto& p : doc.paragraphs) doc.source_words += word_count(p);
        return doc;
    }

    /// Paragraphs joined with single newlines.
    std::string full_text() const {
        std::string out;
        for (std::size_t i = 0; i < paragraphs.size(); ++i) {
            if (i > 0) out.push_back('\n');
            out += paragraphs[i];
        }
        return out;
    }
};

struct QaTask {
    std::string question;
    std::optional<std::vector<std::string>> options;
    std::vector<std::string> references;
    std::optional<int> gold_option;  // 0-based

    bool multiple_choice() const { return options.has_value(); }
};

struct LoadedDocument {
    Document doc;
    std::vector<QaTask> tasks;
};

enum class CorpusFormat { generic_jsonl, quality_jsonl };

namespace detail {

inline const Json& require_field(const Json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw CorpusError("line " + std::to_string(line_no) + ": missing field '" + key + "'");
    }
    return *it;
}

inline QaTask parse_generic_question(const Json& q, std::size_t line_no) {
    QaTask task;
    task.question = require_field(q, "question", line_no).get<std::string>();
    if (q.contains("options") && !q["options"].is_null()) {
        task.options = q["options"].get<std::vector<std::string>>();
    }
    if (q.contains("references") && !q["references"].is_null()) {
        task.references = q["references"].get<std::vector<std::string>>();
    }
    if (q.contains("gold") && !q["gold"].is_null()) {
        int gold = q["gold"].get<int>();
        if (!task.options || gold < 0 || gold >= static_cast<int>(task.options->size())) {
            throw CorpusError("line " + std::to_string(line_no) + ": gold index out of range");
        }
        task.gold_option = gold;
    }
    if (!task.options && task.references.empty()) {
        throw CorpusError("line " + std::to_string(line_no) +
                          ": question needs options or references");
    }
    return task;
}

// QuALITY distribution records use 1-based gold_label; stored 0-based.
inline QaTask parse_quality_question(const Json& q, std::size_t line_no) {
    QaTask task;
    task.question = require_field(q, "question", line_no).get<std::string>();
    task.options = require_field(q, "options", line_no).get<std::vector<std::string>>();
    if (q.contains("gold_label") && !q["gold_label"].is_null()) {
        int gold = q["gold_label"].get<int>() - 1;
        if (gold < 0 || gold >= static_cast<int>(task.options->size())) {
            throw CorpusError("line " + std::to_string(line_no) + ": gold_label out of range");
        }
        task.gold_option = gold;
    }
    return task;
}

}  // namespace detail

/// Loads a JSONL corpus. One Document per line; duplicate ids are an error.
inline std::vector<LoadedDocument> load_corpus(const std::string& path, CorpusFormat format) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open corpus file: " + path);

    std::vector<LoadedDocument> out;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool blank = true;
        for (unsigned char c : line) {
            if (!std::isspace(c)) {
                blank = false;
                break;
            }
        }
        if (blank) continue;

        Json rec;
        try {
            rec = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw CorpusError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }

        LoadedDocument loaded;
        if (format == CorpusFormat::generic_jsonl) {
            std::string id = detail::require_field(rec, "id", line_no).get<std::string>();
            std::string title = rec.value("title", std::string{});
            std::string text = detail::require_field(rec, "text", line_no).get<std::string>();
            loaded.doc = Document::from_text(std::move(id), std::move(title), text);
            for (const auto& q : detail::require_field(rec, "questions", line_no)) {
                loaded.tasks.push_back(detail::parse_generic_question(q, line_no));
            }
        } else {
            std::string id;
            if (rec.contains("article_id")) {
                id = rec["article_id"].is_string() ? rec["article_id"].get<std::string>()
                                                   : rec["article_id"].dump();
            } else if (rec.contains("set_unique_id")) {
                id = rec["set_unique_id"].get<std::string>();
            } else {
                throw CorpusError("line " + std::to_string(line_no) + ": missing field 'article_id'");
            }
            std::string title = rec.value("title", std::string{});
            std::string text = detail::require_field(rec, "article", line_no).get<std::string>();
            loaded.doc = Document::from_text(std::move(id), std::move(title), text);
            for (const auto& q : detail::require_field(rec, "questions", line_no)) {
                loaded.tasks.push_back(detail::parse_quality_question(q, line_no));
            }
        }

        if (!seen_ids.insert(loaded.doc.id).second) {
            throw CorpusError("line " + std::to_string(line_no) + ": duplicate document id '" +
                              loaded.doc.id + "'");
        }
        if (loaded.doc.paragraphs.empty()) {
            throw CorpusError("line " + std::to_string(line_no) + ": document '" + loaded.doc.id +
                              "' has no non-empty paragraphs");
        }
        out.push_back(std::move(loaded));
    }
    return out;
}

}  // namespace readagent
