#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/ledger.hpp"
#include "readagent/parsing.hpp"
#include "readagent/prompts.hpp"

namespace readagent {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

namespace detail {

/// Lowercased alphanumeric runs; punctuation acts as a token boundary.
inline std::vector<std::string> rouge_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c) != 0) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline RougeScore rouge_from_counts(double overlap, double cand_total, double ref_total) {
    RougeScore score;
    score.precision = cand_total > 0.0 ? overlap / cand_total : 0.0;
    score.recall = ref_total > 0.0 ? overlap / ref_total : 0.0;
    const double pr = score.precision + score.recall;
    score.f_measure = pr > 0.0 ? 2.0 * score.precision * score.recall / pr : 0.0;
    return score;
}

}  // namespace detail

/// ROUGE-N with clipped n-gram overlap counts. No stemming.
inline RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n) {
    if (n < 1) throw EvalError("rouge_n: n must be >= 1");
    auto cand = detail::rouge_tokens(candidate);
    auto ref = detail::rouge_tokens(reference);
    auto ngrams = [n](const std::vector<std::string>& tokens) {
        std::unordered_map<std::string, int> counts;
        if (static_cast<int>(tokens.size()) < n) return counts;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string gram = tokens[i];
            for (int j = 1; j < n; ++j) gram += " " + tokens[i + j];
            ++counts[gram];
        }
        return counts;
    };
    auto cand_grams = ngrams(cand);
    auto ref_grams = ngrams(ref);
    double overlap = 0.0, cand_total = 0.0, ref_total = 0.0;
    for (const auto& [gram, count] : cand_grams) {
        cand_total += count;
        auto it = ref_grams.find(gram);
        if (it != ref_grams.end()) overlap += std::min(count, it->second);
    }
    for (const auto& [_, count] : ref_grams) ref_total += count;
    return detail::rouge_from_counts(overlap, cand_total, ref_total);
}

/// ROUGE-L from the longest common token subsequence.
inline RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
    auto cand = detail::rouge_tokens(candidate);
    auto ref = detail::rouge_tokens(reference);
    if (cand.empty() || ref.empty()) return {};
    // rolling-row LCS
    std::vector<int> prev(ref.size() + 1, 0), curr(ref.size() + 1, 0);
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            if (cand[i - 1] == ref[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    const double lcs = prev[ref.size()];
    return detail::rouge_from_counts(lcs, static_cast<double>(cand.size()),
                                     static_cast<double>(ref.size()));
}

/// Best F-measure across references, the usual multi-reference treatment.
inline RougeScore rouge_n_best(std::string_view candidate,
                               const std::vector<std::string>& references, int n) {
    RougeScore best;
    for (const auto& ref : references) {
        RougeScore s = rouge_n(candidate, ref, n);
        if (s.f_measure > best.f_measure) best = s;
    }
    return best;
}

inline RougeScore rouge_l_best(std::string_view candidate,
                               const std::vector<std::string>& references) {
    RougeScore best;
    for (const auto& ref : references) {
        RougeScore s = rouge_l(candidate, ref);
        if (s.f_measure > best.f_measure) best = s;
    }
    return best;
}

// ---------------------------------------------------------------------------
// LLM raters
// ---------------------------------------------------------------------------

enum class RatingLevel { exact, partial, none, not_rated, error };

inline const char* rating_level_name(RatingLevel level) {
    switch (level) {
        case RatingLevel::exact: return "exact";
        case RatingLevel::partial: return "partial";
        case RatingLevel::none: return "none";
        case RatingLevel::not_rated: return "not_rated";
        case RatingLevel::error: return "error";
    }
    return "unknown";
}

inline std::optional<RatingLevel> rating_level_from_name(std::string_view name) {
    for (RatingLevel level : {RatingLevel::exact, RatingLevel::partial, RatingLevel::none,
                              RatingLevel::not_rated, RatingLevel::error}) {
        if (name == rating_level_name(level)) return level;
    }
    return std::nullopt;
}

struct Rating {
    RatingLevel level = RatingLevel::not_rated;
    std::string strict_raw;       // raw rater outputs for the best reference
    std::string permissive_raw;
    bool strict_unrecognized = false;
    bool permissive_unrecognized = false;
};

/// Runs both rater prompts per reference; strict yes or permissive yes is
/// an exact match, otherwise permissive "yes, partially" is a partial
/// match. With multiple references the highest rating wins.
inline Rating rate(const std::string& question, const std::string& response,
                   const std::vector<std::string>& references, LlmBackend& backend,
                   const PromptLibrary& prompts = default_prompts()) {
    if (references.empty()) throw EvalError("rate: references must be non-empty");

    Rating best;
    best.level = RatingLevel::none;
    bool first = true;
    for (const auto& reference : references) {
        std::map<std::string, std::string> values = {
            {"question", question}, {"response", response}, {"reference", reference}};

        CompletionRequest strict_req;
        strict_req.prompt = render(prompts.get("rater_strict"), values);
        strict_req.stage = Stage::rater_strict;
        CompletionResult strict_result = backend.complete(strict_req);
        ParsedRating strict = parse_rating(strict_result.text, RaterMode::strict);

        CompletionRequest permissive_req;
        permissive_req.prompt = render(prompts.get("rater_permissive"), values);
        permissive_req.stage = Stage::rater_permissive;
        CompletionResult permissive_result = backend.complete(permissive_req);
        ParsedRating permissive = parse_rating(permissive_result.text, RaterMode::permissive);

        RatingLevel level;
        if (strict.verdict == RatingVerdict::yes || permissive.verdict == RatingVerdict::yes) {
            level = RatingLevel::exact;
        } else if (permissive.verdict == RatingVerdict::yes_partially) {
            level = RatingLevel::partial;
        } else {
            level = RatingLevel::none;
        }

        // enum order is exact < partial < none; lower rank is a higher rating
        if (first || static_cast<int>(level) < static_cast<int>(best.level)) {
            best.level = level;
            best.strict_raw = strict_result.text;
            best.permissive_raw = permissive_result.text;
            best.strict_unrecognized = !strict.recognized;
            best.permissive_unrecognized = !permissive.recognized;
        }
        first = false;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Records and aggregation
// ---------------------------------------------------------------------------

/// One question's outcome under one method.
struct EvalRecord {
    std::string doc_id;
    int question_index = 0;
    std::string method;
    int run = 0;

    std::string answer_text;
    std::optional<int> answer_option;
    bool answer_unparsed = false;
    std::optional<bool> correct;  // multiple choice only

    std::optional<RougeScore> rouge1;
    std::optional<RougeScore> rouge2;
    std::optional<RougeScore> rouge_lcs;
    Rating rating;

    double compression = 0.0;  // CR at the final response query, in percent
    int lookup_count = 0;
    long long final_context_words = 0;
    long long max_context_words = 0;
    bool truncated_by_budget = false;
    int response_words = 0;

    CostSnapshot cost;

    Json to_json() const {
        Json out = {
            {"doc_id", doc_id},
            {"question_index", question_index},
            {"method", method},
            {"run", run},
            {"answer_text", answer_text},
            {"answer_unparsed", answer_unparsed},
            {"rating", rating_level_name(rating.level)},
            {"rating_strict_unrecognized", rating.strict_unrecognized},
            {"rating_permissive_unrecognized", rating.permissive_unrecognized},
            {"compression_rate", compression},
            {"lookup_count", lookup_count},
            {"final_context_words", final_context_words},
            {"max_context_words", max_context_words},
            {"truncated_by_budget", truncated_by_budget},
            {"response_words", response_words},
            {"cost", cost.to_json()},
        };
        if (answer_option) out["answer_option"] = *answer_option;
        if (correct) out["correct"] = *correct;
        auto rouge_json = [](const RougeScore& s) {
            return Json{{"precision", s.precision}, {"recall", s.recall}, {"f", s.f_measure}};
        };
        if (rouge1) out["rouge1"] = rouge_json(*rouge1);
        if (rouge2) out["rouge2"] = rouge_json(*rouge2);
        if (rouge_lcs) out["rougeL"] = rouge_json(*rouge_lcs);
        return out;
    }

    static EvalRecord from_json(const Json& in) {
        EvalRecord rec;
        rec.doc_id = in.at("doc_id").get<std::string>();
        rec.question_index = in.at("question_index").get<int>();
        rec.method = in.at("method").get<std::string>();
        rec.run = in.at("run").get<int>();
        rec.answer_text = in.value("answer_text", std::string{});
        rec.answer_unparsed = in.value("answer_unparsed", false);
        if (in.contains("answer_option")) rec.answer_option = in["answer_option"].get<int>();
        if (in.contains("correct")) rec.correct = in["correct"].get<bool>();
        if (auto level = rating_level_from_name(in.value("rating", "not_rated"))) {
            rec.rating.level = *level;
        }
        rec.rating.strict_unrecognized = in.value("rating_strict_unrecognized", false);
        rec.rating.permissive_unrecognized = in.value("rating_permissive_unrecognized", false);
        rec.compression = in.at("compression_rate").get<double>();
        rec.lookup_count = in.at("lookup_count").get<int>();
        rec.final_context_words = in.value("final_context_words", 0LL);
        rec.max_context_words = in.value("max_context_words", 0LL);
        rec.truncated_by_budget = in.value("truncated_by_budget", false);
        rec.response_words = in.value("response_words", 0);
        auto rouge_from = [](const Json& j) {
            RougeScore s;
            s.precision = j.at("precision").get<double>();
            s.recall = j.at("recall").get<double>();
            s.f_measure = j.at("f").get<double>();
            return s;
        };
        if (in.contains("rouge1")) rec.rouge1 = rouge_from(in["rouge1"]);
        if (in.contains("rouge2")) rec.rouge2 = rouge_from(in["rouge2"]);
        if (in.contains("rougeL")) rec.rouge_lcs = rouge_from(in["rougeL"]);
        return rec;
    }
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // across repeated runs; 0 for a single run
    long long n = 0;
};

struct AggregateRow {
    std::string method;
    long long records = 0;
    int runs = 1;
    MetricSummary cr;
    MetricSummary lookups;
    MetricSummary response_words;
    std::optional<MetricSummary> lr1;
    std::optional<MetricSummary> lr2;
    std::optional<MetricSummary> accuracy;
    std::optional<MetricSummary> rouge1_f;
    std::optional<MetricSummary> rouge2_f;
    std::optional<MetricSummary> rouge_l_f;
    long long rating_exclusions = 0;  // rater errors, excluded from LR metrics
};

namespace detail {

struct RunningStat {
    // one value per run, in run order
    std::map<int, double> sums;
    std::map<int, long long> counts;

    void add(int run, double value) {
        sums[run] += value;
        counts[run] += 1;
    }

    bool empty() const { return counts.empty(); }

    MetricSummary summarize() const {
        MetricSummary out;
        std::vector<double> run_means;
        double total = 0.0;
        long long n = 0;
        for (const auto& [run, sum] : sums) {
            long long c = counts.at(run);
            run_means.push_back(sum / static_cast<double>(c));
            total += sum;
            n += c;
        }
        out.n = n;
        out.mean = n > 0 ? total / static_cast<double>(n) : 0.0;
        if (run_means.size() > 1) {
            double mean_of_means = 0.0;
            for (double m : run_means) mean_of_means += m;
            mean_of_means /= static_cast<double>(run_means.size());
            double var = 0.0;
            for (double m : run_means) var += (m - mean_of_means) * (m - mean_of_means);
            var /= static_cast<double>(run_means.size() - 1);
            out.stddev = std::sqrt(var);
        }
        return out;
    }
};

}  // namespace detail

/// Aggregates one method's records: LR-1 is the percentage of exact
/// matches, LR-2 exact-or-partial, accuracy counts unparsed responses as
/// incorrect. Rater errors are excluded from the LR metrics and counted.
inline AggregateRow aggregate(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw EvalError("aggregate: no records");

    AggregateRow row;
    row.method = records.front().method;
    row.records = static_cast<long long>(records.size());

    detail::RunningStat cr, lu, resp, lr1, lr2, acc, r1, r2, rl;
    std::set<int> runs;
    for (const auto& rec : records) {
        runs.insert(rec.run);
        cr.add(rec.run, rec.compression);
        lu.add(rec.run, static_cast<double>(rec.lookup_count));
        resp.add(rec.run, static_cast<double>(rec.response_words));
        if (rec.rating.level == RatingLevel::error) {
            ++row.rating_exclusions;
        } else if (rec.rating.level != RatingLevel::not_rated) {
            lr1.add(rec.run, rec.rating.level == RatingLevel::exact ? 100.0 : 0.0);
            lr2.add(rec.run, rec.rating.level == RatingLevel::exact ||
                                     rec.rating.level == RatingLevel::partial
                                 ? 100.0
                                 : 0.0);
        }
        if (rec.correct) acc.add(rec.run, *rec.correct ? 100.0 : 0.0);
        if (rec.rouge1) r1.add(rec.run, rec.rouge1->f_measure);
        if (rec.rouge2) r2.add(rec.run, rec.rouge2->f_measure);
        if (rec.rouge_lcs) rl.add(rec.run, rec.rouge_lcs->f_measure);
    }

    row.runs = static_cast<int>(runs.size());
    row.cr = cr.summarize();
    row.lookups = lu.summarize();
    row.response_words = resp.summarize();
    if (!lr1.empty()) row.lr1 = lr1.summarize();
    if (!lr2.empty()) row.lr2 = lr2.summarize();
    if (!acc.empty()) row.accuracy = acc.summarize();
    if (!r1.empty()) row.rouge1_f = r1.summarize();
    if (!r2.empty()) row.rouge2_f = r2.summarize();
    if (!rl.empty()) row.rouge_l_f = rl.summarize();
    return row;
}

/// Rows grouped by method, methods in first-seen order.
inline std::vector<AggregateRow> aggregate_by_method(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw EvalError("aggregate: no records");
    std::vector<std::string> order;
    std::map<std::string, std::vector<EvalRecord>> groups;
    for (const auto& rec : records) {
        if (groups.find(rec.method) == groups.end()) order.push_back(rec.method);
        groups[rec.method].push_back(rec);
    }
    std::vector<AggregateRow> rows;
    rows.reserve(order.size());
    for (const auto& method : order) rows.push_back(aggregate(groups[method]));
    return rows;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

inline std::string metric_cell(const std::optional<MetricSummary>& m, int decimals, int runs,
                               const char* suffix = "") {
    if (!m) return "-";
    std::string out = fmt(m->mean, decimals) + suffix;
    if (runs > 1) out += " +/- " + fmt(m->stddev, decimals);
    return out;
}

}  // namespace detail

inline Json report_to_json(const std::vector<AggregateRow>& rows, bool partial = false) {
    Json out;
    out["partial"] = partial;
    Json jrows = Json::array();
    for (const auto& row : rows) {
        Json r = {
            {"method", row.method},
            {"records", row.records},
            {"runs", row.runs},
            {"cr", {{"mean", row.cr.mean}, {"stddev", row.cr.stddev}}},
            {"lookups", {{"mean", row.lookups.mean}, {"stddev", row.lookups.stddev}}},
            {"response_words",
             {{"mean", row.response_words.mean}, {"stddev", row.response_words.stddev}}},
            {"rating_exclusions", row.rating_exclusions},
        };
        auto put = [&r](const char* key, const std::optional<MetricSummary>& m) {
            if (m) r[key] = {{"mean", m->mean}, {"stddev", m->stddev}, {"n", m->n}};
        };
        put("lr1", row.lr1);
        put("lr2", row.lr2);
        put("accuracy", row.accuracy);
        put("rouge1_f", row.rouge1_f);
        put("rouge2_f", row.rouge2_f);
        put("rouge_l_f", row.rouge_l_f);
        jrows.push_back(std::move(r));
    }
    out["rows"] = jrows;
    return out;
}

/// Aligned-column text table with the paper's column set.
inline std::string report_to_table(const std::vector<AggregateRow>& rows) {
    const std::vector<std::string> header = {"Method", "CR",  "# LU",     "LR-1",        "LR-2",
                                             "R-1",    "R-2", "R-L",      "Accuracy",    "Resp. Length"};
    std::vector<std::vector<std::string>> cells;
    cells.push_back(header);
    for (const auto& row : rows) {
        std::vector<std::string> line;
        line.push_back(row.method);
        line.push_back(detail::fmt(row.cr.mean, 2) + "%");
        line.push_back(detail::fmt(row.lookups.mean, 2));
        line.push_back(detail::metric_cell(row.lr1, 2, row.runs, "%"));
        line.push_back(detail::metric_cell(row.lr2, 2, row.runs, "%"));
        line.push_back(detail::metric_cell(row.rouge1_f, 3, row.runs));
        line.push_back(detail::metric_cell(row.rouge2_f, 3, row.runs));
        line.push_back(detail::metric_cell(row.rouge_l_f, 3, row.runs));
        line.push_back(detail::metric_cell(row.accuracy, 2, row.runs, "%"));
        line.push_back(detail::fmt(row.response_words.mean, 1));
        cells.push_back(std::move(line));
    }

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            widths[i] = std::max(widths[i], line[i].size());
        }
    }
    std::string out;
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            if (i > 0) out += "  ";
            out += cells[r][i];
            out.append(widths[i] - cells[r][i].size(), ' ');
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += "\n";
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t w : widths) total += w;
            out.append(total + 2 * (widths.size() - 1), '-');
            out += "\n";
        }
    }
    return out;
}

}  // namespace readagent
