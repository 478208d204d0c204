#include <catch2/catch.hpp>

#include <map>
#include <random>

#include "readagent/eval.hpp"
#include "test_support.hpp"

using namespace readagent;
using namespace test_support;

namespace {

// Independent ROUGE oracle: naive n-gram lists and a full LCS table.
std::vector<std::string> oracle_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

RougeScore oracle_rouge_n(const std::string& cand, const std::string& ref, int n) {
    auto grams = [n](const std::vector<std::string>& tokens) {
        std::vector<std::string> out;
        for (int i = 0; i + n <= static_cast<int>(tokens.size()); ++i) {
            std::string g;
            for (int j = 0; j < n; ++j) g += tokens[i + j] + "\x01";
            out.push_back(g);
        }
        return out;
    };
    auto cand_grams = grams(oracle_tokens(cand));
    auto ref_grams = grams(oracle_tokens(ref));
    std::vector<bool> used(ref_grams.size(), false);
    double overlap = 0.0;
    for (const auto& g : cand_grams) {
        for (std::size_t i = 0; i < ref_grams.size(); ++i) {
            if (!used[i] && ref_grams[i] == g) {
                used[i] = true;
                overlap += 1.0;
                break;
            }
        }
    }
    RougeScore s;
    s.precision = cand_grams.empty() ? 0.0 : overlap / cand_grams.size();
    s.recall = ref_grams.empty() ? 0.0 : overlap / ref_grams.size();
    s.f_measure =
        (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

RougeScore oracle_rouge_l(const std::string& cand, const std::string& ref) {
    auto a = oracle_tokens(cand);
    auto b = oracle_tokens(ref);
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                            : std::max(dp[i - 1][j], dp[i][j - 1]);
        }
    }
    double lcs = dp[a.size()][b.size()];
    RougeScore s;
    s.precision = a.empty() ? 0.0 : lcs / a.size();
    s.recall = b.empty() ? 0.0 : lcs / b.size();
    s.f_measure =
        (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

std::string random_sentence(std::mt19937& rng, int max_words) {
    const std::vector<std::string> vocab = {"the", "cat",  "sat",  "dog", "ran",
                                            "a",   "tree", "fell", "on",  "mat"};
    int n = static_cast<int>(rng() % (max_words + 1));
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i > 0) out += ' ';
        out += vocab[rng() % vocab.size()];
    }
    return out;
}

/// Rater backend answering per reference text.
FnBackend rater_backend(std::map<std::string, std::pair<std::string, std::string>> per_ref) {
    return FnBackend([per_ref](const CompletionRequest& request) {
        for (const auto& [ref, responses] : per_ref) {
            if (request.prompt.find("\n\n" + ref + "\n\n") != std::string::npos) {
                return request.stage == Stage::rater_strict ? responses.first : responses.second;
            }
        }
        return std::string("unmatched reference");
    });
}

EvalRecord make_record(const std::string& method, RatingLevel level, int run = 0) {
    EvalRecord rec;
    rec.method = method;
    rec.run = run;
    rec.rating.level = level;
    rec.compression = 80.0;
    rec.lookup_count = 1;
    rec.response_words = 10;
    return rec;
}

}  // namespace

TEST_CASE("rouge_n analytic fixtures", "[eval]") {
    CHECK(rouge_n("same words here", "same words here", 1).f_measure == Approx(1.0));

    RougeScore s = rouge_n("the cat sat", "the cat", 1);
    CHECK(s.precision == Approx(2.0 / 3.0));
    CHECK(s.recall == Approx(1.0));
    CHECK(s.f_measure == Approx(0.8));

    RougeScore bigram = rouge_n("a b c", "a b d", 2);
    CHECK(bigram.precision == Approx(0.5));
    CHECK(bigram.recall == Approx(0.5));
    CHECK(bigram.f_measure == Approx(0.5));

    CHECK(rouge_n("", "anything", 1).f_measure == 0.0);
    CHECK(rouge_n("anything", "", 1).f_measure == 0.0);
    // punctuation is a token boundary, case folds
    CHECK(rouge_n("The CAT, sat!", "the cat sat", 1).f_measure == Approx(1.0));
}

TEST_CASE("rouge_l analytic fixtures", "[eval]") {
    RougeScore s = rouge_l("a c b", "a b c");
    CHECK(s.precision == Approx(2.0 / 3.0));
    CHECK(s.recall == Approx(2.0 / 3.0));
    CHECK(s.f_measure == Approx(2.0 / 3.0));

    CHECK(rouge_l("", "ref").f_measure == 0.0);
    CHECK(rouge_l("x y z", "x y z").f_measure == Approx(1.0));
}

TEST_CASE("rouge implementations match the brute-force oracle", "[eval][property]") {
    std::mt19937 rng(71);
    for (int trial = 0; trial < 100; ++trial) {
        std::string cand = random_sentence(rng, 12);
        std::string ref = random_sentence(rng, 12);
        for (int n : {1, 2}) {
            RougeScore got = rouge_n(cand, ref, n);
            RougeScore want = oracle_rouge_n(cand, ref, n);
            CHECK(got.precision == Approx(want.precision).margin(1e-9));
            CHECK(got.recall == Approx(want.recall).margin(1e-9));
            CHECK(got.f_measure == Approx(want.f_measure).margin(1e-9));
        }
        RougeScore got = rouge_l(cand, ref);
        RougeScore want = oracle_rouge_l(cand, ref);
        CHECK(got.precision == Approx(want.precision).margin(1e-9));
        CHECK(got.recall == Approx(want.recall).margin(1e-9));
        CHECK(got.f_measure == Approx(want.f_measure).margin(1e-9));
    }
}

TEST_CASE("rouge precision and recall are symmetric", "[eval][property]") {
    std::mt19937 rng(73);
    for (int trial = 0; trial < 60; ++trial) {
        std::string a = random_sentence(rng, 10);
        std::string b = random_sentence(rng, 10);
        for (int n : {1, 2}) {
            CHECK(rouge_n(a, b, n).precision == Approx(rouge_n(b, a, n).recall).margin(1e-12));
        }
        CHECK(rouge_l(a, b).precision == Approx(rouge_l(b, a).recall).margin(1e-12));
    }
}

TEST_CASE("rate applies the strict-or-permissive precedence", "[eval]") {
    SECTION("either rater saying yes is an exact match") {
        auto backend = rater_backend({{"ref", {"YES", "No"}}});
        CHECK(rate("q", "resp", {"ref"}, backend).level == RatingLevel::exact);

        auto backend2 = rater_backend({{"ref", {"NO", "Yes"}}});
        CHECK(rate("q", "resp", {"ref"}, backend2).level == RatingLevel::exact);
    }
    SECTION("permissive partial after a strict no") {
        auto backend = rater_backend({{"ref", {"NO", "Yes, partially"}}});
        Rating rating = rate("q", "resp", {"ref"}, backend);
        CHECK(rating.level == RatingLevel::partial);
        CHECK(rating.strict_raw == "NO");
        CHECK(rating.permissive_raw == "Yes, partially");
    }
    SECTION("both negative is none") {
        auto backend = rater_backend({{"ref", {"NO", "No"}}});
        CHECK(rate("q", "resp", {"ref"}, backend).level == RatingLevel::none);
    }
    SECTION("highest rating across references wins") {
        auto backend = rater_backend({
            {"ref_a", {"NO", "No"}},
            {"ref_b", {"NO", "Yes, partially"}},
        });
        CHECK(rate("q", "resp", {"ref_a", "ref_b"}, backend).level == RatingLevel::partial);
    }
    SECTION("unrecognized rater output is flagged, treated as no") {
        auto backend = rater_backend({{"ref", {"hmm", "dunno"}}});
        Rating rating = rate("q", "resp", {"ref"}, backend);
        CHECK(rating.level == RatingLevel::none);
        CHECK(rating.strict_unrecognized);
        CHECK(rating.permissive_unrecognized);
    }
    SECTION("empty references are rejected") {
        ScriptedBackend backend;
        CHECK_THROWS_AS(rate("q", "resp", {}, backend), EvalError);
    }
}

TEST_CASE("rate is monotone in per-reference verdicts", "[eval][property]") {
    // verdict triples: (strict, permissive) per level
    const std::vector<std::pair<std::string, std::string>> by_level = {
        {"YES", "Yes"},           // exact
        {"NO", "Yes, partially"}, // partial
        {"NO", "No"},             // none
    };
    std::mt19937 rng(79);
    for (int trial = 0; trial < 100; ++trial) {
        int n_refs = 1 + static_cast<int>(rng() % 3);
        std::map<std::string, std::pair<std::string, std::string>> script;
        std::vector<std::string> refs;
        int best = 2;
        for (int i = 0; i < n_refs; ++i) {
            int level = static_cast<int>(rng() % 3);
            best = std::min(best, level);
            std::string ref = "ref_" + std::to_string(trial) + "_" + std::to_string(i);
            script[ref] = by_level[level];
            refs.push_back(ref);
        }
        auto backend = rater_backend(script);
        Rating rating = rate("q", "resp", refs, backend);
        RatingLevel expected = best == 0   ? RatingLevel::exact
                               : best == 1 ? RatingLevel::partial
                                           : RatingLevel::none;
        CHECK(rating.level == expected);
    }
}

TEST_CASE("rater prompts carry question, response, reference, and John", "[eval]") {
    std::vector<std::string> prompts;
    FnBackend capture([&](const CompletionRequest& request) {
        prompts.push_back(request.prompt);
        return std::string("No");
    });
    rate("the question", "the response", {"the reference"}, capture);
    REQUIRE(prompts.size() == 2);
    for (const auto& prompt : prompts) {
        CHECK(prompt.find("the question") != std::string::npos);
        CHECK(prompt.find("the response") != std::string::npos);
        CHECK(prompt.find("the reference") != std::string::npos);
        CHECK(prompt.find("John's answer") != std::string::npos);
    }
    CHECK(prompts[0].find("Please answer YES or NO") != std::string::npos);
    CHECK(prompts[1].find("Yes, partially") != std::string::npos);
}

TEST_CASE("aggregate computes LR-1, LR-2, and accuracy", "[eval]") {
    std::vector<EvalRecord> records = {
        make_record("m", RatingLevel::exact),
        make_record("m", RatingLevel::exact),
        make_record("m", RatingLevel::partial),
        make_record("m", RatingLevel::none),
    };
    AggregateRow row = aggregate(records);
    REQUIRE(row.lr1.has_value());
    REQUIRE(row.lr2.has_value());
    CHECK(row.lr1->mean == Approx(50.0));
    CHECK(row.lr2->mean == Approx(75.0));

    std::vector<EvalRecord> all_exact = {make_record("m", RatingLevel::exact),
                                         make_record("m", RatingLevel::exact)};
    AggregateRow exact_row = aggregate(all_exact);
    CHECK(exact_row.lr1->mean == Approx(100.0));
    CHECK(exact_row.lr2->mean == Approx(100.0));

    std::vector<EvalRecord> mc;
    for (int i = 0; i < 4; ++i) {
        EvalRecord rec = make_record("m", RatingLevel::not_rated);
        rec.correct = i < 3;
        mc.push_back(rec);
    }
    AggregateRow mc_row = aggregate(mc);
    REQUIRE(mc_row.accuracy.has_value());
    CHECK(mc_row.accuracy->mean == Approx(75.0));
    CHECK_FALSE(mc_row.lr1.has_value());

    CHECK_THROWS_AS(aggregate({}), EvalError);
}

TEST_CASE("rating errors are excluded and counted", "[eval]") {
    std::vector<EvalRecord> records = {
        make_record("m", RatingLevel::exact),
        make_record("m", RatingLevel::error),
        make_record("m", RatingLevel::none),
    };
    AggregateRow row = aggregate(records);
    CHECK(row.rating_exclusions == 1);
    CHECK(row.lr1->n == 2);
    CHECK(row.lr1->mean == Approx(50.0));
}

TEST_CASE("LR-2 is never below LR-1", "[eval][property]") {
    std::mt19937 rng(83);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<EvalRecord> records;
        int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            RatingLevel level = static_cast<RatingLevel>(rng() % 3);  // exact/partial/none
            records.push_back(make_record("m", level));
        }
        AggregateRow row = aggregate(records);
        REQUIRE(row.lr1.has_value());
        REQUIRE(row.lr2.has_value());
        CHECK(row.lr2->mean >= row.lr1->mean);
    }
}

TEST_CASE("aggregate reports per-run standard deviations", "[eval]") {
    std::vector<EvalRecord> records;
    // run 0: 100% exact; run 1: 0% exact
    records.push_back(make_record("m", RatingLevel::exact, 0));
    records.push_back(make_record("m", RatingLevel::none, 1));
    AggregateRow row = aggregate(records);
    CHECK(row.runs == 2);
    CHECK(row.lr1->mean == Approx(50.0));
    // sample stddev of {100, 0}
    CHECK(row.lr1->stddev == Approx(70.710678).margin(1e-3));
}

TEST_CASE("aggregate_by_method groups in first-seen order", "[eval]") {
    std::vector<EvalRecord> records = {
        make_record("b", RatingLevel::exact),
        make_record("a", RatingLevel::none),
        make_record("b", RatingLevel::partial),
    };
    auto rows = aggregate_by_method(records);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].method == "b");
    CHECK(rows[0].records == 2);
    CHECK(rows[1].method == "a");
}

TEST_CASE("cost ledger totals equal the sum of snapshots", "[eval][ledger]") {
    CostLedger ledger;
    CostSnapshot a;
    a.record(Stage::pagination, 100, 10, 80);
    a.record(Stage::gisting, 50, 5, 40);
    CostSnapshot b;
    b.record(Stage::gisting, 60, 6, 50);
    b.record(Stage::response, 70, 7, 60);
    ledger.add_snapshot("one", a);
    ledger.add_snapshot("two", b);

    CostSnapshot totals = ledger.totals();
    CHECK(totals.at(Stage::pagination).prompt_words == 100);
    CHECK(totals.at(Stage::gisting).prompt_words == 110);
    CHECK(totals.at(Stage::gisting).calls == 2);
    CHECK(totals.at(Stage::response).payload_words == 60);

    CostSnapshot resummed;
    for (const auto& [label, snap] : ledger.snapshots()) resummed.merge(snap);
    CHECK(resummed.total_prompt_words() == totals.total_prompt_words());
    CHECK(resummed.total_response_words() == totals.total_response_words());
}

TEST_CASE("ledger_check accepts a uniform run and rejects violations", "[eval][ledger]") {
    Document doc = make_doc("d", {100, 100});
    PaginationParams params{280, 600, false};

    CostSnapshot uniform_run;  // no pagination calls at all
    uniform_run.record(Stage::gisting, 220, 10, 200);
    LedgerVerdict ok = ledger_check(uniform_run, doc, params);
    CHECK(ok.ok);
    CHECK(ok.pagination_payload_words == 0);

    CostSnapshot bad_gist;
    bad_gist.record(Stage::gisting, 220, 10, 150);  // lost 50 words somewhere
    LedgerVerdict verdict = ledger_check(bad_gist, doc, params);
    CHECK_FALSE(verdict.ok);
    CHECK(verdict.detail.find("gisting") != std::string::npos);

    CostSnapshot runaway;
    runaway.record(Stage::pagination, 10000, 10, 9000);  // 9000 > 3 * 200
    LedgerVerdict runaway_verdict = ledger_check(runaway, doc, params);
    CHECK_FALSE(runaway_verdict.ok);
    CHECK(runaway_verdict.detail.find("pagination") != std::string::npos);
    CHECK(runaway_verdict.pagination_bound == 3 * doc.source_words);
}

TEST_CASE("EvalRecord JSON round-trips the aggregation inputs", "[eval]") {
    EvalRecord rec = make_record("m", RatingLevel::partial, 2);
    rec.doc_id = "doc9";
    rec.question_index = 4;
    rec.correct = true;
    rec.answer_option = 1;
    rec.rouge1 = RougeScore{0.5, 0.25, 1.0 / 3.0};
    rec.compression = 84.23;
    rec.lookup_count = 3;
    rec.response_words = 17;

    EvalRecord back = EvalRecord::from_json(rec.to_json());
    CHECK(back.doc_id == rec.doc_id);
    CHECK(back.question_index == rec.question_index);
    CHECK(back.method == rec.method);
    CHECK(back.run == rec.run);
    CHECK(back.rating.level == rec.rating.level);
    CHECK(back.correct == rec.correct);
    CHECK(back.answer_option == rec.answer_option);
    REQUIRE(back.rouge1.has_value());
    CHECK(back.rouge1->f_measure == rec.rouge1->f_measure);
    CHECK(back.compression == rec.compression);
    CHECK(back.lookup_count == rec.lookup_count);
    CHECK(back.response_words == rec.response_words);
}

TEST_CASE("report table carries the paper's column set", "[eval]") {
    std::vector<EvalRecord> records = {make_record("gistmem", RatingLevel::exact)};
    auto rows = aggregate_by_method(records);
    std::string table = report_to_table(rows);
    for (const char* column : {"Method", "CR", "# LU", "LR-1", "LR-2", "R-1", "R-2", "R-L",
                               "Accuracy", "Resp. Length"}) {
        CHECK(table.find(column) != std::string::npos);
    }
    CHECK(table.find("gistmem") != std::string::npos);
}
