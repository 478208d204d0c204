#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "readagent/corpus.hpp"

using namespace readagent;

namespace {

std::filesystem::path write_temp_jsonl(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("word_count counts maximal non-whitespace runs", "[corpus]") {
    CHECK(word_count("") == 0);
    CHECK(word_count("a b  c") == 3);
    CHECK(word_count("⟨Page 2⟩\nfoo") == 3);  // tags count as words
    CHECK(word_count("   ") == 0);
    CHECK(word_count("one\ntwo\tthree four") == 4);
}

TEST_CASE("word_count is additive over single-space concatenation", "[corpus]") {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> len(0, 6);
    auto random_text = [&] {
        std::string text;
        int words = len(rng);
        for (int i = 0; i < words; ++i) {
            if (i > 0) text += ' ';
            text += "w" + std::to_string(rng() % 100);
        }
        return text;
    };
    for (int trial = 0; trial < 200; ++trial) {
        std::string a = random_text();
        std::string b = random_text();
        if (a.empty() || b.empty()) continue;
        CHECK(word_count(a + " " + b) == word_count(a) + word_count(b));
    }
}

TEST_CASE("split_paragraphs splits on blank-line runs and normalizes", "[corpus]") {
    CHECK(split_paragraphs("").empty());
    CHECK(split_paragraphs("A b.\n\nC d.") == std::vector<std::string>{"A b.", "C d."});
    CHECK(split_paragraphs("A\n b.\n\n\n\nC.") == std::vector<std::string>{"A b.", "C."});
    CHECK(split_paragraphs("  \n \t \n").empty());
    CHECK(split_paragraphs("one") == std::vector<std::string>{"one"});
    // whitespace-only lines separate paragraphs
    CHECK(split_paragraphs("a\n   \nb") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("split_paragraphs loses no non-whitespace character", "[corpus]") {
    std::mt19937 rng(11);
    const std::string alphabet = "ab c\nd.\n\n e";
    for (int trial = 0; trial < 200; ++trial) {
        std::string raw;
        int n = static_cast<int>(rng() % 60);
        for (int i = 0; i < n; ++i) raw += alphabet[rng() % alphabet.size()];

        std::string joined;
        for (const auto& p : split_paragraphs(raw)) joined += p + " ";

        auto strip_ws = [](const std::string& s) {
            std::string out;
            for (unsigned char c : s) {
                if (std::isspace(c) == 0) out.push_back(static_cast<char>(c));
            }
            return out;
        };
        CHECK(strip_ws(joined) == strip_ws(raw));
    }
}

TEST_CASE("Document::from_text sums paragraph word counts", "[corpus]") {
    Document doc = Document::from_text("d1", "T", "one two\n\nthree four five");
    REQUIRE(doc.paragraphs.size() == 2);
    CHECK(doc.source_words == 5);
    CHECK(doc.full_text() == "one two\nthree four five");
}

TEST_CASE("load_corpus parses generic_jsonl", "[corpus]") {
    auto path = write_temp_jsonl(
        "ra_generic.jsonl",
        R"({"id": "d1", "title": "T", "text": "para one.\n\npara two.", "questions": [{"question": "Q?", "references": ["A."]}]})"
        "\n");
    auto corpus = load_corpus(path.string(), CorpusFormat::generic_jsonl);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus[0].doc.id == "d1");
    CHECK(corpus[0].doc.paragraphs.size() == 2);
    REQUIRE(corpus[0].tasks.size() == 1);
    CHECK(corpus[0].tasks[0].question == "Q?");
    CHECK_FALSE(corpus[0].tasks[0].multiple_choice());
    std::filesystem::remove(path);
}

TEST_CASE("load_corpus converts QuALITY gold_label to 0-based", "[corpus]") {
    auto path = write_temp_jsonl(
        "ra_quality.jsonl",
        R"({"article_id": "q1", "title": "T", "article": "body text here", "questions": [{"question": "Q?", "options": ["a", "b", "c", "d"], "gold_label": 3}]})"
        "\n");
    auto corpus = load_corpus(path.string(), CorpusFormat::quality_jsonl);
    REQUIRE(corpus.size() == 1);
    REQUIRE(corpus[0].tasks.size() == 1);
    REQUIRE(corpus[0].tasks[0].gold_option.has_value());
    CHECK(*corpus[0].tasks[0].gold_option == 2);
    std::filesystem::remove(path);
}

TEST_CASE("load_corpus errors name the line and field", "[corpus]") {
    auto path = write_temp_jsonl(
        "ra_bad.jsonl",
        R"({"id": "d1", "text": "x", "questions": []})"
        "\n"
        R"({"title": "no id", "text": "x", "questions": []})"
        "\n");
    CHECK_THROWS_WITH(load_corpus(path.string(), CorpusFormat::generic_jsonl),
                      Catch::Contains("line 2") && Catch::Contains("id"));
    std::filesystem::remove(path);
}

TEST_CASE("load_corpus rejects duplicate document ids", "[corpus]") {
    auto path = write_temp_jsonl(
        "ra_dup.jsonl",
        R"({"id": "d1", "text": "x", "questions": [{"question": "Q?", "references": ["r"]}]})"
        "\n"
        R"({"id": "d1", "text": "y", "questions": [{"question": "Q?", "references": ["r"]}]})"
        "\n");
    CHECK_THROWS_WITH(load_corpus(path.string(), CorpusFormat::generic_jsonl),
                      Catch::Contains("duplicate"));
    std::filesystem::remove(path);
}

TEST_CASE("load_corpus rejects out-of-range gold indices", "[corpus]") {
    auto path = write_temp_jsonl(
        "ra_gold.jsonl",
        R"({"id": "d1", "text": "x", "questions": [{"question": "Q?", "options": ["a", "b"], "gold": 2}]})"
        "\n");
    CHECK_THROWS_AS(load_corpus(path.string(), CorpusFormat::generic_jsonl), CorpusError);
    std::filesystem::remove(path);
}
