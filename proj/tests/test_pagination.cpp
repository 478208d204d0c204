#include <catch2/catch.hpp>

#include <random>

#include "readagent/pagination.hpp"
#include "test_support.hpp"

using namespace readagent;
using namespace test_support;

TEST_CASE("build_chunk accumulates to max_words and labels past min_words", "[pagination]") {
    PaginationParams params{280, 600, false};

    // three short paragraphs: only the end-of-document boundary qualifies
    Document doc = make_doc("d", {100, 100, 100});
    Chunk chunk = build_chunk(doc, 0, params);
    CHECK(chunk.paragraphs.size() == 3);
    CHECK(chunk.ends_document);
    CHECK(chunk.labels == std::set<int>{3});

    // two 300-word paragraphs: both boundaries pass min_words
    Document doc2 = make_doc("d2", {300, 300});
    Chunk chunk2 = build_chunk(doc2, 0, params);
    CHECK(chunk2.paragraphs.size() == 2);
    CHECK(chunk2.labels == std::set<int>{1, 2});

    // a single over-budget paragraph is an indivisible chunk
    Document doc3 = make_doc("d3", {700});
    Chunk chunk3 = build_chunk(doc3, 0, params);
    CHECK(chunk3.paragraphs.size() == 1);
    CHECK(chunk3.labels == std::set<int>{1});

    // mid-document: the chunk stops once max_words is reached
    Document doc4 = make_doc("d4", {300, 300, 300, 300});
    Chunk chunk4 = build_chunk(doc4, 0, params);
    CHECK(chunk4.paragraphs.size() == 2);
    CHECK_FALSE(chunk4.ends_document);
    CHECK(chunk4.labels == std::set<int>{1, 2});
}

TEST_CASE("paginate_uniform packs paragraphs greedily", "[pagination]") {
    Document doc = make_doc("d", {100, 100, 100, 100});
    auto pages = paginate_uniform(doc, 200);
    REQUIRE(pages.size() == 2);
    CHECK(pages[0].begin_paragraph == 0);
    CHECK(pages[0].end_paragraph == 2);
    CHECK(pages[1].begin_paragraph == 2);
    CHECK(pages[1].end_paragraph == 4);
    CHECK(pages[0].word_count == 200);

    // target larger than the document
    CHECK(paginate_uniform(doc, 10000).size() == 1);

    // empty document
    Document empty = Document::from_text("e", "", "  \n \n ");
    CHECK(paginate_uniform(empty, 100).empty());
}

TEST_CASE("paginate_llm emits one page for a one-paragraph document", "[pagination]") {
    Document doc = make_doc("d", {42});
    auto backend = largest_label_backend();
    auto pages = paginate_llm(doc, PaginationParams{280, 600, false}, backend);
    REQUIRE(pages.size() == 1);
    CHECK(pages[0].begin_paragraph == 0);
    CHECK(pages[0].end_paragraph == 1);
    CHECK(pages[0].word_count == 42);
}

TEST_CASE("largest-label scripting matches uniform pagination at max_words", "[pagination]") {
    std::mt19937 rng(23);
    PaginationParams params{280, 600, false};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> paragraph_words;
        int n = 1 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) paragraph_words.push_back(1 + static_cast<int>(rng() % 120));
        Document doc = make_doc("d" + std::to_string(trial), paragraph_words);

        auto backend = largest_label_backend();
        auto llm_pages = paginate_llm(doc, params, backend);
        auto uniform_pages = paginate_uniform(doc, params.max_words);

        REQUIRE(llm_pages.size() == uniform_pages.size());
        for (std::size_t i = 0; i < llm_pages.size(); ++i) {
            CHECK(llm_pages[i].begin_paragraph == uniform_pages[i].begin_paragraph);
            CHECK(llm_pages[i].end_paragraph == uniform_pages[i].end_paragraph);
        }
    }
}

TEST_CASE("unparseable break points fall back to the largest label", "[pagination]") {
    Document doc = make_doc("d", {300, 300, 300, 300});
    FnBackend garbage_backend([](const CompletionRequest&) { return std::string("hmm?"); });
    auto pages = paginate_llm(doc, PaginationParams{280, 600, false}, garbage_backend);
    auto uniform_pages = paginate_uniform(doc, 600);
    REQUIRE(pages.size() == uniform_pages.size());
    for (std::size_t i = 0; i < pages.size(); ++i) {
        CHECK(pages[i].end_paragraph == uniform_pages[i].end_paragraph);
    }
}

TEST_CASE("both paginators tile the document", "[pagination][property]") {
    std::mt19937 rng(41);
    const std::vector<PaginationParams> param_set = {
        {280, 600, false}, {500, 3000, false}, {600, 1000, false}};
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> paragraph_words;
        int n = 1 + static_cast<int>(rng() % 60);
        for (int i = 0; i < n; ++i) paragraph_words.push_back(1 + static_cast<int>(rng() % 120));
        Document doc = make_doc("d" + std::to_string(trial), paragraph_words);

        for (const auto& params : param_set) {
            auto backend = random_label_backend(trial * 7 + params.min_words);
            auto pages = paginate_llm(doc, params, backend);
            CHECK(pages_tile_document(pages, doc));
            // non-final pages respect the min_words lower bound
            for (std::size_t i = 0; i + 1 < pages.size(); ++i) {
                CHECK(pages[i].word_count >= params.min_words);
            }
            auto uniform = paginate_uniform(doc, params.min_words);
            CHECK(pages_tile_document(uniform, doc));
            for (std::size_t i = 0; i + 1 < uniform.size(); ++i) {
                CHECK(uniform[i].word_count >= params.min_words);
            }
        }
    }
}

TEST_CASE("pagination with a deterministic backend is deterministic", "[pagination]") {
    Document doc = make_doc("d", {90, 250, 310, 40, 500, 120, 77});
    PaginationParams params{280, 600, false};
    auto backend1 = random_label_backend(5);
    auto backend2 = random_label_backend(5);
    auto a = paginate_llm(doc, params, backend1);
    auto b = paginate_llm(doc, params, backend2);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].begin_paragraph == b[i].begin_paragraph);
        CHECK(a[i].text == b[i].text);
    }
}

TEST_CASE("include_previous_page prefixes the prior page text", "[pagination]") {
    Document doc = make_doc("d", {300, 300, 300, 300});
    std::vector<std::string> prompts_seen;
    FnBackend capture([&](const CompletionRequest& request) {
        prompts_seen.push_back(request.prompt);
        auto labels = labels_in_prompt(request.prompt);
        return "Break point: ⟨" + std::to_string(labels.back()) + "⟩";
    });
    PaginationParams params{280, 600, true};
    auto pages = paginate_llm(doc, params, capture);
    REQUIRE(pages.size() >= 2);
    REQUIRE(prompts_seen.size() >= 2);
    // second chunk's prompt carries the first page verbatim
    CHECK(prompts_seen[1].find(pages[0].text) != std::string::npos);
    // first chunk has no previous page
    CHECK(prompts_seen[0].find("p0w0") != std::string::npos);
}

TEST_CASE("pagination prompts carry the Passage: structure and tags", "[pagination]") {
    Document doc = make_doc("d", {300, 300});
    std::string seen;
    FnBackend capture([&](const CompletionRequest& request) {
        seen = request.prompt;
        return std::string("Break point: ⟨2⟩");
    });
    paginate_llm(doc, PaginationParams{280, 600, false}, capture);
    CHECK(seen.find("Passage:") != std::string::npos);
    CHECK(seen.find("⟨1⟩") != std::string::npos);
    CHECK(seen.find("⟨2⟩") != std::string::npos);
    CHECK(seen.find("natural to break reading") != std::string::npos);
}
