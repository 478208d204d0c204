#pragma once

#include <set>
#include <string>
#include <vector>

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/parsing.hpp"
#include "readagent/prompts.hpp"

namespace readagent {

struct PaginationParams {
    int min_words = 280;
    int max_words = 600;
    bool include_previous_page = false;
};

/// A contiguous paragraph span; the unit of look-up and retrieval.
struct Page {
    int index = 0;
    std::size_t begin_paragraph = 0;  // half-open span into Document.paragraphs
    std::size_t end_paragraph = 0;
    std::string text;
    int word_count = 0;
};

/// Paragraphs [begin, end) joined with single newlines.
inline std::string paragraph_span_text(const Document& doc, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out.push_back('\n');
        out += doc.paragraphs[i];
    }
    return out;
}

inline Page make_page(const Document& doc, int index, std::size_t begin, std::size_t end) {
    Page page;
    page.index = index;
    page.begin_paragraph = begin;
    page.end_paragraph = end;
    page.text = paragraph_span_text(doc, begin, end);
    page.word_count = word_count(page.text);
    return page;
}

struct Chunk {
    std::vector<std::string> paragraphs;  // copies of doc paragraphs from `start`
    // Boundary labels, counted in paragraphs from the chunk start: label i
    // sits after the i-th chunk paragraph. A boundary qualifies once the
    // running word count reaches min_words; the end of the document always
    // qualifies. A single over-budget paragraph is its own chunk with its
    // end as the only label.
    std::set<int> labels;
    bool ends_document = false;
};

/// Accumulates paragraphs from `start` until the running word count
/// reaches max_words or the document ends.
inline Chunk build_chunk(const Document& doc, std::size_t start, const PaginationParams& params) {
    Chunk chunk;
    long long cumulative = 0;
    std::size_t i = start;
    while (i < doc.paragraphs.size()) {
        chunk.paragraphs.push_back(doc.paragraphs[i]);
        cumulative += word_count(doc.paragraphs[i]);
        ++i;
        if (cumulative >= params.min_words) {
            chunk.labels.insert(static_cast<int>(chunk.paragraphs.size()));
        }
        if (cumulative >= params.max_words) break;
    }
    chunk.ends_document = (i == doc.paragraphs.size());
    if (chunk.ends_document) chunk.labels.insert(static_cast<int>(chunk.paragraphs.size()));
    return chunk;
}

namespace detail {

/// Chunk paragraphs with the qualifying boundaries tagged. Labels are
/// numbered globally: the boundary after chunk paragraph i gets number
/// start + i, matching the document-wide paragraph count.
inline std::string tagged_passage(const Chunk& chunk, std::size_t start) {
    std::string out;
    for (std::size_t i = 0; i < chunk.paragraphs.size(); ++i) {
        if (i > 0) out += "\n";
        out += chunk.paragraphs[i];
        int boundary = static_cast<int>(i + 1);
        if (chunk.labels.count(boundary) != 0) {
            out += "\n⟨" + std::to_string(start + boundary) + "⟩";
        }
    }
    return out;
}

}  // namespace detail

/// LLM-chosen pause points. Unparseable or invalid break points fall back
/// to the largest available label so progress is guaranteed.
inline std::vector<Page> paginate_llm(const Document& doc, const PaginationParams& params,
                                      LlmBackend& backend,
                                      const PromptLibrary& prompts = default_prompts()) {
    std::vector<Page> pages;
    std::size_t start = 0;
    while (start < doc.paragraphs.size()) {
        Chunk chunk = build_chunk(doc, start, params);

        // payload is the chunk text alone; tags and any previous-page
        // prefix count as template overhead
        int chunk_words = 0;
        for (const auto& paragraph : chunk.paragraphs) chunk_words += word_count(paragraph);

        std::string passage = detail::tagged_passage(chunk, start);
        if (params.include_previous_page && !pages.empty()) {
            passage = pages.back().text + "\n" + passage;
        }
        std::string prompt = render(prompts.get("pagination"), {{"passage", passage}});

        CompletionRequest request;
        request.prompt = prompt;
        request.temperature = 0.0;
        request.stage = Stage::pagination;
        request.payload_words = chunk_words;
        CompletionResult result = backend.complete(request);

        std::set<int> global_labels;
        for (int label : chunk.labels) global_labels.insert(static_cast<int>(start) + label);

        int chosen = *global_labels.rbegin();
        if (auto parsed = parse_break_point(result.text, global_labels)) chosen = *parsed;

        std::size_t end = static_cast<std::size_t>(chosen);
        pages.push_back(make_page(doc, static_cast<int>(pages.size()), start, end));
        start = end;
    }
    return pages;
}

/// Greedy paragraph packing: a page closes at the first boundary where its
/// word count reaches target_words. No backend calls.
inline std::vector<Page> paginate_uniform(const Document& doc, int target_words) {
    std::vector<Page> pages;
    std::size_t start = 0;
    while (start < doc.paragraphs.size()) {
        long long words = 0;
        std::size_t end = start;
        while (end < doc.paragraphs.size()) {
            words += word_count(doc.paragraphs[end]);
            ++end;
            if (words >= target_words) break;
        }
        pages.push_back(make_page(doc, static_cast<int>(pages.size()), start, end));
        start = end;
    }
    return pages;
}

/// Adjacency, disjointness, and coverage of the document's paragraphs.
inline bool pages_tile_document(const std::vector<Page>& pages, const Document& doc) {
    std::size_t expected = 0;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        if (pages[i].index != static_cast<int>(i)) return false;
        if (pages[i].begin_paragraph != expected) return false;
        if (pages[i].end_paragraph <= pages[i].begin_paragraph) return false;
        expected = pages[i].end_paragraph;
    }
    return expected == doc.paragraphs.size();
}

}  // namespace readagent
