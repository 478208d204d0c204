#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "readagent/backend.hpp"
#include "readagent/corpus.hpp"
#include "readagent/pagination.hpp"
#include "readagent/parsing.hpp"
#include "readagent/prompts.hpp"

namespace readagent {

struct GistingError : std::runtime_error {
    GistingError(int page_index, const std::string& message)
        : std::runtime_error("page " + std::to_string(page_index) + ": " + message),
          page_index(page_index) {}
    int page_index;
};

struct Gist {
    int page_index = 0;
    std::string text;
    int word_count = 0;
};

/// Aligned pages and gists for one document; the agent's episodic memory.
struct GistMemory {
    std::string doc_id;
    std::vector<Page> pages;
    std::vector<Gist> gists;
    std::string params_fingerprint;
};

enum class GistMode { unconditional, conditional };

struct GistingOptions {
    GistMode mode = GistMode::unconditional;
    std::string task;  // conditional mode only
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t hash = seed;
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

inline std::string hex64(std::uint64_t value) {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

}  // namespace detail

/// Hash of everything that shapes a gist memory: pagination and gisting
/// parameters plus the prompt library version. Cached memories are reused
/// only under an identical fingerprint.
inline std::string params_fingerprint(const PaginationParams& params, const GistingOptions& gisting,
                                      std::string_view paginator_kind,
                                      const PromptLibrary& prompts = default_prompts()) {
    std::string canonical = std::string("v") + kPromptLibraryVersion;
    canonical += "|paginator=" + std::string(paginator_kind);
    canonical += "|min=" + std::to_string(params.min_words);
    canonical += "|max=" + std::to_string(params.max_words);
    canonical += "|prev=" + std::to_string(params.include_previous_page ? 1 : 0);
    canonical += "|gist=";
    canonical += gisting.mode == GistMode::conditional ? "conditional" : "unconditional";
    if (gisting.mode == GistMode::conditional) {
        canonical += "|task=" + detail::hex64(detail::fnv1a64(gisting.task));
    }
    std::uint64_t prompt_hash = 14695981039346656037ull;
    for (const auto& [name, tmpl] : prompts.all()) {
        prompt_hash = detail::fnv1a64(name, prompt_hash);
        prompt_hash = detail::fnv1a64(tmpl.body, prompt_hash);
    }
    canonical += "|prompts=" + detail::hex64(prompt_hash);
    return detail::hex64(detail::fnv1a64(canonical));
}

inline std::string document_content_hash(const Document& doc) {
    std::uint64_t hash = detail::fnv1a64(doc.title);
    for (const auto& p : doc.paragraphs) {
        hash = detail::fnv1a64(p, hash);
        hash = detail::fnv1a64("\x1f", hash);
    }
    return detail::hex64(hash);
}

/// Compresses one page. An empty completion is retried once, then raised
/// as a gisting error carrying the page index. Merge-driven re-gists pass
/// their own ledger stage.
inline Gist gist_page(const Page& page, LlmBackend& backend, const GistingOptions& options,
                      const PromptLibrary& prompts = default_prompts(),
                      Stage stage = Stage::gisting) {
    std::string prompt;
    if (options.mode == GistMode::conditional) {
        prompt = render(prompts.get("gisting_conditional"),
                        {{"task", options.task}, {"passage", page.text}});
    } else {
        prompt = render(prompts.get("gisting"), {{"passage", page.text}});
    }

    CompletionRequest request;
    request.prompt = prompt;
    request.temperature = 0.0;
    request.stage = stage;
    request.payload_words = page.word_count;

    for (int attempt = 0; attempt < 2; ++attempt) {
        CompletionResult result = backend.complete(request);
        if (word_count(result.text) > 0) {
            return Gist{page.index, result.text, result.response_words};
        }
    }
    throw GistingError(page.index, "backend returned an empty gist twice");
}

inline GistMemory build_gist_memory(const Document& doc, std::vector<Page> pages,
                                    LlmBackend& backend, const GistingOptions& options,
                                    const std::string& fingerprint,
                                    const PromptLibrary& prompts = default_prompts()) {
    GistMemory memory;
    memory.doc_id = doc.id;
    memory.pages = std::move(pages);
    memory.params_fingerprint = fingerprint;
    memory.gists.reserve(memory.pages.size());
    for (const auto& page : memory.pages) {
        memory.gists.push_back(gist_page(page, backend, options, prompts));
    }
    return memory;
}

inline std::string page_tag(int index) {
    return "⟨Page " + std::to_string(index) + "⟩";
}

/// "⟨Page i⟩" + newline + gist text per page, blank line between pages.
inline std::string assemble_memory(const GistMemory& memory) {
    std::string out;
    for (std::size_t i = 0; i < memory.pages.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += page_tag(memory.pages[i].index);
        out += "\n";
        out += memory.gists[i].text;
    }
    return out;
}

/// CR = 100 * (1 - context_words / full_words).
inline double compression_rate(long long full_words, long long context_words) {
    if (full_words <= 0) throw std::invalid_argument("compression_rate: full_words must be > 0");
    return 100.0 * (1.0 - static_cast<double>(context_words) / static_cast<double>(full_words));
}

struct MergeResult {
    std::vector<Page> pages;
    std::vector<Gist> gists;
    bool over_budget = false;  // budget unreachable; best effort returned
};

namespace detail {

inline long long assembled_words(const std::vector<Page>& pages, const std::vector<Gist>& gists) {
    long long total = 0;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        total += word_count(page_tag(pages[i].index));
        total += gists[i].word_count;
    }
    return total;
}

inline Page merge_adjacent(const Page& left, const Page& right) {
    Page merged;
    merged.index = left.index;  // re-indexed after the sweep
    merged.begin_paragraph = left.begin_paragraph;
    merged.end_paragraph = right.end_paragraph;
    merged.text = left.text + "\n" + right.text;
    merged.word_count = word_count(merged.text);
    return merged;
}

}  // namespace detail

/// Shrinks an over-budget memory by merging adjacent pages the model says
/// belong to the same chapter/section, then re-gisting the merged pages.
/// Sweeps left to right until the assembled memory fits the budget or no
/// pair is mergeable.
inline MergeResult merge_pages(const std::vector<Page>& pages, const std::vector<Gist>& gists,
                               LlmBackend& backend, long long word_budget,
                               const GistingOptions& gist_options = {},
                               const PromptLibrary& prompts = default_prompts()) {
    MergeResult result{pages, gists, false};
    while (detail::assembled_words(result.pages, result.gists) > word_budget &&
           result.pages.size() > 1) {
        std::vector<Page> merged_pages;
        std::vector<bool> regist;  // parallel to merged_pages
        merged_pages.push_back(result.pages[0]);
        regist.push_back(false);
        bool any_merge = false;
        for (std::size_t i = 1; i < result.pages.size(); ++i) {
            const Page& next = result.pages[i];
            std::string prompt = render(prompts.get("page_merge"),
                                        {{"previous_page", merged_pages.back().text},
                                         {"current_page", next.text}});
            CompletionRequest request;
            request.prompt = prompt;
            request.temperature = 0.0;
            request.stage = Stage::merging;
            request.payload_words = merged_pages.back().word_count + next.word_count;
            CompletionResult reply = backend.complete(request);

            ParsedRating parsed = parse_rating(reply.text, RaterMode::strict);
            bool starts_new_section = !parsed.recognized || parsed.verdict == RatingVerdict::yes;
            if (starts_new_section) {
                merged_pages.push_back(next);
                regist.push_back(false);
            } else {
                merged_pages.back() = detail::merge_adjacent(merged_pages.back(), next);
                regist.back() = true;
                any_merge = true;
            }
        }
        if (!any_merge) break;

        // re-index, carry over untouched gists, re-gist merged pages
        std::vector<Gist> merged_gists;
        std::size_t old_cursor = 0;
        for (std::size_t i = 0; i < merged_pages.size(); ++i) {
            merged_pages[i].index = static_cast<int>(i);
            while (old_cursor < result.pages.size() &&
                   result.pages[old_cursor].begin_paragraph != merged_pages[i].begin_paragraph) {
                ++old_cursor;
            }
            if (regist[i]) {
                merged_gists.push_back(
                    gist_page(merged_pages[i], backend, gist_options, prompts, Stage::merging));
            } else {
                Gist gist = result.gists[old_cursor];
                gist.page_index = merged_pages[i].index;
                merged_gists.push_back(std::move(gist));
            }
        }
        result.pages = std::move(merged_pages);
        result.gists = std::move(merged_gists);
    }
    result.over_budget = detail::assembled_words(result.pages, result.gists) > word_budget;
    return result;
}

}  // namespace readagent
