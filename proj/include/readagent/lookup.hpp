#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "readagent/backend.hpp"
#include "readagent/gisting.hpp"
#include "readagent/parsing.hpp"
#include "readagent/prompts.hpp"

namespace readagent {

enum class LookupStrategy { parallel, sequential, none };

struct LookupConfig {
    LookupStrategy strategy = LookupStrategy::parallel;
    int max_pages = 1;
    long long context_word_budget = 6000;
    bool importance_ordering = false;
    bool take_deep_breath = false;     // QuALITY look-up prompt variant
    std::string document_kind = "an article";  // sequential prompt wording
};

struct LookupResult {
    std::vector<int> selected_pages;  // response order, duplicate-free
    std::vector<std::pair<std::string, std::string>> transcript;  // (prompt, response)
    std::string final_context;
    long long final_context_words = 0;
    long long max_context_words = 0;  // longest in-context text over all steps
    bool truncated_by_budget = false;
};

/// Same assembly as assemble_memory, with the selected positions carrying
/// the raw page text instead of the gist. Document order regardless of
/// selection order.
inline std::string expand_context(const GistMemory& memory, const std::set<int>& selected) {
    for (int index : selected) {
        bool known = false;
        for (const auto& page : memory.pages) {
            if (page.index == index) {
                known = true;
                break;
            }
        }
        if (!known) throw std::out_of_range("expand_context: invalid page index " +
                                            std::to_string(index));
    }
    std::string out;
    for (std::size_t i = 0; i < memory.pages.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += page_tag(memory.pages[i].index);
        out += "\n";
        out += selected.count(memory.pages[i].index) ? memory.pages[i].text
                                                     : memory.gists[i].text;
    }
    return out;
}

namespace detail {

inline std::string question_block(const QaTask& task) {
    std::string out = task.question;
    if (task.options) {
        for (std::size_t i = 0; i < task.options->size(); ++i) {
            out += "\n(";
            out += static_cast<char>('A' + i);
            out += ") " + (*task.options)[i];
        }
    }
    return out;
}

inline std::string page_range_text(int max_pages) {
    if (max_pages <= 1) return "1";
    return "1 to " + std::to_string(max_pages);
}

inline const PromptTemplate& parallel_template(const PromptLibrary& prompts, const QaTask& task,
                                               const LookupConfig& config) {
    if (config.importance_ordering) return prompts.get("lookup_parallel_importance");
    if (task.multiple_choice()) {
        return prompts.get(config.take_deep_breath ? "lookup_parallel_mc_deep_breath"
                                                   : "lookup_parallel_mc");
    }
    return prompts.get("lookup_parallel_freeform");
}

}  // namespace detail

/// ReadAgent-P: one prompt requests a page set. Invalid indices are
/// filtered, the list is cut to max_pages in response order, and under
/// importance ordering pages are added greedily while the expanded
/// context stays within the word budget.
inline LookupResult lookup_parallel(const GistMemory& memory, const QaTask& task,
                                    const LookupConfig& config, LlmBackend& backend,
                                    const PromptLibrary& prompts = default_prompts()) {
    LookupResult result;
    const std::string memory_text = assemble_memory(memory);
    const long long memory_words = word_count(memory_text);
    result.max_context_words = memory_words;

    std::string prompt = render(detail::parallel_template(prompts, task, config),
                                {{"page_range", detail::page_range_text(config.max_pages)},
                                 {"memory", memory_text},
                                 {"question", detail::question_block(task)}});
    CompletionRequest request;
    request.prompt = prompt;
    request.temperature = 0.0;
    request.stage = Stage::lookup_parallel;
    request.payload_words = static_cast<int>(memory_words);
    CompletionResult reply = backend.complete(request);
    result.transcript.emplace_back(prompt, reply.text);

    std::unordered_set<int> known;
    for (const auto& page : memory.pages) known.insert(page.index);

    std::vector<int> requested = parse_page_list(reply.text);
    std::set<int> chosen;
    for (int index : requested) {
        if (static_cast<int>(result.selected_pages.size()) >= config.max_pages) break;
        if (known.count(index) == 0) continue;
        if (config.importance_ordering) {
            std::set<int> trial = chosen;
            trial.insert(index);
            if (word_count(expand_context(memory, trial)) > config.context_word_budget) {
                result.truncated_by_budget = true;
                continue;
            }
        }
        chosen.insert(index);
        result.selected_pages.push_back(index);
    }

    result.final_context = expand_context(memory, chosen);
    result.final_context_words = word_count(result.final_context);
    result.max_context_words = std::max(result.max_context_words, result.final_context_words);
    return result;
}

/// ReadAgent-S: requests one page at a time over the memory with the
/// already-expanded pages shown in-line. Duplicate or invalid requests
/// consume a turn without re-expanding; the budget check before each
/// expansion can force an early stop.
inline LookupResult lookup_sequential(const GistMemory& memory, const QaTask& task,
                                      const LookupConfig& config, LlmBackend& backend,
                                      const PromptLibrary& prompts = default_prompts()) {
    LookupResult result;
    std::set<int> chosen;
    std::string context = assemble_memory(memory);
    result.max_context_words = word_count(context);

    std::unordered_set<int> known;
    for (const auto& page : memory.pages) known.insert(page.index);

    const int max_turns = config.max_pages + 1;
    int turns = 0;
    while (turns < max_turns && static_cast<int>(result.selected_pages.size()) < config.max_pages) {
        std::string pages_read =
            result.selected_pages.empty() ? "(none)" : format_page_list(result.selected_pages);
        std::string prompt = render(prompts.get("lookup_sequential"),
                                    {{"document_kind", config.document_kind},
                                     {"memory", context},
                                     {"pages_read", pages_read},
                                     {"question", detail::question_block(task)}});
        CompletionRequest request;
        request.prompt = prompt;
        request.temperature = 0.0;
        request.stage = Stage::lookup_sequential;
        request.payload_words = word_count(context);
        CompletionResult reply = backend.complete(request);
        result.transcript.emplace_back(prompt, reply.text);
        ++turns;

        auto choice = parse_sequential_choice(reply.text);
        if (!choice || std::holds_alternative<Stop>(*choice)) break;

        int index = std::get<PageRequest>(*choice).page;
        if (known.count(index) == 0 || chosen.count(index) != 0) continue;  // wasted turn

        std::set<int> trial = chosen;
        trial.insert(index);
        std::string expanded = expand_context(memory, trial);
        if (word_count(expanded) > config.context_word_budget) {
            result.truncated_by_budget = true;
            break;
        }
        chosen = std::move(trial);
        result.selected_pages.push_back(index);
        context = std::move(expanded);
        result.max_context_words = std::max<long long>(result.max_context_words,
                                                       word_count(context));
    }

    result.final_context = std::move(context);
    result.final_context_words = word_count(result.final_context);
    return result;
}

/// Strategy none: answer straight from the gist memory.
inline LookupResult lookup_none(const GistMemory& memory) {
    LookupResult result;
    result.final_context = assemble_memory(memory);
    result.final_context_words = word_count(result.final_context);
    result.max_context_words = result.final_context_words;
    return result;
}

enum class AnswerMode { multiple_choice, free_form };

struct AnswerResult {
    std::string text;
    std::optional<int> option;  // multiple choice only
    bool unparsed = false;      // MC response had no parseable option letter
};

/// Final response over the assembled context. Multiple-choice responses
/// run through parse_mc_answer; unparseable ones are flagged and scored
/// as incorrect by the caller.
inline AnswerResult answer(const std::string& final_context, const QaTask& task,
                           LlmBackend& backend, AnswerMode mode,
                           const PromptLibrary& prompts = default_prompts(),
                           std::vector<std::pair<std::string, std::string>>* transcript = nullptr) {
    if (final_context.empty()) throw std::invalid_argument("answer: final_context is empty");
    std::string prompt;
    if (mode == AnswerMode::multiple_choice) {
        std::string options;
        if (task.options) {
            for (std::size_t i = 0; i < task.options->size(); ++i) {
                if (i > 0) options += "\n";
                options += "(";
                options += static_cast<char>('A' + i);
                options += ") " + (*task.options)[i];
            }
        }
        prompt = render(prompts.get("response_multiple_choice"),
                        {{"context", final_context}, {"question", task.question},
                         {"options", options}});
    } else {
        prompt = render(prompts.get("response_freeform"),
                        {{"context", final_context}, {"question", task.question}});
    }

    CompletionRequest request;
    request.prompt = prompt;
    request.temperature = 0.0;
    request.stage = Stage::response;
    request.payload_words = word_count(final_context);
    CompletionResult reply = backend.complete(request);
    if (transcript) transcript->emplace_back(prompt, reply.text);

    AnswerResult result;
    result.text = reply.text;
    if (mode == AnswerMode::multiple_choice) {
        int n_options = task.options ? static_cast<int>(task.options->size()) : 0;
        auto parsed = parse_mc_answer(reply.text, n_options);
        if (parsed) {
            result.option = *parsed;
        } else {
            result.unparsed = true;
        }
    }
    return result;
}

}  // namespace readagent
