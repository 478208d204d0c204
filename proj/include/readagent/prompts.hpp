#pragma once

#include <cctype>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace readagent {

struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Prompt body with {name} placeholders. Rendering is exact substitution.
struct PromptTemplate {
    std::string name;
    std::string body;
    std::set<std::string> required_placeholders;
};

namespace detail {

inline bool is_placeholder_char(unsigned char c) {
    return std::isalnum(c) != 0 || c == '_';
}

}  // namespace detail

/// Substitutes every {name} placeholder from `values`. A placeholder with
/// no value is an error naming it; substituted text is not re-scanned.
inline std::string render(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.body.size());
    std::size_t pos = 0;
    while (pos < tmpl.body.size()) {
        char c = tmpl.body[pos];
        if (c != '{') {
            out.push_back(c);
            ++pos;
            continue;
        }
        std::size_t end = pos + 1;
        bool leads_ok = end < tmpl.body.size() &&
                        (std::isalpha(static_cast<unsigned char>(tmpl.body[end])) != 0 ||
                         tmpl.body[end] == '_');
        while (end < tmpl.body.size() && detail::is_placeholder_char(tmpl.body[end])) ++end;
        if (leads_ok && end > pos + 1 && end < tmpl.body.size() && tmpl.body[end] == '}') {
            std::string key = tmpl.body.substr(pos + 1, end - pos - 1);
            auto it = values.find(key);
            if (it == values.end()) {
                throw TemplateError("template '" + tmpl.name + "': missing placeholder '" + key +
                                    "'");
            }
            out += it->second;
            pos = end + 1;
        } else {
            out.push_back(c);
            ++pos;
        }
    }
    return out;
}

/// Bumped whenever any template body changes; part of the gist-memory
/// parameter fingerprint.
inline constexpr const char* kPromptLibraryVersion = "1";

/// The built-in prompt set. Entries are immutable after construction.
class PromptLibrary {
public:
    PromptLibrary() { install_builtins(); }

    const PromptTemplate& get(const std::string& name) const {
        auto it = templates_.find(name);
        if (it == templates_.end()) throw TemplateError("unknown template '" + name + "'");
        return it->second;
    }

    bool has(const std::string& name) const { return templates_.count(name) != 0; }

    void add(PromptTemplate tmpl) { templates_[tmpl.name] = std::move(tmpl); }

    const std::map<std::string, PromptTemplate>& all() const { return templates_; }

private:
    void install_builtins() {
        add({"pagination",
             "You are given a passage that is taken from a larger text (article, book, ...) and "
             "some numbered labels between the paragraphs in the passage.\n"
             "\n"
             "Numbered labels are in angle brackets. For example, if the label number is 19, it "
             "shows as ⟨19⟩ in text.\n"
             "\n"
             "Please choose a label where it is natural to break reading.\n"
             "\n"
             "The label can be a scene transition, the end of a dialogue, the end of an argument, "
             "a narrative transition, etc.\n"
             "\n"
             "Please answer with the break point label and explain.\n"
             "\n"
             "For example, if ⟨57⟩ is a good point to break, answer with \"Break point: "
             "⟨57⟩\\nBecause ...\"\n"
             "\n"
             "Passage:\n"
             "\n"
             "{passage}",
             {"passage"}});

        add({"gisting",
             "Please shorten the following passage.\n"
             "\n"
             "Just give me a shortened version. DO NOT explain your reason.\n"
             "\n"
             "Passage:\n"
             "\n"
             "{passage}",
             {"passage"}});

        add({"gisting_conditional",
             "Please shorten the following passage, keeping the information that is relevant to "
             "the task below.\n"
             "\n"
             "Just give me a shortened version. DO NOT explain your reason.\n"
             "\n"
             "Task:\n"
             "\n"
             "{task}\n"
             "\n"
             "Passage:\n"
             "\n"
             "{passage}",
             {"task", "passage"}});

        const std::string parallel_tail =
            "Please respond with which page(s) you would like to read.\n"
            "\n"
            "For example, if you only need to read Page 8, respond with \"I want to look up Page "
            "[8] to ...\"; if you would like to read Page 7 and 12, respond with \"I want to look "
            "up Page [7, 12] to ...\"; if you would like to read Page 2, 3, 7, 15 and 18, respond "
            "with \"I want to look up Page [2, 3, 7, 15, 18] to ...\".\n"
            "\n"
            "DO NOT select more pages if you don't need to.\n"
            "\n"
            "You don't need to answer the question yet.\n"
            "\n"
            "Text:\n"
            "\n"
            "{memory}\n"
            "\n"
            "Question:\n"
            "\n"
            "{question}";

        add({"lookup_parallel_mc",
             "The following text is what you remember from reading an article and a multiple "
             "choice question related to it.\n"
             "\n"
             "You may read {page_range} page(s) of the article again to refresh your memory to "
             "prepare yourself for the question.\n"
             "\n" +
                 parallel_tail,
             {"page_range", "memory", "question"}});

        // QuALITY variant (kept as a registry entry, not hard-coded logic).
        add({"lookup_parallel_mc_deep_breath",
             "The following text is what you remember from reading an article and a multiple "
             "choice question related to it.\n"
             "\n"
             "You may read {page_range} page(s) of the article again to refresh your memory to "
             "prepare yourself for the question.\n"
             "\n" +
                 parallel_tail +
                 "\n"
                 "\n"
                 "Take a deep breath and tell me: Which page(s) would you like to read again?",
             {"page_range", "memory", "question"}});

        add({"lookup_parallel_freeform",
             "The following text is what you remember from reading an article and a question "
             "related to it.\n"
             "\n"
             "You may read {page_range} page(s) of the article again to refresh your memory to "
             "prepare yourself for the question.\n"
             "\n" +
                 parallel_tail,
             {"page_range", "memory", "question"}});

        // Importance-ordered look-up for budgeted contexts.
        add({"lookup_parallel_importance",
             "The following text is what you remember from reading an article and a question "
             "related to it.\n"
             "\n"
             "You may read {page_range} page(s) of the article again to refresh your memory to "
             "prepare yourself for the question.\n"
             "\n"
             "Please respond with which page(s) you would like to read in the order of "
             "importance, beginning with the most important page number.\n"
             "\n"
             "For example, if you only need to read Page 8, respond with \"I want to look up Page "
             "[8] to ...\".\n"
             "\n"
             "If you would like to read Page 12 and 7, respond with \"I want to look up Page [12, "
             "7] to ...\".\n"
             "\n"
             "If you would like to read Page 15, 2 and 3, respond with \"I want to look up Page "
             "[15, 2, 3] to ...\".\n"
             "\n"
             "DO NOT select more pages if you don't need to.\n"
             "\n"
             "You don't need to answer the question yet.\n"
             "\n"
             "Text:\n"
             "\n"
             "{memory}\n"
             "\n"
             "Question:\n"
             "\n"
             "{question}",
             {"page_range", "memory", "question"}});

        add({"lookup_sequential",
             "The following text is what you remember from reading {document_kind}, followed by a "
             "question about it.\n"
             "\n"
             "You may read multiple pages again to refresh your memory and prepare to answer the "
             "question.\n"
             "\n"
             "Each page that you re-read can significantly improve your chance of answering the "
             "question correctly.\n"
             "\n"
             "Please specify a SINGLE page you would like to read again or say \"STOP\".\n"
             "\n"
             "To read a page again, respond with \"Page $PAGE_NUM\", replacing $PAGE_NUM with the "
             "target page number.\n"
             "\n"
             "You can only specify a SINGLE page in your response at this time.\n"
             "\n"
             "To stop, simply say \"STOP\".\n"
             "\n"
             "DO NOT answer the question in your response.\n"
             "\n"
             "Text:\n"
             "\n"
             "{memory}\n"
             "\n"
             "Pages re-read already (DO NOT ask to read them again):\n"
             "\n"
             "{pages_read}\n"
             "\n"
             "Question:\n"
             "\n"
             "{question}\n"
             "\n"
             "Specify a SINGLE page to read again, or say STOP:",
             {"document_kind", "memory", "pages_read", "question"}});

        add({"response_freeform",
             "{context}\n"
             "\n"
             "Question:\n"
             "{question}\n"
             "\n"
             "Answer the question based on the above passage and retrieved pages. Your answer "
             "should be short and concise.",
             {"context", "question"}});

        add({"response_multiple_choice",
             "Read the following article and answer a multiple choice question.\n"
             "For example, if (C) is correct, answer with \"Answer: (C) ...\"\n"
             "\n"
             "Article:\n"
             "{context}\n"
             "\n"
             "Question:\n"
             "{question}\n"
             "{options}",
             {"context", "question", "options"}});

        add({"rater_strict",
             "After reading some text, John was given the following question about the text:\n"
             "\n"
             "{question}\n"
             "\n"
             "John's answer to the question was:\n"
             "\n"
             "{response}\n"
             "\n"
             "The ground truth answer was:\n"
             "\n"
             "{reference}\n"
             "\n"
             "Does John's answer agree with the ground truth answer? Please answer YES or NO.",
             {"question", "response", "reference"}});

        add({"rater_permissive",
             "After reading some text, John was given the following question about the text:\n"
             "\n"
             "{question}\n"
             "\n"
             "John's answer to the question was:\n"
             "\n"
             "{response}\n"
             "\n"
             "The ground truth answer was:\n"
             "\n"
             "{reference}\n"
             "\n"
             "Does John's answer agree with the ground truth answer? Please answer \"Yes\", "
             "\"Yes, partially\", or \"No\".\n"
             "If John's response has any overlap with the ground truth answer, answer \"Yes, "
             "partially\".\n"
             "If John's response contains the ground truth answer, answer \"Yes\".\n"
             "If John's response is more specific than the ground truth answer, answer \"Yes\".",
             {"question", "response", "reference"}});

        add({"page_merge",
             "Given Page 1 and Page 2, please tell me whether Page 2 starts a new "
             "chapter/section/book that is different from what's in Page 1.\n"
             "\n"
             "Please answer with yes, no, or not sure.\n"
             "\n"
             "Page 1:\n"
             "\n"
             "{previous_page}\n"
             "\n"
             "Page 2:\n"
             "\n"
             "{current_page}",
             {"previous_page", "current_page"}});
    }

    std::map<std::string, PromptTemplate> templates_;
};

inline const PromptLibrary& default_prompts() {
    static const PromptLibrary library;
    return library;
}

}  // namespace readagent
