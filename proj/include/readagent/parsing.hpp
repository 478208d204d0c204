#pragma once

#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

namespace readagent {

// All parsers are total: they return a value or a typed empty result,
// never abort. They scan for the first well-formed occurrence instead of
// anchoring to the whole string.

namespace detail {

inline bool starts_with_at(std::string_view text, std::size_t pos, std::string_view prefix) {
    return text.size() - pos >= prefix.size() && text.compare(pos, prefix.size(), prefix) == 0;
}

/// Parses a digit run at `pos`, advancing it. Nullopt if no digit or overflow.
inline std::optional<int> read_uint(std::string_view text, std::size_t& pos) {
    if (pos >= text.size() || std::isdigit(static_cast<unsigned char>(text[pos])) == 0) {
        return std::nullopt;
    }
    long long value = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])) != 0) {
        value = value * 10 + (text[pos] - '0');
        if (value > 1'000'000'000LL) return std::nullopt;
        ++pos;
    }
    return static_cast<int>(value);
}

inline void skip_spaces(std::string_view text, std::size_t& pos) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
}

inline std::string lowercase(std::string_view text) {
    std::string out(text);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

constexpr std::string_view kOpenAngleUtf8 = "⟨";   // mathematical left angle bracket
constexpr std::string_view kCloseAngleUtf8 = "⟩";

}  // namespace detail

/// First angle-bracketed integer that is a member of `valid_labels`.
/// Accepts both ASCII <57> and the prompt's U+27E8/U+27E9 brackets.
inline std::optional<int> parse_break_point(std::string_view response,
                                            const std::set<int>& valid_labels) {
    std::size_t pos = 0;
    while (pos < response.size()) {
        std::size_t open_len = 0;
        if (response[pos] == '<') {
            open_len = 1;
        } else if (detail::starts_with_at(response, pos, detail::kOpenAngleUtf8)) {
            open_len = detail::kOpenAngleUtf8.size();
        }
        if (open_len == 0) {
            ++pos;
            continue;
        }
        std::size_t cursor = pos + open_len;
        detail::skip_spaces(response, cursor);
        auto value = detail::read_uint(response, cursor);
        if (value) {
            detail::skip_spaces(response, cursor);
            bool closed = cursor < response.size() &&
                          (response[cursor] == '>' ||
                           detail::starts_with_at(response, cursor, detail::kCloseAngleUtf8));
            if (closed && valid_labels.count(*value) != 0) return *value;
        }
        pos += open_len;
    }
    return std::nullopt;
}

/// Integers inside the first square-bracketed group that contains any,
/// in order, duplicates dropped keeping the first occurrence. No such
/// group means zero look-ups.
inline std::vector<int> parse_page_list(std::string_view response) {
    std::size_t pos = 0;
    while ((pos = response.find('[', pos)) != std::string_view::npos) {
        std::size_t close = response.find(']', pos + 1);
        if (close == std::string_view::npos) break;
        std::vector<int> values;
        std::unordered_set<int> seen;
        std::size_t cursor = pos + 1;
        while (cursor < close) {
            if (std::isdigit(static_cast<unsigned char>(response[cursor])) != 0) {
                auto value = detail::read_uint(response, cursor);
                if (value && seen.insert(*value).second) values.push_back(*value);
            } else {
                ++cursor;
            }
        }
        if (!values.empty()) return values;
        pos = close + 1;
    }
    return {};
}

/// Round-trips through parse_page_list for duplicate-free lists.
inline std::string format_page_list(const std::vector<int>& pages) {
    std::string out = "[";
    for (std::size_t i = 0; i < pages.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(pages[i]);
    }
    out += "]";
    return out;
}

struct PageRequest {
    int page = 0;
};
struct Stop {};
using SequentialChoice = std::variant<PageRequest, Stop>;

/// Stop wins when the response contains the stop keyword (case-insensitive);
/// otherwise the first integer following the word "page".
inline std::optional<SequentialChoice> parse_sequential_choice(std::string_view response) {
    const std::string lower = detail::lowercase(response);
    if (lower.find("stop") != std::string::npos) return SequentialChoice{Stop{}};
    std::size_t pos = 0;
    while ((pos = lower.find("page", pos)) != std::string::npos) {
        std::size_t cursor = pos + 4;
        detail::skip_spaces(lower, cursor);
        if (auto value = detail::read_uint(lower, cursor)) {
            return SequentialChoice{PageRequest{*value}};
        }
        pos += 4;
    }
    return std::nullopt;
}

/// First parenthesized option letter whose index is below `n_options`,
/// as a 0-based index. Case-insensitive; spaces inside parens tolerated.
inline std::optional<int> parse_mc_answer(std::string_view response, int n_options) {
    if (n_options < 2 || n_options > 26) return std::nullopt;
    std::size_t pos = 0;
    while ((pos = response.find('(', pos)) != std::string_view::npos) {
        std::size_t cursor = pos + 1;
        detail::skip_spaces(response, cursor);
        if (cursor < response.size() &&
            std::isalpha(static_cast<unsigned char>(response[cursor])) != 0) {
            int index = std::toupper(static_cast<unsigned char>(response[cursor])) - 'A';
            std::size_t after = cursor + 1;
            detail::skip_spaces(response, after);
            if (after < response.size() && response[after] == ')' && index < n_options) {
                return index;
            }
        }
        ++pos;
    }
    return std::nullopt;
}

enum class RaterMode { strict, permissive };

enum class RatingVerdict { yes, yes_partially, no };

struct ParsedRating {
    RatingVerdict verdict = RatingVerdict::no;
    bool recognized = false;  // false = fallback "no", flagged in the record
};

/// Matches the leading answer token case-insensitively; "yes, partially"
/// is checked before "yes". Unrecognized responses fall back to no.
inline ParsedRating parse_rating(std::string_view response, RaterMode mode) {
    std::string lower = detail::lowercase(response);
    std::size_t start = 0;
    while (start < lower.size() && std::isspace(static_cast<unsigned char>(lower[start])) != 0) {
        ++start;
    }
    lower.erase(0, start);

    if (mode == RaterMode::permissive && (detail::starts_with_at(lower, 0, "yes, partially") ||
                                          detail::starts_with_at(lower, 0, "yes partially"))) {
        return {RatingVerdict::yes_partially, true};
    }
    std::size_t end = 0;
    while (end < lower.size() && std::isalpha(static_cast<unsigned char>(lower[end])) != 0) ++end;
    std::string_view token = std::string_view(lower).substr(0, end);
    if (token == "yes") return {RatingVerdict::yes, true};
    if (token == "no") return {RatingVerdict::no, true};
    return {RatingVerdict::no, false};
}

}  // namespace readagent
