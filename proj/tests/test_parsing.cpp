#include <catch2/catch.hpp>

#include <random>

#include "readagent/parsing.hpp"

using namespace readagent;

TEST_CASE("parse_break_point finds the first valid bracketed label", "[parsing]") {
    CHECK(parse_break_point("Break point: ⟨57⟩\nBecause ...", {55, 56, 57}) == 57);
    CHECK(parse_break_point("⟨3⟩", {3}) == 3);
    // first *valid* match wins
    CHECK(parse_break_point("I choose ⟨9⟩ then ⟨4⟩", {4}) == 4);
    // ASCII brackets are accepted too
    CHECK(parse_break_point("Break point: <12>", {12}) == 12);
    CHECK(parse_break_point("Break point: ⟨ 21 ⟩ maybe", {21}) == 21);
}

TEST_CASE("parse_break_point rejects invalid or absent labels", "[parsing]") {
    CHECK_FALSE(parse_break_point("no labels here", {1, 2}).has_value());
    CHECK_FALSE(parse_break_point("⟨99⟩", {1, 2}).has_value());
    CHECK_FALSE(parse_break_point("angle < but no number >", {1}).has_value());
    CHECK_FALSE(parse_break_point("", {1}).has_value());
}

TEST_CASE("parse_page_list extracts the first bracketed integer list", "[parsing]") {
    CHECK(parse_page_list("I want to look up Page [7, 12] to refresh my memory.") ==
          std::vector<int>{7, 12});
    CHECK(parse_page_list("I don't need to look up any pages.").empty());
    CHECK(parse_page_list("Page [3, 3, 1]") == std::vector<int>{3, 1});
    CHECK(parse_page_list("[8]") == std::vector<int>{8});
    CHECK(parse_page_list("see [note] then Page [2, 5]") == std::vector<int>{2, 5});
    CHECK(parse_page_list("empty [] brackets").empty());
    CHECK(parse_page_list("").empty());
}

TEST_CASE("parse_page_list round-trips format_page_list", "[parsing]") {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::set<int> unique;
        int n = static_cast<int>(rng() % 8);
        while (static_cast<int>(unique.size()) < n) unique.insert(static_cast<int>(rng() % 50));
        std::vector<int> pages(unique.begin(), unique.end());
        std::shuffle(pages.begin(), pages.end(), rng);
        CHECK(parse_page_list(format_page_list(pages)) == pages);
    }
}

TEST_CASE("parse_sequential_choice handles STOP, Page N, and garbage", "[parsing]") {
    auto stop = parse_sequential_choice("STOP");
    REQUIRE(stop.has_value());
    CHECK(std::holds_alternative<Stop>(*stop));

    auto page = parse_sequential_choice("Page 4");
    REQUIRE(page.has_value());
    REQUIRE(std::holds_alternative<PageRequest>(*page));
    CHECK(std::get<PageRequest>(*page).page == 4);

    auto lower = parse_sequential_choice("page 12, please");
    REQUIRE(lower.has_value());
    CHECK(std::get<PageRequest>(*lower).page == 12);

    CHECK_FALSE(parse_sequential_choice("I cannot decide.").has_value());

    // stop keyword wins over a page mention
    auto both = parse_sequential_choice("Page 4... actually, STOP.");
    REQUIRE(both.has_value());
    CHECK(std::holds_alternative<Stop>(*both));
}

TEST_CASE("parse_mc_answer returns the first in-range option letter", "[parsing]") {
    CHECK(parse_mc_answer("Answer: (C) because the text says so", 4) == 2);
    CHECK(parse_mc_answer("(A)", 4) == 0);
    CHECK_FALSE(parse_mc_answer("(E)", 4).has_value());
    CHECK(parse_mc_answer("(Z) is wrong, I mean (B)", 4) == 1);
    CHECK(parse_mc_answer("answer: (c).", 4) == 2);
    CHECK(parse_mc_answer("( D )", 4) == 3);
    CHECK_FALSE(parse_mc_answer("no letter here", 4).has_value());
    CHECK_FALSE(parse_mc_answer("(1)", 4).has_value());
    // option count bounds
    CHECK_FALSE(parse_mc_answer("(A)", 1).has_value());
    CHECK_FALSE(parse_mc_answer("(A)", 27).has_value());
}

TEST_CASE("parse_rating matches the leading answer token", "[parsing]") {
    CHECK(parse_rating("YES", RaterMode::strict).verdict == RatingVerdict::yes);
    CHECK(parse_rating("YES", RaterMode::strict).recognized);
    CHECK(parse_rating("No.", RaterMode::strict).verdict == RatingVerdict::no);

    auto partial = parse_rating("Yes, partially — some overlap.", RaterMode::permissive);
    CHECK(partial.verdict == RatingVerdict::yes_partially);
    CHECK(partial.recognized);

    auto nope = parse_rating("Nope", RaterMode::permissive);
    CHECK(nope.verdict == RatingVerdict::no);
    CHECK_FALSE(nope.recognized);

    // "yes, partially" is checked before "yes"
    CHECK(parse_rating("yes, partially", RaterMode::permissive).verdict ==
          RatingVerdict::yes_partially);
    CHECK(parse_rating("yes, partially", RaterMode::strict).verdict == RatingVerdict::yes);
    CHECK(parse_rating("  yes indeed", RaterMode::permissive).verdict == RatingVerdict::yes);
    CHECK_FALSE(parse_rating("", RaterMode::strict).recognized);
}

TEST_CASE("parsers are total over noisy strings", "[parsing]") {
    std::mt19937 rng(17);
    const std::string alphabet = "ab [](){}<>⟨⟩,.0123456789PageSTOPyesno\n";
    for (int trial = 0; trial < 500; ++trial) {
        std::string noise;
        int n = static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) noise += alphabet[rng() % alphabet.size()];
        CHECK_NOTHROW(parse_break_point(noise, {1, 2, 3}));
        CHECK_NOTHROW(parse_page_list(noise));
        CHECK_NOTHROW(parse_sequential_choice(noise));
        CHECK_NOTHROW(parse_mc_answer(noise, 4));
        CHECK_NOTHROW(parse_rating(noise, RaterMode::permissive));
    }
}
