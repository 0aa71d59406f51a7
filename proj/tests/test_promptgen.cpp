// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cdrbench/promptgen.hpp"
#include "fixture_instance.hpp"

using namespace cdrbench;
using namespace cdrbench::promptgen;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing file: " << path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kRoot = CDRBENCH_SOURCE_DIR;

PromptLibrary library() { return PromptLibrary::load(kRoot + "/templates"); }

}  // namespace

TEST_CASE("every variant renders byte-identically to its golden file") {
    const auto lib = library();
    const auto inst = testfix::books_movies_instance();
    for (const auto& variant : all_variants()) {
        std::string id = variant.id();  // with-rating-high -> with_rating_high
        for (auto& c : id)
            if (c == '-') c = '_';
        const std::string path = kRoot + "/tests/golden/prompt_" + id + ".txt";

        const auto rendered = lib.render(inst, variant, "Books", "Movies");
        const auto expected = read_file(path);
        INFO("variant " << variant.id());
        CHECK(rendered.text == expected);
        CHECK(rendered.variant == variant);
        CHECK(rendered.user_id == inst.user_id);
        CHECK(rendered.item_id == inst.positive_item_id);
        CHECK(rendered.token_estimate == (rendered.text.size() + 3) / 4);
    }
}

TEST_CASE("medium context hides the domain names everywhere") {
    const auto lib = library();
    const auto inst = testfix::books_movies_instance();
    for (const auto& variant : all_variants()) {
        if (variant.context != Context::medium) continue;
        const auto rendered = lib.render(inst, variant, "Books", "Movies");
        CHECK(rendered.text.find("Books") == std::string::npos);
        CHECK(rendered.text.find("Movies") == std::string::npos);
        CHECK(rendered.text.find(kMediumSourceName) != std::string::npos);
        CHECK(rendered.text.find(kMediumTargetName) != std::string::npos);
        // the intro paragraph is gone
        CHECK(rendered.text.find("You are a cross-domain recommender") == std::string::npos);
        CHECK(rendered.text.rfind("Here is a user's rating history", 0) == 0);
    }
}

TEST_CASE("domain names in item titles survive medium context") {
    const auto lib = library();
    auto inst = testfix::books_movies_instance();
    inst.source_history[0].title = "Books of Blood";  // title contains the domain name
    PromptVariant variant = PromptVariant::parse("with", "rating", "medium");
    const auto rendered = lib.render(inst, variant, "Books", "Movies");
    CHECK(rendered.text.find("Books of Blood") != std::string::npos);
    // slot-level substitution: the structural mentions still say Domain A
    CHECK(rendered.text.find("history in the Domain A domain") != std::string::npos);
}

TEST_CASE("degrade_to_medium equals a direct medium render and is idempotent") {
    const auto lib = library();
    const auto inst = testfix::books_movies_instance();
    for (const auto& variant : all_variants()) {
        if (variant.context != Context::high) continue;
        PromptVariant medium = variant;
        medium.context = Context::medium;
        const auto direct = lib.render(inst, medium, "Books", "Movies");
        const auto degraded = lib.degrade_to_medium(inst, variant, "Books", "Movies");
        CHECK(degraded.text == direct.text);
        const auto twice = lib.degrade_to_medium(inst, medium, "Books", "Movies");
        CHECK(twice.text == direct.text);
    }
}

TEST_CASE("ratings format as integers when integral") {
    CHECK(format_rating(5.0) == "5");
    CHECK(format_rating(1.0) == "1");
    CHECK(format_rating(4.5) == "4.5");
    CHECK(format_rating(2.5) == "2.5");
}

TEST_CASE("ranking prompts over the character budget are rejected") {
    const auto lib = library();
    const auto inst = testfix::books_movies_instance();
    const PromptVariant ranking = PromptVariant::parse("with", "ranking", "high");
    CHECK_THROWS_AS(lib.render(inst, ranking, "Books", "Movies", 500), BudgetError);
    // generous budget is fine
    CHECK_NOTHROW(lib.render(inst, ranking, "Books", "Movies", 100000));
}

TEST_CASE("variant ids parse back to themselves") {
    CHECK(all_variants().size() == 8);
    for (const auto& v : all_variants()) {
        const std::string id = v.id();
        const auto a = id.find('-');
        const auto b = id.rfind('-');
        const auto back =
            PromptVariant::parse(id.substr(0, a), id.substr(a + 1, b - a - 1), id.substr(b + 1));
        CHECK(back == v);
    }
    CHECK_THROWS(PromptVariant::parse("sideways", "rating", "high"));
}

TEST_CASE("unknown template slots are an error") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "cdrbench-badtmpl";
    fs::create_directories(dir);
    for (const char* name : {"with_injection_rating.tmpl", "with_injection_ranking.tmpl",
                             "no_injection_rating.tmpl", "no_injection_ranking.tmpl"}) {
        std::ofstream out(dir / name);
        out << "Hello {{nonexistent_slot}}\n";
    }
    const auto lib = PromptLibrary::load(dir.string());
    const auto inst = testfix::books_movies_instance();
    CHECK_THROWS_AS(lib.render(inst, PromptVariant{}, "A", "B"), TemplateError);
    fs::remove_all(dir);

    CHECK_THROWS_AS(PromptLibrary::load("/nonexistent/cdrbench/templates"), TemplateError);
}
