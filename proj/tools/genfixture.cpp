// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Regenerates the synthetic two-domain corpus under tests/fixture/ and,
// on request, the golden report files under tests/golden/. Everything is
// derived from fixed seeds, so reruns are byte-identical; goldens only
// change when the pipeline itself changes behavior.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdrbench/rng.hpp"
#include "cdrbench/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using cdrbench::rng::Engine;

namespace {

const std::vector<std::string> kAdjectives = {
    "Silent", "Golden",   "Broken", "Hidden", "Distant", "Crimson",
    "Winter", "Ancient",  "Electric", "Lonely", "Savage", "Gentle"};
const std::vector<std::string> kNouns = {
    "River",  "Garden", "Empire",  "Shadow",  "Harbor",  "Mountain",
    "Letter", "Voyage", "Promise", "Kingdom", "Orchard", "Signal"};

// index-derived so every title within a domain is unique
std::string book_title(std::size_t k) {
    const std::string& a = kAdjectives[k % 12];
    const std::string& n = kNouns[(k / 12 + k) % 12];
    switch (k % 4) {
        case 0: return "The " + a + " " + n + ": A Novel";
        case 1: return a + " " + n;
        case 2: return a + " " + n + ", Book One";
        default: return "The " + a + " " + n;
    }
}

std::string movie_title(std::size_t k) {
    const std::string& a = kAdjectives[k % 12];
    const std::string& n = kNouns[(k / 12 + k) % 12];
    switch (k % 5) {
        case 0: return a + " " + n;
        case 1: return "The " + a + " " + n + " VHS";
        case 2: return a + " " + n + ": Season 1";
        case 3: return "The " + n + " Returns, Vol. " + std::to_string(k / 5 + 1);
        default: return a + " " + n + " (Director's Cut)";
    }
}

std::string user_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "u%04zu", i);
    return buf;
}

std::string item_id(char prefix, std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%04zu", prefix, k + 1);
    return buf;
}

struct Review {
    std::string user;
    std::string item;
    double rating;
    std::int64_t ts;
};

void write_reviews(const std::string& path, const std::vector<Review>& reviews,
                   const std::vector<std::string>& extra_lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (const auto& r : reviews) {
        out << json{{"reviewerID", r.user},
                    {"asin", r.item},
                    {"overall", r.rating},
                    {"unixReviewTime", r.ts}}
                   .dump()
            << "\n";
    }
    for (const auto& line : extra_lines) out << line << "\n";
}

void write_metadata(const std::string& path, char prefix, std::size_t count,
                    std::string (*title_of)(std::size_t), const std::string& skip_id,
                    const std::vector<json>& extras) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    for (std::size_t k = 0; k < count; ++k) {
        const std::string id = item_id(prefix, k);
        if (id == skip_id) continue;  //ornery catalog: one item has no title anywhere
        out << json{{"asin", id}, {"title", title_of(k)}}.dump() << "\n";
    }
    for (const auto& e : extras) out << e.dump() << "\n";
}

json fixture_run_config() {
    json cells = json::array();
    for (const char* injection : {"with", "no"})
        for (const char* task : {"rating", "ranking"})
            for (const char* context : {"high", "medium"})
                cells.push_back(json{
                    {"model", {{"backend", "mock"}, {"model", "mock"}}},
                    {"variant",
                     {{"injection", injection}, {"task", task}, {"context", context}}}});
    return json{
        {"pairs",
         {{{"name", "Fixture Pair"},
           {"source",
            {{"domain", "Books"},
             {"reviews", "tests/fixture/books_reviews.jsonl"},
             {"metadata", "tests/fixture/books_metadata.jsonl"}}},
           {"target",
            {{"domain", "Movies"},
             {"reviews", "tests/fixture/movies_reviews.jsonl"},
             {"metadata", "tests/fixture/movies_metadata.jsonl"}}}}}},
        {"split",
         {{"seed", 42}, {"test_size", 100}, {"history_cap", 10}, {"negatives_per_positive", 20}}},
        {"cells", cells},
        {"baselines",
         {{"enabled", true},
          {"dimension", 8},
          {"regularization", 0.02},
          {"learning_rate", 0.02},
          {"epochs", 15},
          {"seed", 13},
          {"mapper_hidden_dim", 16},
          {"mapper_learning_rate", 0.01},
          {"mapper_epochs", 60},
          {"mapper_seed", 13}}},
        {"label_map", "prompt_anchored"},
        {"output_dir", "out-fixture"},
        {"templates_dir", "templates"},
        {"similarity_threshold", 0.85},
        {"gateway", {{"max_in_flight", 4}, {"requests_per_minute", 0.0}}}};
}

void generate_corpus(const std::string& fixture_dir) {
    Engine eng(cdrbench::rng::derive_seed(2026, "fixture"));
    std::vector<Review> books, movies;
    const std::int64_t base_ts = 1500000000;

    for (std::size_t i = 1; i <= 140; ++i) {
        const std::string user = user_id(i);
        std::size_t n_src, n_tgt;
        if (i <= 110) {
            n_src = 1 + cdrbench::rng::uniform_below(eng, 8);   // 1..8
            n_tgt = 3 + cdrbench::rng::uniform_below(eng, 7);   // 3..9
        } else if (i <= 125) {
            n_src = 1 + cdrbench::rng::uniform_below(eng, 6);   // source-heavy, thin target
            n_tgt = cdrbench::rng::uniform_below(eng, 2);       // 0..1
        } else {
            n_src = 2 + cdrbench::rng::uniform_below(eng, 5);   // source only
            n_tgt = 0;
        }
        for (std::size_t k : cdrbench::rng::sample_indices(eng, 60, n_src)) {
            books.push_back({user, item_id('B', k),
                             double(1 + cdrbench::rng::uniform_below(eng, 5)),
                             base_ts + std::int64_t(cdrbench::rng::uniform_below(eng, 400)) *
                                           86400});
        }
        for (std::size_t k : cdrbench::rng::sample_indices(eng, 60, n_tgt)) {
            movies.push_back({user, item_id('M', k),
                              double(1 + cdrbench::rng::uniform_below(eng, 5)),
                              base_ts + std::int64_t(cdrbench::rng::uniform_below(eng, 400)) *
                                            86400});
        }
    }

    // deliberate dirt: unparseable line, bad rating, missing fields, and a
    // duplicate of the first review with a later timestamp (which wins)
    std::vector<std::string> dirt_books = {
        "this line is not json",
        json{{"reviewerID", "u9999"}, {"asin", "B0001"}, {"overall", 7.0},
             {"unixReviewTime", 1}}
            .dump(),
        json{{"reviewerID", "u9998"}}.dump(),
        json{{"reviewerID", books[0].user},
             {"asin", books[0].item},
             {"overall", books[0].rating},
             {"unixReviewTime", books[0].ts + 1}}
            .dump()};
    std::vector<std::string> dirt_movies = {
        json{{"reviewerID", "u9999"}, {"asin", "M0002"}, {"overall", 0.0},
             {"unixReviewTime", 5}}
            .dump()};

    write_reviews(fixture_dir + "/books_reviews.jsonl", books, dirt_books);
    write_reviews(fixture_dir + "/movies_reviews.jsonl", movies, dirt_movies);

    // books: every item titled, plus a duplicate id (last title wins) and a
    // catalog-only item nobody rated
    write_metadata(fixture_dir + "/books_metadata.jsonl", 'B', 60, book_title, "",
                   {json{{"asin", "B0001"}, {"title", book_title(0)}},
                    json{{"asin", "B0098"}, {"title", "Catalog Only, Book Zero"}}});
    // movies: M0060 has no title (its interactions get dropped); two
    // catalog-only items are eligible negatives
    write_metadata(fixture_dir + "/movies_metadata.jsonl", 'M', 60, movie_title,
                   "M0060",
                   {json{{"asin", "M0098"}, {"title", "Catalog Only Kingdom"}},
                    json{{"asin", "M0099"}, {"title", "Catalog Only Harbor VHS"}}});

    std::ofstream cfg(fixture_dir + "/run_config.json", std::ios::binary | std::ios::trunc);
    cfg << fixture_run_config().dump(2) << "\n";
}

int emit_golden(const std::string& root) {
    auto cfg = cdrbench::runner::RunConfig::load(root + "/tests/fixture/run_config.json");
    // config paths are repo-root relative
    fs::current_path(root);
    const std::string out_dir = "out-fixture-golden";
    fs::remove_all(out_dir);
    cfg.output_dir = out_dir;
    const auto res = cdrbench::runner::run_experiment(cfg);
    if (res.exit_code != cdrbench::runner::kExitComplete) {
        std::cerr << "fixture run did not complete cleanly (exit " << res.exit_code << ")\n";
        return 1;
    }
    fs::create_directories(root + "/tests/golden");
    fs::copy_file(out_dir + "/reports/report.json", root + "/tests/golden/fixture_report.json",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(out_dir + "/reports/report.txt", root + "/tests/golden/fixture_report.txt",
                  fs::copy_options::overwrite_existing);
    fs::remove_all(out_dir);
    std::cout << "golden report refreshed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"regenerate the test fixture corpus and golden reports"};
    std::string root = ".";
    bool golden = false;
    app.add_option("--root", root, "repository root");
    app.add_flag("--emit-golden", golden, "run the pipeline and refresh tests/golden/");
    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(root + "/tests/fixture");
        generate_corpus(root + "/tests/fixture");
        std::cout << "fixture corpus written to " << root << "/tests/fixture\n";
        if (golden) return emit_golden(root);
    } catch (const std::exception& e) {
        std::cerr << "genfixture: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
