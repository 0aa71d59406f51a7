// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "cdrbench/rng.hpp"
#include "cdrbench/sampler.hpp"

using namespace cdrbench;
using namespace cdrbench::sampler;

namespace {

// A paired corpus with enough texture for property scans: `n_users` users
// who all overlap, 40 items per domain, deterministic pseudo-random
// ratings and timestamps (including deliberate timestamp ties).
corpus::PairedCorpus make_corpus(std::size_t n_users, std::uint64_t seed) {
    corpus::DomainDataset src, tgt;
    src.domain = "Books";
    tgt.domain = "Movies";
    for (int i = 0; i < 40; ++i) {
        src.catalog["b" + std::to_string(i)] = "Book Title " + std::to_string(i);
        tgt.catalog["m" + std::to_string(i)] = "Movie Title " + std::to_string(i);
    }
    rng::Engine eng(seed);
    for (std::size_t u = 0; u < n_users; ++u) {
        const std::string user = "user" + std::to_string(u);
        const std::size_t n_src = 1 + rng::uniform_below(eng, 6);
        const std::size_t n_tgt = 2 + rng::uniform_below(eng, 8);
        for (const auto k : rng::sample_indices(eng, 40, n_src))
            src.interactions.push_back({user, "b" + std::to_string(k),
                                        double(1 + rng::uniform_below(eng, 5)),
                                        std::int64_t(rng::uniform_below(eng, 50)), "Books"});
        for (const auto k : rng::sample_indices(eng, 40, n_tgt))
            tgt.interactions.push_back({user, "m" + std::to_string(k),
                                        double(1 + rng::uniform_below(eng, 5)),
                                        std::int64_t(rng::uniform_below(eng, 50)), "Movies"});
    }
    return corpus::build_pair(src, tgt, "scan");
}

}  // namespace

TEST_CASE("split withholds exactly the most recent target interaction per eligible user") {
    corpus::DomainDataset src, tgt;
    src.domain = "A";
    tgt.domain = "B";
    src.catalog["s1"] = "S One";
    for (const char* i : {"t1", "t2", "t3"}) tgt.catalog[i] = std::string("T ") + i;

    src.interactions.push_back({"u1", "s1", 5.0, 1, "A"});
    src.interactions.push_back({"u2", "s1", 4.0, 1, "A"});
    src.interactions.push_back({"u3", "s1", 3.0, 1, "A"});
    // u1: clear latest (t2 at 30)
    tgt.interactions.push_back({"u1", "t1", 5.0, 10, "B"});
    tgt.interactions.push_back({"u1", "t2", 4.0, 30, "B"});
    // u2: timestamp tie, smaller item id wins (t1)
    tgt.interactions.push_back({"u2", "t2", 2.0, 20, "B"});
    tgt.interactions.push_back({"u2", "t1", 3.0, 20, "B"});
    // u3: only one target interaction, not eligible
    tgt.interactions.push_back({"u3", "t3", 1.0, 99, "B"});

    const auto pair = corpus::build_pair(src, tgt, "p");
    const auto result = split(pair, SplitConfig{});

    REQUIRE(result.test_pool.size() == 2);
    CHECK(result.test_pool[0].user_id == "u1");
    CHECK(result.test_pool[0].item_id == "t2");
    CHECK(result.test_pool[1].user_id == "u2");
    CHECK(result.test_pool[1].item_id == "t1");

    // withheld interactions are absent from train; everything else is there
    for (const auto& it : result.train.target.interactions) {
        CHECK_FALSE((it.user_id == "u1" && it.item_id == "t2"));
        CHECK_FALSE((it.user_id == "u2" && it.item_id == "t1"));
    }
    CHECK(result.train.target.interactions.size() == 3);
    CHECK(result.train.source.interactions.size() == 3);
}

TEST_CASE("split throws when no user is eligible") {
    corpus::DomainDataset src, tgt;
    src.domain = "A";
    tgt.domain = "B";
    src.catalog["s1"] = "S";
    tgt.catalog["t1"] = "T";
    src.interactions.push_back({"u1", "s1", 5.0, 1, "A"});
    tgt.interactions.push_back({"u1", "t1", 5.0, 1, "B"});
    const auto pair = corpus::build_pair(src, tgt, "p");
    CHECK_THROWS_AS(split(pair, SplitConfig{}), SamplerError);
}

TEST_CASE("select_history is most-recent-first, capped, and can exclude an item") {
    corpus::DomainDataset ds;
    ds.domain = "B";
    for (int i = 0; i < 15; ++i) {
        const std::string id = "t" + std::to_string(i);
        ds.catalog[id] = "Title " + std::to_string(i);
        ds.interactions.push_back({"u", id, double(1 + i % 5), std::int64_t(i), "B"});
    }
    ds.catalog.erase("t14");  // uncataloged interactions are skipped

    const auto hist = select_history(ds, "u", 10);
    REQUIRE(hist.size() == 10);
    CHECK(hist[0].title == "Title 13");  // t14 has no title, t13 is newest usable
    CHECK(hist[9].title == "Title 4");

    const auto excl = select_history(ds, "u", 10, "t13");
    CHECK(excl[0].title == "Title 12");
    CHECK(excl.size() == 10);

    CHECK(select_history(ds, "nobody", 10).empty());
}

TEST_CASE("sample_negatives avoids every item the user touched, anywhere") {
    const auto pair = make_corpus(30, 7);
    const std::string user = pair.target.interactions.front().user_id;
    std::set<std::string> touched;
    for (const auto& it : pair.target.interactions)
        if (it.user_id == user) touched.insert(it.item_id);

    const auto negs = sample_negatives(pair.target, user, 20, 123);
    REQUIRE(negs.has_value());
    CHECK(negs->size() == 20);
    std::set<std::string> ids;
    for (const auto& n : *negs) {
        CHECK(touched.count(n.item_id) == 0);
        CHECK(pair.target.catalog.at(n.item_id) == n.title);
        ids.insert(n.item_id);
    }
    CHECK(ids.size() == 20);  // all distinct

    // deterministic in the seed
    const auto again = sample_negatives(pair.target, user, 20, 123);
    CHECK(*again == *negs);
    const auto other = sample_negatives(pair.target, user, 20, 124);
    CHECK(*other != *negs);
}

TEST_CASE("sample_negatives reports shortage instead of padding") {
    corpus::DomainDataset tiny;
    tiny.domain = "B";
    for (int i = 0; i < 5; ++i) tiny.catalog["t" + std::to_string(i)] = "T" + std::to_string(i);
    tiny.interactions.push_back({"u", "t0", 5.0, 1, "B"});
    CHECK_FALSE(sample_negatives(tiny, "u", 20, 1).has_value());
    CHECK(sample_negatives(tiny, "u", 4, 1).has_value());
}

TEST_CASE("build_candidates shuffles the positive into a known position") {
    std::vector<NegativeItem> negs;
    for (int i = 0; i < 20; ++i) negs.push_back({"n" + std::to_string(i), "Neg " + std::to_string(i)});
    std::size_t pos = 999;
    const auto cands = build_candidates("The Positive", negs, 77, &pos);
    REQUIRE(cands.size() == 21);
    REQUIRE(pos < 21);
    CHECK(cands[pos] == "The Positive");
    CHECK(std::count(cands.begin(), cands.end(), "The Positive") == 1);

    std::size_t pos2 = 0;
    CHECK(build_candidates("The Positive", negs, 77, &pos2) == cands);
    CHECK(pos2 == pos);
}

TEST_CASE("eval set construction is deterministic and self-consistent") {
    const auto pair = make_corpus(80, 11);
    SplitConfig cfg;
    cfg.test_size = 50;
    const auto sr = split(pair, cfg);
    SampleStats stats;
    const auto instances = sample_eval_set(pair, sr, cfg, &stats);

    CHECK(stats.pool_size >= instances.size());
    CHECK(instances.size() <= 50);
    CHECK(instances.size() + stats.skipped_negative_shortage +
              stats.skipped_duplicate_titles ==
          std::min<std::size_t>(50, stats.pool_size));

    const auto instances2 = sample_eval_set(pair, sr, cfg, nullptr);
    CHECK(instances2 == instances);

    SplitConfig other = cfg;
    other.seed = 43;
    const auto sr2 = split(pair, other);
    const auto instances3 = sample_eval_set(pair, sr2, other, nullptr);
    CHECK(instances3 != instances);
}

TEST_CASE("instance construction properties hold across a thousand cases") {
    // several corpora x users ~ >1000 sampled instances, every invariant
    // checked on each one
    std::size_t total = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto pair = make_corpus(120, seed);
        SplitConfig cfg;
        cfg.seed = seed * 1000 + 7;
        cfg.test_size = 120;
        const auto sr = split(pair, cfg);

        std::set<std::pair<std::string, std::string>> train_target;
        for (const auto& it : sr.train.target.interactions)
            train_target.insert({it.user_id, it.item_id});

        const auto instances = sample_eval_set(pair, sr, cfg, nullptr);
        total += instances.size();
        std::set<std::string> users_seen;
        for (const auto& inst : instances) {
            CHECK(users_seen.insert(inst.user_id).second);  // one instance per user

            // the positive never leaks into its own training data
            CHECK(train_target.count({inst.user_id, inst.positive_item_id}) == 0);
            CHECK(pair.target.catalog.at(inst.positive_item_id) == inst.positive_title);

            // candidate list = negatives + positive, exactly once each
            REQUIRE(inst.candidates.size() == inst.negatives.size() + 1);
            REQUIRE(inst.positive_position < inst.candidates.size());
            CHECK(inst.candidates[inst.positive_position] == inst.positive_title);
            std::multiset<std::string> expected{inst.positive_title};
            for (const auto& n : inst.negatives) expected.insert(n.title);
            CHECK(std::multiset<std::string>(inst.candidates.begin(), inst.candidates.end()) ==
                  expected);
            // exact-title uniqueness across the whole list
            CHECK(std::set<std::string>(inst.candidates.begin(), inst.candidates.end()).size() ==
                  inst.candidates.size());

            // histories respect the cap and never contain the positive
            CHECK(inst.source_history.size() <= cfg.history_cap);
            CHECK(inst.target_history.size() <= cfg.history_cap);
            for (const auto& h : inst.target_history) CHECK(h.title != inst.positive_title);

            // negatives avoid everything the user touched in the full corpus
            std::set<std::string> touched;
            for (const auto& it : pair.target.interactions)
                if (it.user_id == inst.user_id) touched.insert(it.item_id);
            for (const auto& n : inst.negatives) CHECK(touched.count(n.item_id) == 0);

            CHECK(inst.seed_trace != 0);
        }
    }
    CHECK(total >= 1000);
}

TEST_CASE("eval set persistence roundtrips") {
    const auto pair = make_corpus(40, 3);
    SplitConfig cfg;
    cfg.test_size = 25;
    const auto sr = split(pair, cfg);
    const auto instances = sample_eval_set(pair, sr, cfg, nullptr);
    REQUIRE(!instances.empty());

    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() /
                      ("cdrbench-evalset-" + std::to_string(::getpid()) + ".jsonl");
    save_eval_set(instances, path.string());
    const auto loaded = load_eval_set(path.string());
    fs::remove(path);
    CHECK(loaded == instances);
}
