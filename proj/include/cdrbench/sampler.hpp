// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation-set construction: leave-latest-out split of a paired corpus,
// per-user history selection, negative sampling, and candidate shuffling.
// Every random choice derives from SplitConfig::seed so a (corpus, config)
// pair always yields the same instances.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cdrbench/corpus.hpp"

#include "json.hpp"

namespace cdrbench::sampler {

using nlohmann::json;

class SamplerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SplitConfig {
    std::uint64_t seed = 42;
    std::size_t test_size = 1000;       // instances per pair; pool is clamped
    std::size_t history_cap = 10;       // max items per domain history
    std::size_t negatives_per_positive = 20;

    void validate() const;
};

struct HistoryEntry {
    std::string title;
    double rating = 0.0;

    bool operator==(const HistoryEntry&) const = default;
};

struct NegativeItem {
    std::string item_id;
    std::string title;

    bool operator==(const NegativeItem&) const = default;
};

// One test case: a held-out positive, per-domain histories drawn from the
// training split, sampled negatives, and the shuffled candidate list.
struct EvalInstance {
    std::string user_id;
    std::string positive_item_id;
    std::string positive_title;
    double positive_rating = 0.0;
    std::int64_t positive_timestamp = 0;
    std::vector<HistoryEntry> source_history;
    std::vector<HistoryEntry> target_history;
    std::vector<NegativeItem> negatives;
    std::vector<std::string> candidates;  // negatives + positive, shuffled
    std::size_t positive_position = 0;    // index of positive in candidates
    std::uint64_t seed_trace = 0;         // seed used for the candidate shuffle

    json to_json() const;
    static EvalInstance from_json(const json& j);
    bool operator==(const EvalInstance&) const = default;
};

struct SplitResult {
    corpus::PairedCorpus train;
    // withheld target interactions, sorted by (user_id, item_id)
    std::vector<corpus::Interaction> test_pool;
};

struct SampleStats {
    std::size_t eligible_users = 0;
    std::size_t pool_size = 0;
    std::size_t sampled = 0;
    std::size_t skipped_negative_shortage = 0;
    std::size_t skipped_duplicate_titles = 0;
};

// Withholds each eligible user's most recent target interaction (eligible:
// at least two target interactions). Most recent = max timestamp, ties
// broken toward the smaller item_id. Throws SamplerError when no user
// qualifies.
SplitResult split(const corpus::PairedCorpus& pc, const SplitConfig& cfg);

// Most recent interactions first, capped, excluding `exclude_item_id`
// (pass empty string for no exclusion). Titles come from the dataset
// catalog; uncataloged interactions are skipped.
std::vector<HistoryEntry> select_history(const corpus::DomainDataset& ds,
                                         const std::string& user_id, std::size_t cap,
                                         const std::string& exclude_item_id = "");

// k target-catalog items the user never interacted with, in `full_target`
// (train plus test). Returns nullopt when fewer than k such items exist.
std::optional<std::vector<NegativeItem>> sample_negatives(const corpus::DomainDataset& full_target,
                                                          const std::string& user_id,
                                                          std::size_t k, std::uint64_t seed);

// Shuffles {negatives' titles, positive_title} with the given seed and
// reports where the positive landed.
std::vector<std::string> build_candidates(const std::string& positive_title,
                                          const std::vector<NegativeItem>& negatives,
                                          std::uint64_t seed, std::size_t* positive_position);

// Full pipeline over a split: samples up to cfg.test_size withheld
// interactions, then expands each into an EvalInstance. Users whose
// negative pool is short or whose candidate titles collide are skipped
// (counted in stats). `full` must be the unsplit corpus the split came
// from, so negatives avoid test-time items too.
std::vector<EvalInstance> sample_eval_set(const corpus::PairedCorpus& full,
                                          const SplitResult& split_result, const SplitConfig& cfg,
                                          SampleStats* stats = nullptr);

void save_eval_set(const std::vector<EvalInstance>& instances, const std::string& path);
std::vector<EvalInstance> load_eval_set(const std::string& path);

}  // namespace cdrbench::sampler
