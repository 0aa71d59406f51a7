// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cdrbench::corpus {

struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PairingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Interaction {
    std::string user_id;
    std::string item_id;
    double rating = 0.0;  // multiple of 0.5 within [0.5, 5.0]
    std::int64_t timestamp = 0;
    std::string domain;

    bool operator==(const Interaction&) const = default;
};

// item_id -> title, titles whitespace-normalized and non-empty.
using ItemCatalog = std::map<std::string, std::string>;

struct DomainDataset {
    std::string domain;
    std::vector<Interaction> interactions;  // sorted by (user_id, timestamp, item_id)
    ItemCatalog catalog;

    // bookkeeping from ingest/join
    std::size_t malformed_lines = 0;
    std::size_t duplicates_dropped = 0;
    std::size_t missing_title_dropped = 0;
    std::string source_checksum;   // sha256 of the reviews file
    std::string catalog_checksum;  // sha256 of the metadata file
};

struct PairedCorpus {
    DomainDataset source;
    DomainDataset target;
    std::set<std::string> overlap_users;
    std::string pair_name;
    // per-domain user counts before the overlap filter (what a stats table
    // reports as "User #"); retained interactions only cover overlap users
    std::size_t users_source_total = 0;
    std::size_t users_target_total = 0;
};

struct PairStats {
    std::size_t items_source = 0;
    std::size_t items_target = 0;
    std::size_t users_source = 0;
    std::size_t users_target = 0;
    std::size_t users_overlap = 0;
    std::size_t ratings_source = 0;
    std::size_t ratings_target = 0;

    bool operator==(const PairStats&) const = default;
    nlohmann::json to_json() const;
};

// Reads a line-delimited review file (one JSON record per line) into a
// dataset. Accepts the Amazon review schema (reviewerID/asin/overall/
// unixReviewTime) as well as the plain user_id/item_id/rating/timestamp
// spelling. Duplicate (user, item) pairs keep the latest timestamp.
// Throws IngestError on unreadable input or when more than half the
// non-blank lines are malformed.
DomainDataset ingest_reviews(const std::string& path, const std::string& domain);

// Joins item titles from a metadata file (asin/title or item_id/title).
// Interactions whose item has no usable title are dropped and counted.
// Duplicate catalog ids: last entry wins (a warning is printed).
// Throws IngestError if nothing survives the join.
DomainDataset join_titles(DomainDataset ds, const std::string& catalog_path);

// Restricts both datasets to users present in each, and both catalogs to
// items still referenced by an interaction. Throws PairingError when the
// overlap is empty.
PairedCorpus build_pair(const DomainDataset& source, const DomainDataset& target,
                        const std::string& pair_name);

PairStats corpus_stats(const PairedCorpus& pc);

// Title whitespace normalization used everywhere titles enter the corpus:
// trims and collapses internal runs of whitespace to single spaces.
std::string normalize_title(const std::string& raw);

// Line-delimited persistence of datasets and paired corpora.
void save_dataset(const DomainDataset& ds, const std::string& path);
DomainDataset load_dataset(const std::string& path);
void save_pair(const PairedCorpus& pc, const std::string& path);
PairedCorpus load_pair(const std::string& path);

}  // namespace cdrbench::corpus
