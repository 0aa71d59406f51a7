// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>

#include "cdrbench/digest.hpp"
#include "cdrbench/jsonl.hpp"

namespace cdrbench::corpus {

using nlohmann::json;

namespace {

bool valid_rating(double r) {
    if (r < 0.5 || r > 5.0) return false;
    const double scaled = r * 2.0;
    return std::fabs(scaled - std::round(scaled)) < 1e-9;
}

// Pulls the first present key out of a record.
const json* pick(const json& rec, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = rec.find(k);
        if (it != rec.end()) return &*it;
    }
    return nullptr;
}

void sort_canonical(std::vector<Interaction>& v) {
    std::sort(v.begin(), v.end(), [](const Interaction& a, const Interaction& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return a.item_id < b.item_id;
    });
}

std::set<std::string> user_set(const std::vector<Interaction>& v) {
    std::set<std::string> users;
    for (const auto& it : v) users.insert(it.user_id);
    return users;
}

DomainDataset filter_to_users(const DomainDataset& ds, const std::set<std::string>& users) {
    DomainDataset out = ds;
    out.interactions.clear();
    for (const auto& it : ds.interactions)
        if (users.count(it.user_id)) out.interactions.push_back(it);
    // keep only items still referenced
    std::set<std::string> items;
    for (const auto& it : out.interactions) items.insert(it.item_id);
    ItemCatalog kept;
    for (const auto& [id, title] : out.catalog)
        if (items.count(id)) kept.emplace(id, title);
    out.catalog = std::move(kept);
    return out;
}

json interaction_to_json(const Interaction& it) {
    return json{{"user_id", it.user_id},
                {"item_id", it.item_id},
                {"rating", it.rating},
                {"timestamp", it.timestamp},
                {"domain", it.domain}};
}

Interaction interaction_from_json(const json& j) {
    Interaction it;
    it.user_id = j.at("user_id").get<std::string>();
    it.item_id = j.at("item_id").get<std::string>();
    it.rating = j.at("rating").get<double>();
    it.timestamp = j.at("timestamp").get<std::int64_t>();
    it.domain = j.at("domain").get<std::string>();
    return it;
}

void write_dataset_records(jsonl::Writer& w, const DomainDataset& ds, const char* side = nullptr) {
    for (const auto& [id, title] : ds.catalog) {
        json rec{{"kind", "item"}, {"domain", ds.domain}, {"item_id", id}, {"title", title}};
        if (side) rec["side"] = side;
        w.write(rec);
    }
    for (const auto& it : ds.interactions) {
        json rec = interaction_to_json(it);
        rec["kind"] = "interaction";
        if (side) rec["side"] = side;
        w.write(rec);
    }
}

}  // namespace

std::string normalize_title(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    bool in_space = true;  // leading whitespace is dropped
    for (unsigned char c : raw) {
        if (std::isspace(c)) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out.push_back(' ');
            out.push_back(char(c));
            in_space = false;
        }
    }
    return out;
}

DomainDataset ingest_reviews(const std::string& path, const std::string& domain) {
    DomainDataset ds;
    ds.domain = domain;
    ds.source_checksum = digest::sha256_hex("");  // replaced below on success

    // keyed by (user, item); keeps latest timestamp
    std::map<std::pair<std::string, std::string>, Interaction> dedup;
    std::size_t parsed = 0, malformed = 0, duplicates = 0;

    std::size_t bad_json;
    try {
        bad_json = jsonl::for_each_record(path, [&](std::size_t, const json& rec) {
            ++parsed;
            const json* user = pick(rec, {"reviewerID", "user_id"});
            const json* item = pick(rec, {"asin", "item_id"});
            const json* rating = pick(rec, {"overall", "rating"});
            const json* ts = pick(rec, {"unixReviewTime", "timestamp"});
            if (!user || !item || !rating || !ts || !user->is_string() || !item->is_string() ||
                !rating->is_number() || !ts->is_number_integer()) {
                ++malformed;
                return;
            }
            Interaction it;
            it.user_id = user->get<std::string>();
            it.item_id = item->get<std::string>();
            it.rating = rating->get<double>();
            it.timestamp = ts->get<std::int64_t>();
            it.domain = domain;
            if (it.user_id.empty() || it.item_id.empty() || !valid_rating(it.rating)) {
                ++malformed;
                return;
            }
            auto key = std::make_pair(it.user_id, it.item_id);
            auto [pos, inserted] = dedup.emplace(key, it);
            if (!inserted) {
                ++duplicates;
                if (it.timestamp > pos->second.timestamp) pos->second = it;
            }
        });
    } catch (const std::exception& e) {
        throw IngestError(std::string("ingest: ") + e.what());
    }

    malformed += bad_json;
    const std::size_t total_lines = parsed + bad_json;
    if (total_lines == 0) throw IngestError("ingest: no records in " + path);
    if (malformed * 2 > total_lines)
        throw IngestError("ingest: more than half of " + path + " is malformed (" +
                          std::to_string(malformed) + "/" + std::to_string(total_lines) + ")");

    ds.interactions.reserve(dedup.size());
    for (auto& [key, it] : dedup) ds.interactions.push_back(std::move(it));
    sort_canonical(ds.interactions);
    ds.malformed_lines = malformed;
    ds.duplicates_dropped = duplicates;
    ds.source_checksum = digest::sha256_file_hex(path);
    return ds;
}

DomainDataset join_titles(DomainDataset ds, const std::string& catalog_path) {
    ItemCatalog catalog;
    std::size_t duplicate_ids = 0;
    try {
        jsonl::for_each_record(catalog_path, [&](std::size_t, const json& rec) {
            const json* item = pick(rec, {"asin", "item_id"});
            const json* title = pick(rec, {"title"});
            if (!item || !title || !item->is_string() || !title->is_string()) return;
            const std::string id = item->get<std::string>();
            const std::string t = normalize_title(title->get<std::string>());
            if (id.empty() || t.empty()) return;
            auto [pos, inserted] = catalog.insert_or_assign(id, t);
            (void)pos;
            if (!inserted) ++duplicate_ids;
        });
    } catch (const std::exception& e) {
        throw IngestError(std::string("join: ") + e.what());
    }
    if (duplicate_ids > 0)
        std::cerr << "[corpus] warning: " << duplicate_ids << " duplicate item ids in "
                  << catalog_path << ", last entry wins\n";

    std::vector<Interaction> kept;
    kept.reserve(ds.interactions.size());
    std::size_t dropped = 0;
    for (auto& it : ds.interactions) {
        if (catalog.count(it.item_id))
            kept.push_back(std::move(it));
        else
            ++dropped;
    }
    if (kept.empty()) throw IngestError("join: no interaction has a usable title (" + catalog_path + ")");

    ds.interactions = std::move(kept);
    ds.catalog = std::move(catalog);
    ds.missing_title_dropped = dropped;
    ds.catalog_checksum = digest::sha256_file_hex(catalog_path);
    return ds;
}

PairedCorpus build_pair(const DomainDataset& source, const DomainDataset& target,
                        const std::string& pair_name) {
    if (source.interactions.empty() || target.interactions.empty())
        throw PairingError("pair: empty input dataset");

    const auto src_users = user_set(source.interactions);
    const auto tgt_users = user_set(target.interactions);
    std::set<std::string> overlap;
    std::set_intersection(src_users.begin(), src_users.end(), tgt_users.begin(), tgt_users.end(),
                          std::inserter(overlap, overlap.begin()));
    if (overlap.empty())
        throw PairingError("pair: no overlapping users between " + source.domain + " and " +
                           target.domain);

    PairedCorpus pc;
    pc.pair_name = pair_name;
    pc.source = filter_to_users(source, overlap);
    pc.target = filter_to_users(target, overlap);
    pc.overlap_users = std::move(overlap);
    pc.users_source_total = src_users.size();
    pc.users_target_total = tgt_users.size();
    return pc;
}

PairStats corpus_stats(const PairedCorpus& pc) {
    PairStats s;
    s.items_source = pc.source.catalog.size();
    s.items_target = pc.target.catalog.size();
    s.users_source =
        pc.users_source_total ? pc.users_source_total : user_set(pc.source.interactions).size();
    s.users_target =
        pc.users_target_total ? pc.users_target_total : user_set(pc.target.interactions).size();
    s.users_overlap = pc.overlap_users.size();
    s.ratings_source = pc.source.interactions.size();
    s.ratings_target = pc.target.interactions.size();
    return s;
}

json PairStats::to_json() const {
    return json{{"items_source", items_source},   {"items_target", items_target},
                {"users_source", users_source},   {"users_target", users_target},
                {"users_overlap", users_overlap}, {"ratings_source", ratings_source},
                {"ratings_target", ratings_target}};
}

void save_dataset(const DomainDataset& ds, const std::string& path) {
    jsonl::Writer w(path);
    w.write(json{{"kind", "dataset_meta"},
                 {"domain", ds.domain},
                 {"malformed_lines", ds.malformed_lines},
                 {"duplicates_dropped", ds.duplicates_dropped},
                 {"missing_title_dropped", ds.missing_title_dropped},
                 {"source_checksum", ds.source_checksum},
                 {"catalog_checksum", ds.catalog_checksum}});
    write_dataset_records(w, ds);
}

namespace {

void read_dataset_record(DomainDataset& ds, const json& rec) {
    const std::string kind = rec.at("kind").get<std::string>();
    if (kind == "item") {
        ds.catalog[rec.at("item_id").get<std::string>()] = rec.at("title").get<std::string>();
    } else if (kind == "interaction") {
        ds.interactions.push_back(interaction_from_json(rec));
    }
}

void read_meta(DomainDataset& ds, const json& rec) {
    ds.domain = rec.at("domain").get<std::string>();
    ds.malformed_lines = rec.value("malformed_lines", std::size_t(0));
    ds.duplicates_dropped = rec.value("duplicates_dropped", std::size_t(0));
    ds.missing_title_dropped = rec.value("missing_title_dropped", std::size_t(0));
    ds.source_checksum = rec.value("source_checksum", "");
    ds.catalog_checksum = rec.value("catalog_checksum", "");
}

}  // namespace

DomainDataset load_dataset(const std::string& path) {
    DomainDataset ds;
    jsonl::for_each_record(path, [&](std::size_t, const json& rec) {
        if (rec.at("kind") == "dataset_meta")
            read_meta(ds, rec);
        else
            read_dataset_record(ds, rec);
    });
    sort_canonical(ds.interactions);
    return ds;
}

void save_pair(const PairedCorpus& pc, const std::string& path) {
    jsonl::Writer w(path);
    w.write(json{{"kind", "pair_meta"},
                 {"pair_name", pc.pair_name},
                 {"source_domain", pc.source.domain},
                 {"target_domain", pc.target.domain},
                 {"source_checksum", pc.source.source_checksum},
                 {"target_checksum", pc.target.source_checksum},
                 {"source_catalog_checksum", pc.source.catalog_checksum},
                 {"target_catalog_checksum", pc.target.catalog_checksum},
                 {"users_source_total", pc.users_source_total},
                 {"users_target_total", pc.users_target_total}});
    write_dataset_records(w, pc.source, "source");
    write_dataset_records(w, pc.target, "target");
}

PairedCorpus load_pair(const std::string& path) {
    PairedCorpus pc;
    jsonl::for_each_record(path, [&](std::size_t, const json& rec) {
        const std::string kind = rec.at("kind").get<std::string>();
        if (kind == "pair_meta") {
            pc.pair_name = rec.at("pair_name").get<std::string>();
            pc.source.domain = rec.at("source_domain").get<std::string>();
            pc.target.domain = rec.at("target_domain").get<std::string>();
            pc.source.source_checksum = rec.value("source_checksum", "");
            pc.target.source_checksum = rec.value("target_checksum", "");
            pc.source.catalog_checksum = rec.value("source_catalog_checksum", "");
            pc.target.catalog_checksum = rec.value("target_catalog_checksum", "");
            pc.users_source_total = rec.value("users_source_total", std::size_t(0));
            pc.users_target_total = rec.value("users_target_total", std::size_t(0));
        } else {
            DomainDataset& ds =
                (rec.value("side", "source") == "source") ? pc.source : pc.target;
            read_dataset_record(ds, rec);
        }
    });
    sort_canonical(pc.source.interactions);
    sort_canonical(pc.target.interactions);
    // overlap is derivable; recompute rather than persist
    const auto src_users = user_set(pc.source.interactions);
    const auto tgt_users = user_set(pc.target.interactions);
    std::set_intersection(src_users.begin(), src_users.end(), tgt_users.begin(), tgt_users.end(),
                          std::inserter(pc.overlap_users, pc.overlap_users.begin()));
    return pc;
}

}  // namespace cdrbench::corpus
