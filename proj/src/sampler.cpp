// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/sampler.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <set>

#include "cdrbench/jsonl.hpp"
#include "cdrbench/rng.hpp"

namespace cdrbench::sampler {

void SplitConfig::validate() const {
    if (test_size == 0) throw SamplerError("split config: test_size must be positive");
    if (history_cap == 0) throw SamplerError("split config: history_cap must be positive");
    if (negatives_per_positive == 0)
        throw SamplerError("split config: negatives_per_positive must be positive");
}

namespace {

// Most recent first; ties on timestamp go to the smaller item_id so the
// order is total and reproducible.
bool more_recent(const corpus::Interaction& a, const corpus::Interaction& b) {
    if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
    return a.item_id < b.item_id;
}

}  // namespace

SplitResult split(const corpus::PairedCorpus& pc, const SplitConfig& cfg) {
    cfg.validate();

    std::map<std::string, std::vector<corpus::Interaction>> by_user;
    for (const auto& it : pc.target.interactions) by_user[it.user_id].push_back(it);

    SplitResult out;
    out.train = pc;
    out.train.target.interactions.clear();
    for (auto& [user, items] : by_user) {
        if (items.size() < 2) {
            // too little target signal to both hold out and keep history
            for (auto& it : items) out.train.target.interactions.push_back(std::move(it));
            continue;
        }
        auto latest = std::min_element(items.begin(), items.end(), more_recent);
        for (auto iter = items.begin(); iter != items.end(); ++iter) {
            if (iter == latest)
                out.test_pool.push_back(*iter);
            else
                out.train.target.interactions.push_back(*iter);
        }
    }
    if (out.test_pool.empty())
        throw SamplerError("split: no user has at least two target-domain interactions");

    std::sort(out.train.target.interactions.begin(), out.train.target.interactions.end(),
              [](const corpus::Interaction& a, const corpus::Interaction& b) {
                  return std::tie(a.user_id, a.timestamp, a.item_id) <
                         std::tie(b.user_id, b.timestamp, b.item_id);
              });
    std::sort(out.test_pool.begin(), out.test_pool.end(),
              [](const corpus::Interaction& a, const corpus::Interaction& b) {
                  return std::tie(a.user_id, a.item_id) < std::tie(b.user_id, b.item_id);
              });
    return out;
}

std::vector<HistoryEntry> select_history(const corpus::DomainDataset& ds,
                                         const std::string& user_id, std::size_t cap,
                                         const std::string& exclude_item_id) {
    std::vector<corpus::Interaction> mine;
    for (const auto& it : ds.interactions) {
        if (it.user_id != user_id) continue;
        if (!exclude_item_id.empty() && it.item_id == exclude_item_id) continue;
        if (ds.catalog.find(it.item_id) == ds.catalog.end()) continue;
        mine.push_back(it);
    }
    std::sort(mine.begin(), mine.end(), more_recent);
    if (mine.size() > cap) mine.resize(cap);

    std::vector<HistoryEntry> out;
    out.reserve(mine.size());
    for (const auto& it : mine) out.push_back({ds.catalog.at(it.item_id), it.rating});
    return out;
}

std::optional<std::vector<NegativeItem>> sample_negatives(const corpus::DomainDataset& full_target,
                                                          const std::string& user_id,
                                                          std::size_t k, std::uint64_t seed) {
    std::set<std::string> seen;
    for (const auto& it : full_target.interactions)
        if (it.user_id == user_id) seen.insert(it.item_id);

    std::vector<const std::pair<const std::string, std::string>*> pool;
    pool.reserve(full_target.catalog.size());
    for (const auto& entry : full_target.catalog)
        if (!seen.count(entry.first)) pool.push_back(&entry);
    if (pool.size() < k) return std::nullopt;

    rng::Engine eng(seed);
    std::vector<NegativeItem> out;
    out.reserve(k);
    for (std::size_t idx : rng::sample_indices(eng, pool.size(), k))
        out.push_back({pool[idx]->first, pool[idx]->second});
    return out;
}

std::vector<std::string> build_candidates(const std::string& positive_title,
                                          const std::vector<NegativeItem>& negatives,
                                          std::uint64_t seed, std::size_t* positive_position) {
    std::vector<std::string> titles;
    titles.reserve(negatives.size() + 1);
    for (const auto& n : negatives) titles.push_back(n.title);
    titles.push_back(positive_title);

    rng::Engine eng(seed);
    rng::shuffle(eng, titles);

    if (positive_position) {
        auto pos = std::find(titles.begin(), titles.end(), positive_title);
        *positive_position = static_cast<std::size_t>(pos - titles.begin());
    }
    return titles;
}

namespace {

bool titles_unique(const std::string& positive_title, const std::vector<NegativeItem>& negatives) {
    std::set<std::string> seen{positive_title};
    for (const auto& n : negatives)
        if (!seen.insert(n.title).second) return false;
    return true;
}

}  // namespace

std::vector<EvalInstance> sample_eval_set(const corpus::PairedCorpus& full,
                                          const SplitResult& split_result, const SplitConfig& cfg,
                                          SampleStats* stats) {
    cfg.validate();
    SampleStats local;
    local.eligible_users = split_result.test_pool.size();

    std::vector<corpus::Interaction> pool = split_result.test_pool;
    std::sort(pool.begin(), pool.end(),
              [](const corpus::Interaction& a, const corpus::Interaction& b) {
                  return std::tie(a.user_id, a.item_id) < std::tie(b.user_id, b.item_id);
              });
    local.pool_size = pool.size();

    if (pool.size() > cfg.test_size) {
        rng::Engine eng(rng::derive_seed(cfg.seed, "evalset"));
        std::vector<corpus::Interaction> picked;
        picked.reserve(cfg.test_size);
        for (std::size_t idx : rng::sample_indices(eng, pool.size(), cfg.test_size))
            picked.push_back(pool[idx]);
        std::sort(picked.begin(), picked.end(),
                  [](const corpus::Interaction& a, const corpus::Interaction& b) {
                      return std::tie(a.user_id, a.item_id) < std::tie(b.user_id, b.item_id);
                  });
        pool = std::move(picked);
    }

    std::vector<EvalInstance> out;
    out.reserve(pool.size());
    for (const auto& withheld : pool) {
        EvalInstance inst;
        inst.user_id = withheld.user_id;
        inst.positive_item_id = withheld.item_id;
        inst.positive_rating = withheld.rating;
        inst.positive_timestamp = withheld.timestamp;
        inst.positive_title = full.target.catalog.at(withheld.item_id);

        inst.source_history =
            select_history(split_result.train.source, withheld.user_id, cfg.history_cap);
        inst.target_history = select_history(split_result.train.target, withheld.user_id,
                                             cfg.history_cap, withheld.item_id);

        auto negatives =
            sample_negatives(full.target, withheld.user_id, cfg.negatives_per_positive,
                             rng::derive_seed(cfg.seed, "negatives", withheld.user_id));
        if (!negatives) {
            ++local.skipped_negative_shortage;
            std::cerr << "sampler: skipping user " << withheld.user_id
                      << ": fewer than " << cfg.negatives_per_positive
                      << " negative candidates\n";
            continue;
        }
        if (!titles_unique(inst.positive_title, *negatives)) {
            negatives = sample_negatives(
                full.target, withheld.user_id, cfg.negatives_per_positive,
                rng::derive_seed(cfg.seed, "negatives-retry", withheld.user_id));
            if (!negatives || !titles_unique(inst.positive_title, *negatives)) {
                ++local.skipped_duplicate_titles;
                std::cerr << "sampler: skipping user " << withheld.user_id
                          << ": duplicate candidate titles after resample\n";
                continue;
            }
        }
        inst.negatives = std::move(*negatives);

        inst.seed_trace = rng::derive_seed(cfg.seed, withheld.user_id, withheld.item_id);
        inst.candidates = build_candidates(inst.positive_title, inst.negatives, inst.seed_trace,
                                           &inst.positive_position);
        out.push_back(std::move(inst));
    }
    local.sampled = out.size();
    if (stats) *stats = local;
    return out;
}

json EvalInstance::to_json() const {
    json src = json::array();
    for (const auto& h : source_history) src.push_back({{"title", h.title}, {"rating", h.rating}});
    json tgt = json::array();
    for (const auto& h : target_history) tgt.push_back({{"title", h.title}, {"rating", h.rating}});
    json neg = json::array();
    for (const auto& n : negatives) neg.push_back({{"item_id", n.item_id}, {"title", n.title}});
    return json{{"user_id", user_id},
                {"positive",
                 {{"item_id", positive_item_id},
                  {"title", positive_title},
                  {"rating", positive_rating},
                  {"timestamp", positive_timestamp}}},
                {"source_history", std::move(src)},
                {"target_history", std::move(tgt)},
                {"negatives", std::move(neg)},
                {"candidates", candidates},
                {"positive_position", positive_position},
                {"seed_trace", seed_trace}};
}

EvalInstance EvalInstance::from_json(const json& j) {
    EvalInstance inst;
    inst.user_id = j.at("user_id").get<std::string>();
    const json& pos = j.at("positive");
    inst.positive_item_id = pos.at("item_id").get<std::string>();
    inst.positive_title = pos.at("title").get<std::string>();
    inst.positive_rating = pos.at("rating").get<double>();
    inst.positive_timestamp = pos.at("timestamp").get<std::int64_t>();
    for (const auto& h : j.at("source_history"))
        inst.source_history.push_back(
            {h.at("title").get<std::string>(), h.at("rating").get<double>()});
    for (const auto& h : j.at("target_history"))
        inst.target_history.push_back(
            {h.at("title").get<std::string>(), h.at("rating").get<double>()});
    for (const auto& n : j.at("negatives"))
        inst.negatives.push_back(
            {n.at("item_id").get<std::string>(), n.at("title").get<std::string>()});
    inst.candidates = j.at("candidates").get<std::vector<std::string>>();
    inst.positive_position = j.at("positive_position").get<std::size_t>();
    inst.seed_trace = j.at("seed_trace").get<std::uint64_t>();
    return inst;
}

void save_eval_set(const std::vector<EvalInstance>& instances, const std::string& path) {
    jsonl::Writer w(path);
    w.write(json{{"kind", "evalset_meta"}, {"count", instances.size()}});
    for (const auto& inst : instances) {
        json rec = inst.to_json();
        rec["kind"] = "instance";
        w.write(rec);
    }
}

std::vector<EvalInstance> load_eval_set(const std::string& path) {
    std::vector<EvalInstance> out;
    jsonl::for_each_record(path, [&](std::size_t, const json& rec) {
        if (rec.value("kind", "") == "instance") out.push_back(EvalInstance::from_json(rec));
    });
    return out;
}

}  // namespace cdrbench::sampler
