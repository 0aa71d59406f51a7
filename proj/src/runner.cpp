// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/runner.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cdrbench/digest.hpp"
#include "cdrbench/jsonl.hpp"

namespace cdrbench::runner {

namespace fs = std::filesystem;

std::string slugify(const std::string& name) {
    std::string out;
    bool dash_pending = false;
    for (unsigned char c : name) {
        if (std::isalnum(c)) {
            if (dash_pending && !out.empty()) out += '-';
            dash_pending = false;
            out += static_cast<char>(std::tolower(c));
        } else {
            dash_pending = true;
        }
    }
    return out.empty() ? "unnamed" : out;
}

namespace {

DomainFiles domain_files_from_json(const json& j) {
    DomainFiles d;
    d.domain = j.value("domain", "");
    d.reviews = j.value("reviews", "");
    d.metadata = j.value("metadata", "");
    return d;
}

json domain_files_to_json(const DomainFiles& d) {
    return json{{"domain", d.domain}, {"reviews", d.reviews}, {"metadata", d.metadata}};
}

promptgen::PromptVariant variant_from_json(const json& j) {
    if (j.is_string()) {
        const std::string id = j.get<std::string>();
        const std::size_t a = id.find('-');
        const std::size_t b = id.rfind('-');
        if (a == std::string::npos || b == std::string::npos || a == b)
            throw ConfigError("variant id must look like with-rating-high: " + id);
        return promptgen::PromptVariant::parse(id.substr(0, a), id.substr(a + 1, b - a - 1),
                                               id.substr(b + 1));
    }
    return promptgen::PromptVariant::parse(j.value("injection", "with"),
                                           j.value("task", "rating"),
                                           j.value("context", "high"));
}

json variant_to_json(const promptgen::PromptVariant& v) {
    return json{
        {"injection", v.injection == promptgen::Injection::with_injection ? "with" : "no"},
        {"task", v.task == promptgen::Task::rating ? "rating" : "ranking"},
        {"context", v.context == promptgen::Context::high ? "high" : "medium"},
        {"id", v.id()}};
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    for (const auto& p : j.value("pairs", json::array())) {
        PairConfig pc;
        pc.name = p.value("name", "");
        if (p.contains("source")) pc.source = domain_files_from_json(p["source"]);
        if (p.contains("target")) pc.target = domain_files_from_json(p["target"]);
        pc.corpus_file = p.value("corpus_file", "");
        cfg.pairs.push_back(std::move(pc));
    }
    if (j.contains("split")) {
        const json& s = j["split"];
        cfg.split.seed = s.value("seed", cfg.split.seed);
        cfg.split.test_size = s.value("test_size", cfg.split.test_size);
        cfg.split.history_cap = s.value("history_cap", cfg.split.history_cap);
        cfg.split.negatives_per_positive =
            s.value("negatives_per_positive", cfg.split.negatives_per_positive);
    }
    for (const auto& c : j.value("cells", json::array())) {
        CellConfig cc;
        cc.model = gateway::ModelSpec::from_json(c.at("model"));
        cc.variant = variant_from_json(c.at("variant"));
        cfg.cells.push_back(std::move(cc));
    }
    if (j.contains("baselines")) {
        const json& b = j["baselines"];
        cfg.baselines.enabled = b.value("enabled", true);
        cfg.baselines.mf.dimension = b.value("dimension", cfg.baselines.mf.dimension);
        cfg.baselines.mf.regularization =
            b.value("regularization", cfg.baselines.mf.regularization);
        cfg.baselines.mf.learning_rate = b.value("learning_rate", cfg.baselines.mf.learning_rate);
        cfg.baselines.mf.epochs = b.value("epochs", cfg.baselines.mf.epochs);
        cfg.baselines.mf.seed = b.value("seed", cfg.baselines.mf.seed);
        cfg.baselines.mapper.hidden_dim =
            b.value("mapper_hidden_dim", cfg.baselines.mapper.hidden_dim);
        cfg.baselines.mapper.learning_rate =
            b.value("mapper_learning_rate", cfg.baselines.mapper.learning_rate);
        cfg.baselines.mapper.epochs = b.value("mapper_epochs", cfg.baselines.mapper.epochs);
        cfg.baselines.mapper.seed = b.value("mapper_seed", cfg.baselines.mf.seed);
    }
    if (j.contains("label_map")) {
        cfg.label_map = respparse::LabelMap::from_json(j["label_map"]);
        cfg.label_map_name = j["label_map"].is_string() ? j["label_map"].get<std::string>()
                                                        : std::string("custom");
    }
    cfg.label_map_name = j.value("label_map_name", cfg.label_map_name);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.cost_ceiling_tokens = j.value("cost_ceiling_tokens", cfg.cost_ceiling_tokens);
    if (j.contains("gateway")) cfg.gateway_options = gateway::GatewayOptions::from_json(j["gateway"]);
    cfg.templates_dir = j.value("templates_dir", cfg.templates_dir);
    cfg.similarity_threshold = j.value("similarity_threshold", cfg.similarity_threshold);
    cfg.prompt_char_budget = j.value("prompt_char_budget", cfg.prompt_char_budget);
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
    return from_json(j);
}

json RunConfig::to_json() const {
    json pairs = json::array();
    for (const auto& p : this->pairs)
        pairs.push_back(json{{"name", p.name},
                             {"source", domain_files_to_json(p.source)},
                             {"target", domain_files_to_json(p.target)},
                             {"corpus_file", p.corpus_file}});
    json cells = json::array();
    for (const auto& c : this->cells)
        cells.push_back(json{{"model", c.model.to_json()}, {"variant", variant_to_json(c.variant)}});
    return json{
        {"pairs", pairs},
        {"split",
         {{"seed", split.seed},
          {"test_size", split.test_size},
          {"history_cap", split.history_cap},
          {"negatives_per_positive", split.negatives_per_positive}}},
        {"cells", cells},
        {"baselines",
         {{"enabled", baselines.enabled},
          {"dimension", baselines.mf.dimension},
          {"regularization", baselines.mf.regularization},
          {"learning_rate", baselines.mf.learning_rate},
          {"epochs", baselines.mf.epochs},
          {"seed", baselines.mf.seed},
          {"mapper_hidden_dim", baselines.mapper.hidden_dim},
          {"mapper_learning_rate", baselines.mapper.learning_rate},
          {"mapper_epochs", baselines.mapper.epochs},
          {"mapper_seed", baselines.mapper.seed}}},
        {"label_map", label_map.to_json()},
        {"label_map_name", label_map_name},
        {"output_dir", output_dir},
        {"cost_ceiling_tokens", cost_ceiling_tokens},
        {"gateway", gateway_options.to_json()},
        {"templates_dir", templates_dir},
        {"similarity_threshold", similarity_threshold},
        {"prompt_char_budget", prompt_char_budget}};
}

void RunConfig::validate() const {
    if (pairs.empty()) throw ConfigError("config needs at least one pair");
    for (const auto& p : pairs) {
        if (p.name.empty()) throw ConfigError("every pair needs a name");
        if (p.corpus_file.empty()) {
            if (p.source.domain.empty() || p.source.reviews.empty() ||
                p.source.metadata.empty() || p.target.domain.empty() ||
                p.target.reviews.empty() || p.target.metadata.empty())
                throw ConfigError("pair " + p.name +
                                  ": needs corpus_file or full source/target file sets");
        }
    }
    try {
        split.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("split config: ") + e.what());
    }
    bool any_http = false;
    for (const auto& c : cells) {
        try {
            c.model.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("cell model: ") + e.what());
        }
        if (c.model.backend == gateway::Backend::http_openai_compatible) any_http = true;
    }
    if (any_http && cost_ceiling_tokens <= 0)
        throw ConfigError("http cells need a positive cost_ceiling_tokens");
    if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0))
        throw ConfigError("similarity_threshold must be in (0, 1]");
    label_map.validate();
    if (output_dir.empty()) throw ConfigError("output_dir must be set");
    if (templates_dir.empty()) throw ConfigError("templates_dir must be set");
}

PairArtifacts prepare_pair(const RunConfig& cfg, const PairConfig& pair) {
    PairArtifacts art;
    art.config = pair;
    const std::string slug = slugify(pair.name);
    const std::string corpus_dir = cfg.output_dir + "/corpus";
    const std::string evalset_dir = cfg.output_dir + "/evalsets";
    fs::create_directories(corpus_dir);
    fs::create_directories(evalset_dir);

    const std::string pair_path =
        pair.corpus_file.empty() ? corpus_dir + "/" + slug + ".pair.jsonl" : pair.corpus_file;
    if (fs::exists(pair_path)) {
        art.full = corpus::load_pair(pair_path);
    } else {
        if (pair.corpus_file.empty() && pair.source.reviews.empty())
            throw ConfigError("pair " + pair.name + ": corpus file missing: " + pair_path);
        auto source = corpus::join_titles(
            corpus::ingest_reviews(pair.source.reviews, pair.source.domain),
            pair.source.metadata);
        auto target = corpus::join_titles(
            corpus::ingest_reviews(pair.target.reviews, pair.target.domain),
            pair.target.metadata);
        art.full = corpus::build_pair(source, target, pair.name);
        corpus::save_pair(art.full, pair_path);
    }
    art.stats = corpus::corpus_stats(art.full);

    const std::string train_path = corpus_dir + "/" + slug + ".train.jsonl";
    const std::string evalset_path = evalset_dir + "/" + slug + ".jsonl";
    const std::string stats_path = evalset_dir + "/" + slug + ".stats.json";
    if (fs::exists(train_path) && fs::exists(evalset_path)) {
        art.split.train = corpus::load_pair(train_path);
        art.instances = sampler::load_eval_set(evalset_path);
        art.sample_stats.sampled = art.instances.size();
        std::ifstream stats_in(stats_path);
        if (stats_in) {
            const json s = json::parse(stats_in, nullptr, false);
            if (!s.is_discarded()) {
                art.sample_stats.eligible_users = s.value("eligible_users", std::size_t(0));
                art.sample_stats.pool_size = s.value("pool_size", std::size_t(0));
                art.sample_stats.skipped_negative_shortage =
                    s.value("skipped_negative_shortage", std::size_t(0));
                art.sample_stats.skipped_duplicate_titles =
                    s.value("skipped_duplicate_titles", std::size_t(0));
            }
        }
    } else {
        art.split = sampler::split(art.full, cfg.split);
        art.instances = sampler::sample_eval_set(art.full, art.split, cfg.split,
                                                 &art.sample_stats);
        corpus::save_pair(art.split.train, train_path);
        sampler::save_eval_set(art.instances, evalset_path);
        write_text_file(stats_path,
                        json{{"eligible_users", art.sample_stats.eligible_users},
                             {"pool_size", art.sample_stats.pool_size},
                             {"skipped_negative_shortage",
                              art.sample_stats.skipped_negative_shortage},
                             {"skipped_duplicate_titles",
                              art.sample_stats.skipped_duplicate_titles}}
                                .dump(2) +
                            "\n");
    }
    if (art.instances.empty())
        throw ConfigError("pair " + pair.name + ": eval set came out empty");
    return art;
}

namespace {

struct ParseDiagnostics {
    std::size_t ambiguous = 0;
    std::size_t dropped = 0;
    std::size_t appended = 0;
    std::size_t exact = 0;
    std::size_t normalized = 0;
    std::size_t fuzzy = 0;

    json to_json() const {
        return json{{"ambiguous_labels", ambiguous},
                    {"dropped_hallucinations", dropped},
                    {"appended_missing", appended},
                    {"matches_exact", exact},
                    {"matches_normalized", normalized},
                    {"matches_fuzzy", fuzzy}};
    }
};

std::string cell_records_name(const std::string& pair_slug, const CellConfig& cell) {
    return pair_slug + "__" + slugify(cell.model.model_name) + "__" + cell.variant.id() +
           ".jsonl";
}

CellOutcome run_cell(const RunConfig& cfg, const CellConfig& cell, const PairArtifacts& art,
                     const promptgen::PromptLibrary& lib, gateway::Gateway& gw,
                     gateway::ResponseCache& cache, std::int64_t& budget_remaining) {
    CellOutcome out;
    out.pair_name = art.config.name;
    out.model_name = cell.model.model_name;
    out.variant = cell.variant;
    out.instances_total = art.instances.size();

    const std::string pair_slug = slugify(art.config.name);
    const std::string records_rel = "results/" + cell_records_name(pair_slug, cell);
    out.records_path = records_rel;

    const std::string& src = art.full.source.domain;
    const std::string& tgt = art.full.target.domain;

    std::vector<promptgen::RenderedPrompt> prompts;
    prompts.reserve(art.instances.size());
    for (const auto& inst : art.instances)
        prompts.push_back(lib.render(inst, cell.variant, src, tgt, cfg.prompt_char_budget));

    // Budget check happens before dispatch, against projected tokens;
    // cached completions are free so replays always run to the end.
    std::vector<std::size_t> dispatch;
    dispatch.reserve(art.instances.size());
    const bool http = cell.model.backend == gateway::Backend::http_openai_compatible;
    for (std::size_t i = 0; i < art.instances.size(); ++i) {
        if (!http || cache.contains(gateway::cache_key(cell.model, prompts[i].text))) {
            dispatch.push_back(i);
            continue;
        }
        const std::int64_t projected =
            static_cast<std::int64_t>(prompts[i].token_estimate) + cell.model.max_output_tokens;
        if (projected > budget_remaining) {
            out.partial = true;
            break;
        }
        budget_remaining -= projected;
        dispatch.push_back(i);
    }
    out.instances_run = dispatch.size();

    std::vector<promptgen::RenderedPrompt> todo;
    std::vector<const sampler::EvalInstance*> todo_inst;
    todo.reserve(dispatch.size());
    todo_inst.reserve(dispatch.size());
    for (std::size_t i : dispatch) {
        todo.push_back(prompts[i]);
        todo_inst.push_back(&art.instances[i]);
    }
    const auto records =
        gw.complete_many(todo, cell.model, &cache, &todo_inst, &cfg.label_map);

    jsonl::Writer writer(cfg.output_dir + "/" + records_rel);
    std::vector<metrics::RatingOutcome> rating_outcomes;
    std::vector<metrics::RankingOutcome> ranking_outcomes;
    std::size_t parse_failures = 0;
    ParseDiagnostics diag;

    for (std::size_t d = 0; d < dispatch.size(); ++d) {
        const auto& inst = art.instances[dispatch[d]];
        const auto& rec = records[d];
        out.tokens_input += rec.token_usage.input;
        out.tokens_output += rec.token_usage.output;

        json line{{"kind", "result"},
                  {"pair", art.config.name},
                  {"model", cell.model.model_name},
                  {"variant", cell.variant.id()},
                  {"user_id", inst.user_id},
                  {"item_id", inst.positive_item_id},
                  {"cache_key", rec.cache_key},
                  {"y", inst.positive_rating},
                  {"tokens_in", rec.token_usage.input},
                  {"tokens_out", rec.token_usage.output}};

        if (cell.variant.task == promptgen::Task::rating) {
            const auto parsed = respparse::parse_rating(rec.raw_text);
            if (!parsed) {
                ++parse_failures;
                line["parsed"] = false;
            } else {
                const double y_hat =
                    respparse::label_to_rating(parsed->label_index, cfg.label_map);
                rating_outcomes.push_back({inst.positive_rating, y_hat});
                if (parsed->ambiguous) ++diag.ambiguous;
                line["parsed"] = true;
                line["label"] = promptgen::likelihood_labels()[parsed->label_index];
                line["ambiguous"] = parsed->ambiguous;
                line["y_hat"] = y_hat;
            }
        } else {
            const auto parsed = respparse::parse_ranking(rec.raw_text, inst.candidates,
                                                         cfg.similarity_threshold);
            if (!parsed) {
                ++parse_failures;
                line["parsed"] = false;
            } else {
                const std::size_t p_u =
                    respparse::rank_of_positive(*parsed, inst.positive_position);
                ranking_outcomes.push_back(
                    {static_cast<int>(p_u), static_cast<int>(inst.candidates.size())});
                diag.dropped += parsed->dropped_hallucinations;
                diag.appended += parsed->appended_missing;
                json tiers{{"exact", 0}, {"normalized", 0}, {"fuzzy", 0}, {"appended", 0}};
                for (const auto t : parsed->tiers) {
                    const char* name = respparse::match_tier_name(t);
                    tiers[name] = tiers[name].get<int>() + 1;
                    switch (t) {
                        case respparse::MatchTier::exact: ++diag.exact; break;
                        case respparse::MatchTier::normalized: ++diag.normalized; break;
                        case respparse::MatchTier::fuzzy: ++diag.fuzzy; break;
                        case respparse::MatchTier::appended: break;
                    }
                }
                line["parsed"] = true;
                line["p_u"] = p_u;
                line["k_total"] = inst.candidates.size();
                line["dropped_hallucinations"] = parsed->dropped_hallucinations;
                line["appended_missing"] = parsed->appended_missing;
                line["tiers"] = std::move(tiers);
            }
        }
        writer.write(line);
    }

    out.report = metrics::aggregate(rating_outcomes, ranking_outcomes, parse_failures);
    out.diagnostics = diag.to_json();
    out.completed = true;
    return out;
}

json baseline_record_base(const PairArtifacts& art, const char* model,
                          const sampler::EvalInstance& inst) {
    return json{{"kind", "result"}, {"pair", art.config.name},    {"model", model},
                {"user_id", inst.user_id}, {"item_id", inst.positive_item_id},
                {"y", inst.positive_rating}};
}

BaselineOutcome evaluate_baseline(
    const RunConfig& cfg, const PairArtifacts& art, const char* model,
    const std::function<double(const std::string&, const std::string&)>& predict) {
    BaselineOutcome out;
    out.pair_name = art.config.name;
    out.model_name = model;
    const std::string records_rel =
        "results/" + slugify(art.config.name) + "__baseline-" + slugify(model) + ".jsonl";
    out.records_path = records_rel;

    jsonl::Writer writer(cfg.output_dir + "/" + records_rel);
    std::vector<metrics::RatingOutcome> rating_outcomes;
    std::vector<metrics::RankingOutcome> ranking_outcomes;
    for (const auto& inst : art.instances) {
        const double y_hat = predict(inst.user_id, inst.positive_item_id);
        rating_outcomes.push_back({inst.positive_rating, y_hat});
        json rating_line = baseline_record_base(art, model, inst);
        rating_line["task"] = "rating";
        rating_line["y_hat"] = y_hat;
        writer.write(rating_line);

        const auto ranked = baselines::rank_with_model(predict, inst);
        ranking_outcomes.push_back(ranked);
        json ranking_line = baseline_record_base(art, model, inst);
        ranking_line["task"] = "ranking";
        ranking_line["p_u"] = ranked.p_u;
        ranking_line["k_total"] = ranked.k_total;
        writer.write(ranking_line);
    }
    out.report = metrics::aggregate(rating_outcomes, ranking_outcomes, 0);
    return out;
}

void run_pair_baselines(const RunConfig& cfg, const PairArtifacts& art, RunResult& res) {
    const std::string slug = slugify(art.config.name);
    const std::string models_dir = cfg.output_dir + "/models";
    fs::create_directories(models_dir);
    const auto& train = art.split.train;

    const auto tgt_model = baselines::train_mf(train.target.interactions, cfg.baselines.mf);
    baselines::save_mf(tgt_model, models_dir + "/" + slug + "-tgt.bin");
    res.baselines.push_back(evaluate_baseline(
        cfg, art, "TGT", [&](const std::string& u, const std::string& i) {
            return baselines::predict_mf(tgt_model, u, i);
        }));

    const auto cmf_model = baselines::train_cmf(train.source.interactions,
                                                train.target.interactions, cfg.baselines.mf);
    baselines::save_cmf(cmf_model, models_dir + "/" + slug + "-cmf.bin");
    res.baselines.push_back(evaluate_baseline(
        cfg, art, "CMF", [&](const std::string& u, const std::string& i) {
            return baselines::predict_cmf(cmf_model, u, i);
        }));

    const auto src_model = baselines::train_mf(train.source.interactions, cfg.baselines.mf);
    const auto mapper =
        baselines::train_mapper(src_model, tgt_model, train.overlap_users, cfg.baselines.mapper);
    baselines::save_mf(src_model, models_dir + "/" + slug + "-emcdr-src.bin");
    baselines::save_mapper(mapper, models_dir + "/" + slug + "-emcdr-mapper.bin");
    res.baselines.push_back(evaluate_baseline(
        cfg, art, "EMCDR", [&](const std::string& u, const std::string& i) {
            return baselines::predict_mapped(mapper, src_model, tgt_model, u, i);
        }));

    res.training_curves[slug] = json{{"tgt", tgt_model.epoch_loss},
                                     {"cmf", cmf_model.epoch_loss},
                                     {"emcdr_source", src_model.epoch_loss},
                                     {"emcdr_mapper", mapper.epoch_loss}};
}

json pair_summary_json(const PairArtifacts& art) {
    return json{{"name", art.config.name},
                {"slug", slugify(art.config.name)},
                {"source_domain", art.full.source.domain},
                {"target_domain", art.full.target.domain},
                {"stats", art.stats.to_json()},
                {"checksums",
                 {{"source_reviews", art.full.source.source_checksum},
                  {"source_metadata", art.full.source.catalog_checksum},
                  {"target_reviews", art.full.target.source_checksum},
                  {"target_metadata", art.full.target.catalog_checksum}}},
                {"instances", art.instances.size()},
                {"sample",
                 {{"eligible_users", art.sample_stats.eligible_users},
                  {"pool_size", art.sample_stats.pool_size},
                  {"sampled", art.sample_stats.sampled},
                  {"skipped_negative_shortage", art.sample_stats.skipped_negative_shortage},
                  {"skipped_duplicate_titles", art.sample_stats.skipped_duplicate_titles}}}};
}

json build_report_json(const RunConfig& cfg, const RunResult& res) {
    json cells = json::array();
    json failure_rates = json::object();
    for (const auto& c : res.cells) {
        json metrics_json;
        if (c.completed) metrics_json = c.report.to_json();
        cells.push_back(json{{"pair", c.pair_name},
                             {"model", c.model_name},
                             {"variant", variant_to_json(c.variant)},
                             {"completed", c.completed},
                             {"partial", c.partial},
                             {"error", c.error},
                             {"records", c.records_path},
                             {"instances_total", c.instances_total},
                             {"instances_run", c.instances_run},
                             {"tokens", {{"input", c.tokens_input}, {"output", c.tokens_output}}},
                             {"metrics", metrics_json},
                             {"diagnostics", c.diagnostics}});
        if (c.completed)
            failure_rates[slugify(c.pair_name) + "/" + c.model_name + "/" + c.variant.id()] =
                c.report.parse_failure_rate;
    }
    json baselines = json::array();
    for (const auto& b : res.baselines)
        baselines.push_back(json{{"pair", b.pair_name},
                                 {"model", b.model_name},
                                 {"records", b.records_path},
                                 {"metrics", b.report.to_json()}});

    json templates = json::object();
    for (const char* name : {"with_injection_rating.tmpl", "with_injection_ranking.tmpl",
                             "no_injection_rating.tmpl", "no_injection_ranking.tmpl"}) {
        const std::string path = cfg.templates_dir + "/" + name;
        if (fs::exists(path)) templates[name] = digest::sha256_file_hex(path);
    }

    // where the run lands on disk must not change what it reports
    json digestible = cfg.to_json();
    digestible.erase("output_dir");

    return json{{"schema", "cdrbench-report-v1"},
                {"pairs", res.pair_summaries},
                {"cells", cells},
                {"baselines", baselines},
                {"training_curves", res.training_curves},
                {"reference", reference_results()},
                {"provenance",
                 {{"config_digest", digest::sha256_hex(digestible.dump())},
                  {"split",
                   {{"seed", cfg.split.seed},
                    {"test_size", cfg.split.test_size},
                    {"history_cap", cfg.split.history_cap},
                    {"negatives_per_positive", cfg.split.negatives_per_positive}}},
                  {"label_map", cfg.label_map.to_json()},
                  {"label_map_name", cfg.label_map_name},
                  {"similarity_threshold", cfg.similarity_threshold},
                  {"prompt_char_budget", cfg.prompt_char_budget},
                  {"templates", templates},
                  {"parse_failure_rates", failure_rates},
                  {"errors", res.errors}}}};
}

void emit_ablation_data(const RunConfig& cfg, const json& report) {
    bool any_medium = false;
    for (const auto& c : report["cells"])
        if (c["variant"]["context"] == "medium") any_medium = true;
    if (!any_medium) return;

    jsonl::Writer w(cfg.output_dir + "/reports/ablation.jsonl");
    for (const auto& c : report["cells"]) {
        if (!c["completed"].get<bool>()) continue;
        const json& m = c["metrics"];
        for (const char* metric : {"mrr_at_10", "ndcg_at_10", "mae", "rmse"}) {
            if (m.contains(metric) && !m[metric].is_null())
                w.write(json{{"pair", c["pair"]},
                             {"model", c["model"]},
                             {"injection", c["variant"]["injection"]},
                             {"task", c["variant"]["task"]},
                             {"context", c["variant"]["context"]},
                             {"metric", metric},
                             {"value", m[metric]}});
        }
    }
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg) {
    cfg.validate();
    for (const char* sub : {"", "/corpus", "/evalsets", "/results", "/reports", "/cache"})
        fs::create_directories(cfg.output_dir + sub);

    const auto lib = promptgen::PromptLibrary::load(cfg.templates_dir);
    gateway::Gateway gw(cfg.gateway_options);
    gateway::ResponseCache cache(cfg.output_dir + "/cache");
    std::int64_t budget_remaining = cfg.cost_ceiling_tokens;

    RunResult res;
    for (const auto& pair : cfg.pairs) {
        PairArtifacts art;
        try {
            art = prepare_pair(cfg, pair);
        } catch (const std::exception& e) {
            const std::string msg = "pair " + pair.name + ": " + e.what();
            std::cerr << "runner: " << msg << "\n";
            res.errors.push_back(msg);
            continue;
        }
        res.pair_summaries.push_back(pair_summary_json(art));

        for (const auto& cell : cfg.cells) {
            CellOutcome outcome;
            try {
                outcome = run_cell(cfg, cell, art, lib, gw, cache, budget_remaining);
            } catch (const std::exception& e) {
                outcome.pair_name = pair.name;
                outcome.model_name = cell.model.model_name;
                outcome.variant = cell.variant;
                outcome.instances_total = art.instances.size();
                outcome.completed = false;
                outcome.error = e.what();
                std::cerr << "runner: cell " << cell.model.model_name << "/"
                          << cell.variant.id() << " on " << pair.name << " failed: " << e.what()
                          << "\n";
            }
            res.cells.push_back(std::move(outcome));
        }

        if (cfg.baselines.enabled) {
            try {
                run_pair_baselines(cfg, art, res);
            } catch (const std::exception& e) {
                const std::string msg = "baselines on " + pair.name + ": " + e.what();
                std::cerr << "runner: " << msg << "\n";
                res.errors.push_back(msg);
            }
        }
    }

    bool any_usable = !res.baselines.empty();
    bool any_incomplete = !res.errors.empty();
    for (const auto& c : res.cells) {
        if (c.completed)
            any_usable = true;
        if (!c.completed || c.partial) any_incomplete = true;
    }
    res.exit_code = !any_usable ? kExitFatal : (any_incomplete ? kExitPartial : kExitComplete);

    const json report = build_report_json(cfg, res);
    write_text_file(cfg.output_dir + "/reports/report.json", report.dump(2) + "\n");
    write_text_file(cfg.output_dir + "/reports/report.txt", render_text_report(report));
    emit_ablation_data(cfg, report);
    // volatile observability data lives outside the deterministic report
    write_text_file(cfg.output_dir + "/reports/run_stats.json",
                    json{{"cache_hits", cache.hits()}, {"cache_misses", cache.misses()}}.dump(2) +
                        "\n");
    return res;
}

RunResult run_context_ablation(const RunConfig& cfg) {
    RunConfig expanded = cfg;
    expanded.cells.clear();
    std::vector<std::string> seen;
    for (const auto& cell : cfg.cells) {
        for (auto context : {promptgen::Context::high, promptgen::Context::medium}) {
            CellConfig cc = cell;
            cc.variant.context = context;
            const std::string key = cc.model.model_name + "/" + cc.variant.id();
            if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
                seen.push_back(key);
                expanded.cells.push_back(std::move(cc));
            }
        }
    }
    return run_experiment(expanded);
}

metrics::MetricsReport aggregate_records_file(const std::string& path) {
    std::vector<metrics::RatingOutcome> rating_outcomes;
    std::vector<metrics::RankingOutcome> ranking_outcomes;
    std::size_t failures = 0;
    jsonl::for_each_record(path, [&](std::size_t, const json& rec) {
        if (rec.value("kind", "") != "result") return;
        if (!rec.value("parsed", true)) {
            ++failures;
            return;
        }
        if (rec.contains("p_u"))
            ranking_outcomes.push_back(
                {rec.at("p_u").get<int>(), rec.at("k_total").get<int>()});
        else if (rec.contains("y_hat"))
            rating_outcomes.push_back(
                {rec.at("y").get<double>(), rec.at("y_hat").get<double>()});
    });
    return metrics::aggregate(rating_outcomes, ranking_outcomes, failures);
}

json reference_results() {
    // MRR@10 / NDCG@10 per pair for the ranking task; MAE / RMSE for the
    // rating task. Published comparison numbers for the three Amazon
    // review pairs these prompts were introduced on.
    const auto row = [](const char* model, const char* kind,
                        std::initializer_list<std::initializer_list<double>> values) {
        json v = json::array();
        for (const auto& pv : values) v.push_back(std::vector<double>(pv));
        return json{{"model", model}, {"kind", kind}, {"values", v}};
    };
    json ranking = json::array();
    ranking.push_back(row("gpt-3.5-with", "llm", {{0.303, 0.379}, {0.342, 0.408}, {0.0188, 0.0219}}));
    ranking.push_back(row("gpt-3.5-no", "llm", {{0.233, 0.316}, {0.221, 0.296}, {0.0099, 0.0123}}));
    ranking.push_back(row("gpt-4-with", "llm", {{0.308, 0.383}, {0.341, 0.411}, {0.0191, 0.0223}}));
    ranking.push_back(row("gpt-4-no", "llm", {{0.239, 0.317}, {0.206, 0.281}, {0.0108, 0.0136}}));
    ranking.push_back(row("gpt-4o-with", "llm", {{0.305, 0.378}, {0.339, 0.412}, {0.0193, 0.0213}}));
    ranking.push_back(row("gpt-4o-no", "llm", {{0.239, 0.318}, {0.229, 0.294}, {0.0098, 0.0118}}));
    ranking.push_back(
        row("PTUPCDR", "baseline", {{0.2596, 0.3646}, {0.2611, 0.3822}, {0.0902, 0.1646}}));
    ranking.push_back(
        row("UniCDR", "baseline", {{0.2171, 0.2787}, {0.2127, 0.2752}, {0.0184, 0.2507}}));
    ranking.push_back(
        row("DisenCDR", "baseline", {{0.1652, 0.2866}, {0.1686, 0.3085}, {0.1292, 0.2008}}));

    json rating = json::array();
    rating.push_back(row("llama-2-7b-with", "llm", {{1.849, 2.377}, {1.872, 2.361}, {1.946, 2.371}}));
    rating.push_back(row("llama-2-7b-no", "llm", {{1.862, 2.396}, {1.904, 2.394}, {1.959, 2.385}}));
    rating.push_back(row("llama-2-13b-with", "llm", {{1.589, 1.973}, {1.624, 2.019}, {1.646, 1.981}}));
    rating.push_back(row("llama-2-13b-no", "llm", {{1.682, 2.101}, {1.743, 2.208}, {1.715, 2.161}}));
    rating.push_back(row("llama-3-8b-with", "llm", {{1.611, 2.037}, {1.704, 2.137}, {1.583, 1.941}}));
    rating.push_back(row("llama-3-8b-no", "llm", {{1.491, 1.859}, {1.367, 1.729}, {1.489, 1.817}}));
    rating.push_back(row("gpt-3.5-with", "llm", {{1.611, 1.446}, {1.772, 1.504}, {1.705, 1.456}}));
    rating.push_back(row("gpt-3.5-no", "llm", {{1.512, 1.382}, {1.391, 1.314}, {1.164, 1.196}}));
    rating.push_back(row("gpt-4-with", "llm", {{1.658, 1.448}, {1.822, 1.517}, {1.666, 1.449}}));
    rating.push_back(row("gpt-4-no", "llm", {{1.611, 1.411}, {1.514, 1.313}, {1.148, 1.186}}));
    rating.push_back(row("gpt-4o-with", "llm", {{1.662, 1.445}, {1.811, 1.511}, {1.763, 1.475}}));
    rating.push_back(row("gpt-4o-no", "llm", {{1.488, 1.369}, {1.339, 1.293}, {1.156, 1.187}}));
    rating.push_back(row("TGT", "baseline", {{3.941, 4.221}, {4.323, 4.445}, {4.102, 4.289}}));
    rating.push_back(row("CMF", "baseline", {{1.598, 2.061}, {1.218, 1.567}, {1.627, 2.136}}));
    rating.push_back(row("EMCDR", "baseline", {{1.557, 1.992}, {1.422, 1.685}, {2.299, 2.735}}));
    rating.push_back(row("PTUPCDR", "baseline", {{1.182, 1.571}, {1.016, 1.312}, {1.711, 2.376}}));

    return json{{"pairs", {"Books->Movies", "Movies->Music", "Electronics->Food"}},
                {"ranking", ranking},
                {"rating", rating}};
}

namespace {

std::string fmt(double v, int precision) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

struct TableRow {
    std::string label;
    bool is_llm = false;
    bool partial = false;
    // per pair: the two metric values, or nothing
    std::vector<std::optional<std::pair<double, double>>> values;
};

std::string render_table(const std::string& title, const std::vector<std::string>& pair_names,
                         const char* m1, const char* m2, int precision,
                         bool higher_is_better, std::vector<TableRow> rows) {
    // star the best LLM value per (pair, metric)
    const std::size_t n_pairs = pair_names.size();
    std::vector<std::optional<double>> best1(n_pairs), best2(n_pairs);
    for (const auto& r : rows) {
        if (!r.is_llm) continue;
        for (std::size_t p = 0; p < n_pairs; ++p) {
            if (!r.values[p]) continue;
            const auto better = [&](double v, std::optional<double>& cur) {
                if (!cur || (higher_is_better ? v > *cur : v < *cur)) cur = v;
            };
            better(r.values[p]->first, best1[p]);
            better(r.values[p]->second, best2[p]);
        }
    }

    std::size_t label_w = 12;
    for (const auto& r : rows) label_w = std::max(label_w, r.label.size() + 2);
    const std::size_t col_w = 22;

    std::ostringstream os;
    os << title << "\n";
    os << pad("", label_w);
    for (const auto& p : pair_names) os << pad(p, col_w);
    os << "\n" << pad("", label_w);
    for (std::size_t p = 0; p < n_pairs; ++p)
        os << pad(std::string(m1) + " / " + m2, col_w);
    os << "\n";
    for (const auto& r : rows) {
        os << pad(r.label, label_w);
        for (std::size_t p = 0; p < n_pairs; ++p) {
            std::string cell = "-";
            if (r.values[p]) {
                const auto [v1, v2] = *r.values[p];
                std::string s1 = fmt(v1, precision);
                std::string s2 = fmt(v2, precision);
                if (r.is_llm && best1[p] && v1 == *best1[p]) s1 += "*";
                if (r.is_llm && best2[p] && v2 == *best2[p]) s2 += "*";
                cell = s1 + " / " + s2;
                if (r.partial) cell += " (partial)";
            }
            os << pad(cell, col_w);
        }
        os << "\n";
    }
    return os.str();
}

std::optional<std::pair<double, double>> metric_pair(const json& metrics, const char* a,
                                                     const char* b) {
    if (metrics.is_null() || !metrics.contains(a) || metrics[a].is_null() ||
        !metrics.contains(b) || metrics[b].is_null())
        return std::nullopt;
    return std::make_pair(metrics[a].get<double>(), metrics[b].get<double>());
}

}  // namespace

std::string render_text_report(const json& report) {
    std::ostringstream os;
    os << "cdrbench report\n";
    os << "===============\n\n";

    std::vector<std::string> pair_names;
    os << "Corpus\n------\n";
    for (const auto& p : report["pairs"]) {
        pair_names.push_back(p["name"].get<std::string>());
        const json& s = p["stats"];
        os << p["name"].get<std::string>() << " (" << p["source_domain"].get<std::string>()
           << " -> " << p["target_domain"].get<std::string>() << "): items "
           << s["items_source"] << "/" << s["items_target"] << ", users " << s["users_source"]
           << "/" << s["users_target"] << " (overlap " << s["users_overlap"] << "), ratings "
           << s["ratings_source"] << "/" << s["ratings_target"] << ", eval instances "
           << p["instances"] << "\n";
    }
    os << "\n";

    const auto pair_index = [&](const std::string& name) {
        for (std::size_t i = 0; i < pair_names.size(); ++i)
            if (pair_names[i] == name) return i;
        return pair_names.size();
    };

    const auto collect_rows = [&](const char* task, const char* m1, const char* m2) {
        std::vector<TableRow> rows;
        const auto find_row = [&](const std::string& label, bool is_llm) -> TableRow& {
            for (auto& r : rows)
                if (r.label == label) return r;
            rows.push_back({label, is_llm, false,
                            std::vector<std::optional<std::pair<double, double>>>(
                                pair_names.size())});
            return rows.back();
        };
        for (const auto& c : report["cells"]) {
            if (c["variant"]["task"] != task) continue;
            std::string label = c["model"].get<std::string>() + "-" +
                                c["variant"]["injection"].get<std::string>();
            if (c["variant"]["context"] == "medium") label += " (medium)";
            TableRow& row = find_row(label, true);
            const std::size_t p = pair_index(c["pair"].get<std::string>());
            if (p >= pair_names.size()) continue;
            if (c["completed"].get<bool>()) {
                row.values[p] = metric_pair(c["metrics"], m1, m2);
                if (c["partial"].get<bool>()) row.partial = true;
            }
        }
        for (const auto& b : report["baselines"]) {
            TableRow& row = find_row(b["model"].get<std::string>(), false);
            const std::size_t p = pair_index(b["pair"].get<std::string>());
            if (p >= pair_names.size()) continue;
            row.values[p] = metric_pair(b["metrics"], m1, m2);
        }
        return rows;
    };

    auto ranking_rows = collect_rows("ranking", "mrr_at_10", "ndcg_at_10");
    if (!ranking_rows.empty())
        os << render_table("Ranking", pair_names, "MRR@10", "NDCG@10", 4, true,
                           std::move(ranking_rows))
           << "\n";
    auto rating_rows = collect_rows("rating", "mae", "rmse");
    if (!rating_rows.empty())
        os << render_table("Rating", pair_names, "MAE", "RMSE", 3, false, std::move(rating_rows))
           << "\n";

    // context comparison whenever both levels ran for a (pair, model,
    // injection, task) combination
    std::ostringstream ablation;
    for (const auto& hi : report["cells"]) {
        if (hi["variant"]["context"] != "high" || !hi["completed"].get<bool>()) continue;
        for (const auto& med : report["cells"]) {
            if (med["variant"]["context"] != "medium" || !med["completed"].get<bool>()) continue;
            if (med["pair"] != hi["pair"] || med["model"] != hi["model"] ||
                med["variant"]["injection"] != hi["variant"]["injection"] ||
                med["variant"]["task"] != hi["variant"]["task"])
                continue;
            const bool ranking = hi["variant"]["task"] == "ranking";
            const auto h = metric_pair(hi["metrics"], ranking ? "mrr_at_10" : "mae",
                                       ranking ? "ndcg_at_10" : "rmse");
            const auto m = metric_pair(med["metrics"], ranking ? "mrr_at_10" : "mae",
                                       ranking ? "ndcg_at_10" : "rmse");
            if (!h || !m) continue;
            const int prec = ranking ? 4 : 3;
            ablation << hi["pair"].get<std::string>() << ", " << hi["model"].get<std::string>()
                     << "-" << hi["variant"]["injection"].get<std::string>() << ", "
                     << hi["variant"]["task"].get<std::string>() << ": high "
                     << fmt(h->first, prec) << " / " << fmt(h->second, prec) << ", medium "
                     << fmt(m->first, prec) << " / " << fmt(m->second, prec) << "\n";
        }
    }
    if (!ablation.str().empty())
        os << "Context ablation (high vs medium)\n---------------------------------\n"
           << ablation.str() << "\n";

    const json& ref = report["reference"];
    std::vector<std::string> ref_pairs;
    for (const auto& p : ref["pairs"]) ref_pairs.push_back(p.get<std::string>());
    const auto ref_rows = [&](const char* task) {
        std::vector<TableRow> rows;
        for (const auto& r : ref[task]) {
            TableRow row;
            row.label = r["model"].get<std::string>();
            row.is_llm = r["kind"] == "llm";
            for (const auto& v : r["values"])
                row.values.push_back(std::make_pair(v[0].get<double>(), v[1].get<double>()));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    os << "Published reference results (Amazon review pairs)\n"
       << "--------------------------------------------------\n";
    os << render_table("Ranking (reference)", ref_pairs, "MRR@10", "NDCG@10", 4, true,
                       ref_rows("ranking"))
       << "\n";
    os << render_table("Rating (reference)", ref_pairs, "MAE", "RMSE", 3, false,
                       ref_rows("rating"));
    return os.str();
}

int verify_run(const std::string& output_dir) {
    const std::string report_path = output_dir + "/reports/report.json";
    std::ifstream in(report_path);
    if (!in) {
        std::cerr << "verify: missing " << report_path << "\n";
        return 1;
    }
    const json report = json::parse(in, nullptr, false);
    if (report.is_discarded()) {
        std::cerr << "verify: " << report_path << " is not valid JSON\n";
        return 1;
    }

    bool ok = true;
    std::size_t checked = 0;
    const auto check = [&](const json& entry, const std::string& label) {
        const std::string records = output_dir + "/" + entry["records"].get<std::string>();
        metrics::MetricsReport recomputed;
        try {
            recomputed = aggregate_records_file(records);
        } catch (const std::exception& e) {
            std::cerr << "verify: FAIL " << label << ": " << e.what() << "\n";
            ok = false;
            return;
        }
        const auto stored = metrics::MetricsReport::from_json(entry["metrics"]);
        if (recomputed == stored) {
            std::cout << "verify: OK " << label << "\n";
            ++checked;
        } else {
            std::cerr << "verify: FAIL " << label << ": stored " << stored.to_json().dump()
                      << " != recomputed " << recomputed.to_json().dump() << "\n";
            ok = false;
        }
    };

    for (const auto& c : report["cells"]) {
        if (!c["completed"].get<bool>()) continue;
        check(c, c["pair"].get<std::string>() + "/" + c["model"].get<std::string>() + "/" +
                     c["variant"]["id"].get<std::string>());
    }
    for (const auto& b : report["baselines"])
        check(b, b["pair"].get<std::string>() + "/" + b["model"].get<std::string>());

    if (checked == 0) {
        std::cerr << "verify: nothing to check\n";
        return 1;
    }
    std::cout << "verify: " << checked << " result set(s) match their records\n";
    return ok ? 0 : 1;
}

}  // namespace cdrbench::runner
