// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: corpus preparation, eval-set construction,
// the (pair x model x variant) cell grid, classical baselines, and
// report emission. Reruns against a warm completion cache reproduce the
// report files byte for byte; everything volatile (cache hit counts)
// goes to a sidecar stats file instead.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdrbench/baselines.hpp"
#include "cdrbench/corpus.hpp"
#include "cdrbench/gateway.hpp"
#include "cdrbench/metrics.hpp"
#include "cdrbench/promptgen.hpp"
#include "cdrbench/respparse.hpp"
#include "cdrbench/sampler.hpp"

#include "json.hpp"

namespace cdrbench::runner {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DomainFiles {
    std::string domain;
    std::string reviews;
    std::string metadata;
};

struct PairConfig {
    std::string name;
    DomainFiles source;
    DomainFiles target;
    std::string corpus_file;  // optional prebuilt pair file; skips ingest
};

struct CellConfig {
    gateway::ModelSpec model;
    promptgen::PromptVariant variant;
};

struct BaselinesConfig {
    bool enabled = true;
    baselines::MFConfig mf;
    baselines::MapperConfig mapper;
};

struct RunConfig {
    std::vector<PairConfig> pairs;
    sampler::SplitConfig split;
    std::vector<CellConfig> cells;
    BaselinesConfig baselines;
    respparse::LabelMap label_map;
    std::string label_map_name = "prompt_anchored";
    std::string output_dir = "out";
    // projected-token budget for http cells across the whole run; cached
    // completions are free, so warm reruns always finish
    std::int64_t cost_ceiling_tokens = 0;
    gateway::GatewayOptions gateway_options;
    std::string templates_dir = "templates";
    double similarity_threshold = 0.85;
    std::size_t prompt_char_budget = promptgen::kDefaultCharBudget;

    static RunConfig load(const std::string& path);
    static RunConfig from_json(const json& j);
    json to_json() const;
    void validate() const;  // throws ConfigError
};

struct CellOutcome {
    std::string pair_name;
    std::string model_name;
    promptgen::PromptVariant variant;
    bool completed = false;  // produced defined metrics without error
    bool partial = false;    // stopped early at the cost ceiling
    std::string error;
    metrics::MetricsReport report;
    std::string records_path;  // relative to output_dir
    std::size_t instances_total = 0;
    std::size_t instances_run = 0;
    std::int64_t tokens_input = 0;
    std::int64_t tokens_output = 0;
    json diagnostics;  // parse diagnostics summary
};

struct BaselineOutcome {
    std::string pair_name;
    std::string model_name;  // TGT | CMF | EMCDR
    metrics::MetricsReport report;  // rating and ranking fields both set
    std::string records_path;
};

struct RunResult {
    std::vector<CellOutcome> cells;
    std::vector<BaselineOutcome> baselines;
    json pair_summaries = json::array();
    json training_curves = json::object();
    std::vector<std::string> errors;  // contained pair/baseline failures
    int exit_code = 1;  // 0 complete, 2 partial, 1 nothing usable
};

// Exit codes the CLI maps results and failures onto.
inline constexpr int kExitComplete = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

struct PairArtifacts {
    PairConfig config;
    corpus::PairedCorpus full;
    sampler::SplitResult split;
    std::vector<sampler::EvalInstance> instances;
    corpus::PairStats stats;
    sampler::SampleStats sample_stats;
};

// lowercase, alphanumerics kept, everything else collapsed to '-'
std::string slugify(const std::string& name);

// Loads or builds the paired corpus, train split, and eval set for one
// pair, persisting them under output_dir so later stages replay.
PairArtifacts prepare_pair(const RunConfig& cfg, const PairConfig& pair);

// Runs the full grid plus baselines and writes reports. Never throws for
// per-cell failures; those are contained and reflected in exit_code.
RunResult run_experiment(const RunConfig& cfg);

// run_experiment over the cell grid expanded to both context levels.
RunResult run_context_ablation(const RunConfig& cfg);

// Re-derives a metrics report from a per-instance records file.
metrics::MetricsReport aggregate_records_file(const std::string& path);

// Renders the human-readable report from the JSON report.
std::string render_text_report(const json& report);

// Recomputes every completed cell's metrics from its records and compares
// with the stored report. Returns 0 on agreement.
int verify_run(const std::string& output_dir);

// Published comparison numbers keyed by task; rendered into reports.
json reference_results();

}  // namespace cdrbench::runner
