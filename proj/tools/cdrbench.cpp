// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end. Verbs mirror the pipeline stages: ingest raw
// review files, build a domain pair, draw the evaluation sample, run the
// configured experiment grid, re-render or verify an existing run.

#include <exception>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "cdrbench/corpus.hpp"
#include "cdrbench/runner.hpp"
#include "cdrbench/sampler.hpp"

namespace {

int cmd_ingest(const std::string& reviews, const std::string& metadata,
               const std::string& domain, const std::string& out) {
    auto ds = cdrbench::corpus::ingest_reviews(reviews, domain);
    ds = cdrbench::corpus::join_titles(ds, metadata);
    cdrbench::corpus::save_dataset(ds, out);
    std::cout << domain << ": " << ds.interactions.size() << " interactions, "
              << ds.catalog.size() << " catalog titles (" << ds.malformed_lines
              << " malformed, " << ds.duplicates_dropped << " duplicate, "
              << ds.missing_title_dropped << " untitled dropped)\n";
    return 0;
}

int cmd_pair(const cdrbench::runner::DomainFiles& source,
             const cdrbench::runner::DomainFiles& target, const std::string& name,
             const std::string& out) {
    auto src = cdrbench::corpus::join_titles(
        cdrbench::corpus::ingest_reviews(source.reviews, source.domain), source.metadata);
    auto tgt = cdrbench::corpus::join_titles(
        cdrbench::corpus::ingest_reviews(target.reviews, target.domain), target.metadata);
    const auto pair = cdrbench::corpus::build_pair(src, tgt, name);
    cdrbench::corpus::save_pair(pair, out);
    const auto stats = cdrbench::corpus::corpus_stats(pair);
    std::cout << stats.to_json().dump(2) << "\n";
    return 0;
}

int cmd_sample(const std::string& pair_path, const cdrbench::sampler::SplitConfig& cfg,
               const std::string& out_evalset, const std::string& out_train) {
    const auto pair = cdrbench::corpus::load_pair(pair_path);
    const auto split = cdrbench::sampler::split(pair, cfg);
    cdrbench::sampler::SampleStats stats;
    const auto instances = cdrbench::sampler::sample_eval_set(pair, split, cfg, &stats);
    cdrbench::sampler::save_eval_set(instances, out_evalset);
    if (!out_train.empty()) cdrbench::corpus::save_pair(split.train, out_train);
    std::cout << "eligible users: " << stats.eligible_users << ", pool: " << stats.pool_size
              << ", sampled: " << stats.sampled
              << ", skipped (negatives): " << stats.skipped_negative_shortage
              << ", skipped (duplicate titles): " << stats.skipped_duplicate_titles << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& output_dir, bool ablate) {
    auto cfg = cdrbench::runner::RunConfig::load(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    const auto res = ablate ? cdrbench::runner::run_context_ablation(cfg)
                            : cdrbench::runner::run_experiment(cfg);
    std::size_t completed = 0;
    for (const auto& c : res.cells)
        if (c.completed) ++completed;
    std::cout << "cells completed: " << completed << "/" << res.cells.size()
              << ", baseline result sets: " << res.baselines.size() << "\n";
    for (const auto& e : res.errors) std::cout << "error: " << e << "\n";
    std::cout << "report: " << cfg.output_dir << "/reports/report.txt\n";
    return res.exit_code;
}

int cmd_report(const std::string& report_path) {
    std::ifstream in(report_path);
    if (!in) {
        std::cerr << "cannot open " << report_path << "\n";
        return 1;
    }
    const auto report = nlohmann::json::parse(in);
    std::cout << cdrbench::runner::render_text_report(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-domain recommendation benchmark"};
    app.require_subcommand(1);

    std::string reviews, metadata, domain, out;
    auto* ingest = app.add_subcommand("ingest", "parse one domain's review and metadata files");
    ingest->add_option("--reviews", reviews)->required();
    ingest->add_option("--metadata", metadata)->required();
    ingest->add_option("--domain", domain)->required();
    ingest->add_option("--out", out)->required();

    cdrbench::runner::DomainFiles src, tgt;
    std::string pair_name, pair_out;
    auto* pair = app.add_subcommand("pair", "build an overlap-filtered domain pair");
    pair->add_option("--source-reviews", src.reviews)->required();
    pair->add_option("--source-metadata", src.metadata)->required();
    pair->add_option("--source-domain", src.domain)->required();
    pair->add_option("--target-reviews", tgt.reviews)->required();
    pair->add_option("--target-metadata", tgt.metadata)->required();
    pair->add_option("--target-domain", tgt.domain)->required();
    pair->add_option("--name", pair_name)->required();
    pair->add_option("--out", pair_out)->required();

    std::string pair_path, evalset_out, train_out;
    cdrbench::sampler::SplitConfig split_cfg;
    auto* sample = app.add_subcommand("sample", "split a pair and draw the evaluation sample");
    sample->add_option("--pair", pair_path)->required();
    sample->add_option("--out-evalset", evalset_out)->required();
    sample->add_option("--out-train", train_out);
    sample->add_option("--seed", split_cfg.seed);
    sample->add_option("--test-size", split_cfg.test_size);
    sample->add_option("--history-cap", split_cfg.history_cap);
    sample->add_option("--negatives", split_cfg.negatives_per_positive);

    std::string config_path, output_dir;
    auto* run = app.add_subcommand("run", "execute the configured experiment grid");
    run->add_option("--config", config_path)->required();
    run->add_option("--output-dir", output_dir);

    std::string ablate_config, ablate_output;
    auto* ablate =
        app.add_subcommand("ablate", "run every cell at both high and medium context");
    ablate->add_option("--config", ablate_config)->required();
    ablate->add_option("--output-dir", ablate_output);

    std::string report_path;
    auto* report = app.add_subcommand("report", "render a stored report.json as text");
    report->add_option("--report", report_path)->required();

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify", "recompute metrics from per-instance records");
    verify->add_option("--output-dir", verify_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) return cmd_ingest(reviews, metadata, domain, out);
        if (*pair) return cmd_pair(src, tgt, pair_name, pair_out);
        if (*sample) return cmd_sample(pair_path, split_cfg, evalset_out, train_out);
        if (*run) return cmd_run(config_path, output_dir, false);
        if (*ablate) return cmd_run(ablate_config, ablate_output, true);
        if (*report) return cmd_report(report_path);
        if (*verify) return cdrbench::runner::verify_run(verify_dir);
    } catch (const std::exception& e) {
        std::cerr << "cdrbench: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
