// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace cdrbench::metrics {

struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RatingOutcome {
    double y = 0.0;      // true rating
    double y_hat = 0.0;  // predicted rating
};

struct RankingOutcome {
    int p_u = 1;      // 1-based rank of the positive item
    int k_total = 1;  // size of the ranked candidate list
};

// Aggregated metrics for one evaluation cell. Fields for a task that was not
// run stay empty.
struct MetricsReport {
    std::size_t n_evaluated = 0;
    std::size_t n_rating = 0;
    std::size_t n_ranking = 0;
    std::optional<double> rmse;
    std::optional<double> mae;
    std::optional<double> mrr_at_10;
    std::optional<double> ndcg_at_10;
    double parse_failure_rate = 0.0;
    std::size_t parse_failures = 0;

    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    bool operator==(const MetricsReport&) const = default;
};

double rmse(const std::vector<RatingOutcome>& outcomes);
double mae(const std::vector<RatingOutcome>& outcomes);

// Mean of 1/p_u over all outcomes, zero contribution past the cutoff.
double mrr_at_k(const std::vector<RankingOutcome>& outcomes, int k = 10);

// Mean of log(2)/log(p_u + 1) over all outcomes, zero past the cutoff.
// The log ratio is base-invariant; natural log is used.
double ndcg_at_k(const std::vector<RankingOutcome>& outcomes, int k = 10);

// Throws UndefinedMetricError when both outcome lists are empty.
MetricsReport aggregate(const std::vector<RatingOutcome>& rating_outcomes,
                        const std::vector<RankingOutcome>& ranking_outcomes,
                        std::size_t parse_failures);

}  // namespace cdrbench::metrics
