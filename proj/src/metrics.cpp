// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/metrics.hpp"

#include <cmath>

namespace cdrbench::metrics {

namespace {

void require_nonempty(std::size_t n, const char* what) {
    if (n == 0) throw UndefinedMetricError(std::string(what) + " is undefined on an empty outcome list");
}

nlohmann::json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> opt_from_json(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

double rmse(const std::vector<RatingOutcome>& outcomes) {
    require_nonempty(outcomes.size(), "rmse");
    double ss = 0.0;
    for (const auto& o : outcomes) {
        const double d = o.y - o.y_hat;
        ss += d * d;
    }
    return std::sqrt(ss / double(outcomes.size()));
}

double mae(const std::vector<RatingOutcome>& outcomes) {
    require_nonempty(outcomes.size(), "mae");
    double s = 0.0;
    for (const auto& o : outcomes) s += std::fabs(o.y - o.y_hat);
    return s / double(outcomes.size());
}

double mrr_at_k(const std::vector<RankingOutcome>& outcomes, int k) {
    require_nonempty(outcomes.size(), "mrr");
    double s = 0.0;
    for (const auto& o : outcomes)
        if (o.p_u <= k) s += 1.0 / double(o.p_u);
    return s / double(outcomes.size());
}

double ndcg_at_k(const std::vector<RankingOutcome>& outcomes, int k) {
    require_nonempty(outcomes.size(), "ndcg");
    double s = 0.0;
    for (const auto& o : outcomes)
        if (o.p_u <= k) s += std::log(2.0) / std::log(double(o.p_u) + 1.0);
    return s / double(outcomes.size());
}

MetricsReport aggregate(const std::vector<RatingOutcome>& rating_outcomes,
                        const std::vector<RankingOutcome>& ranking_outcomes,
                        std::size_t parse_failures) {
    if (rating_outcomes.empty() && ranking_outcomes.empty())
        throw UndefinedMetricError("aggregate requires at least one nonempty outcome list");
    MetricsReport r;
    r.n_rating = rating_outcomes.size();
    r.n_ranking = ranking_outcomes.size();
    r.n_evaluated = r.n_rating + r.n_ranking;
    if (!rating_outcomes.empty()) {
        r.rmse = rmse(rating_outcomes);
        r.mae = mae(rating_outcomes);
    }
    if (!ranking_outcomes.empty()) {
        r.mrr_at_10 = mrr_at_k(ranking_outcomes, 10);
        r.ndcg_at_10 = ndcg_at_k(ranking_outcomes, 10);
    }
    r.parse_failures = parse_failures;
    r.parse_failure_rate =
        double(parse_failures) / double(parse_failures + r.n_evaluated);
    return r;
}

nlohmann::json MetricsReport::to_json() const {
    return nlohmann::json{{"n_evaluated", n_evaluated},
                          {"n_rating", n_rating},
                          {"n_ranking", n_ranking},
                          {"rmse", opt_to_json(rmse)},
                          {"mae", opt_to_json(mae)},
                          {"mrr_at_10", opt_to_json(mrr_at_10)},
                          {"ndcg_at_10", opt_to_json(ndcg_at_10)},
                          {"parse_failure_rate", parse_failure_rate},
                          {"parse_failures", parse_failures}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.n_evaluated = j.at("n_evaluated").get<std::size_t>();
    r.n_rating = j.at("n_rating").get<std::size_t>();
    r.n_ranking = j.at("n_ranking").get<std::size_t>();
    r.rmse = opt_from_json(j.at("rmse"));
    r.mae = opt_from_json(j.at("mae"));
    r.mrr_at_10 = opt_from_json(j.at("mrr_at_10"));
    r.ndcg_at_10 = opt_from_json(j.at("ndcg_at_10"));
    r.parse_failure_rate = j.at("parse_failure_rate").get<double>();
    r.parse_failures = j.at("parse_failures").get<std::size_t>();
    return r;
}

}  // namespace cdrbench::metrics
