// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Classical reference models trained on the same splits the prompts
// see: target-only matrix factorization, collective MF with shared user
// factors, and an embedding-mapping model that learns a source-to-target
// bridge over overlap users. All training is seeded SGD with a fixed
// draw order, so a (data, hyperparams, seed) triple reproduces bit-equal
// factors on the same platform.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdrbench/corpus.hpp"
#include "cdrbench/metrics.hpp"
#include "cdrbench/sampler.hpp"

namespace cdrbench::baselines {

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MFConfig {
    int dimension = 10;
    double regularization = 0.01;
    double learning_rate = 0.01;
    int epochs = 30;
    std::uint64_t seed = 13;
};

struct MFModel {
    double global_bias = 0.0;
    int dimension = 0;
    std::map<std::string, std::vector<double>> user_factors;
    std::map<std::string, std::vector<double>> item_factors;
    std::vector<double> epoch_loss;  // full objective after each epoch
};

struct CMFModel {
    double global_bias_source = 0.0;
    double global_bias_target = 0.0;
    int dimension = 0;
    std::map<std::string, std::vector<double>> user_factors;  // shared across domains
    std::map<std::string, std::vector<double>> item_factors_source;
    std::map<std::string, std::vector<double>> item_factors_target;
    std::vector<double> epoch_loss;
};

struct MapperConfig {
    int hidden_dim = 32;
    double learning_rate = 0.01;
    int epochs = 200;
    std::uint64_t seed = 13;
};

// f(x) = w2 * tanh(w1 x + b1) + b2, minimizing sum ||f(x_u) - y_u||^2
// over overlap users.
struct MLPMapper {
    int input_dim = 0;
    int hidden_dim = 0;
    std::vector<double> w1;  // hidden_dim x input_dim, row major
    std::vector<double> b1;  // hidden_dim
    std::vector<double> w2;  // input_dim x hidden_dim, row major
    std::vector<double> b2;  // input_dim
    std::vector<double> epoch_loss;  // mean squared mapping error per epoch

    std::vector<double> apply(std::span<const double> x) const;
};

struct MapperGradients {
    std::vector<double> w1, b1, w2, b2;
};

inline constexpr double kRatingMin = 0.5;
inline constexpr double kRatingMax = 5.0;

MFModel train_mf(const std::vector<corpus::Interaction>& interactions, const MFConfig& cfg);

// Prediction clamps to the rating scale; unknown users or items fall
// back to the global bias.
double predict_mf(const MFModel& model, const std::string& user_id, const std::string& item_id);

CMFModel train_cmf(const std::vector<corpus::Interaction>& source,
                   const std::vector<corpus::Interaction>& target, const MFConfig& cfg);

// Target-domain prediction from a collective model.
double predict_cmf(const CMFModel& model, const std::string& user_id, const std::string& item_id);

// Squared mapping loss and its analytic gradients for one (x, y) pair;
// the finite-difference check in the tests leans on these.
double mapper_loss(const MLPMapper& m, std::span<const double> x, std::span<const double> y);
MapperGradients mapper_gradients(const MLPMapper& m, std::span<const double> x,
                                 std::span<const double> y);

// Learns the bridge from source user factors to target user factors
// over `overlap_users` present in both models. Needs at least 10 such
// users.
MLPMapper train_mapper(const MFModel& source, const MFModel& target,
                       const std::set<std::string>& overlap_users, const MapperConfig& cfg);

// Cold-start prediction: map the user's source factor into the target
// space, then dot with the target item factor. Falls back to the target
// bias when the user or item is unknown.
double predict_mapped(const MLPMapper& mapper, const MFModel& source, const MFModel& target,
                      const std::string& user_id, const std::string& item_id);

// Ranks an instance's candidates by model score (descending, stable, so
// ties keep candidate order) and reports the positive's 1-based rank.
metrics::RankingOutcome rank_with_model(
    const std::function<double(const std::string& user_id, const std::string& item_id)>& score,
    const sampler::EvalInstance& inst);

// Versioned binary checkpoints.
void save_mf(const MFModel& model, const std::string& path);
MFModel load_mf(const std::string& path);
void save_cmf(const CMFModel& model, const std::string& path);
CMFModel load_cmf(const std::string& path);
void save_mapper(const MLPMapper& mapper, const std::string& path);
MLPMapper load_mapper(const std::string& path);

}  // namespace cdrbench::baselines
