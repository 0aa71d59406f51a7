// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Prompt construction from eval instances. The four prompt families
// (injection x task) live as template files on disk; rendering fills
// named slots and never string-replaces inside item titles. Context
// degradation (high -> medium) drops the framing paragraph and replaces
// domain names with neutral placeholders at the slot level.

#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdrbench/sampler.hpp"

namespace cdrbench::promptgen {

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Injection { with_injection, no_injection };
enum class Task { rating, ranking };
enum class Context { high, medium };

struct PromptVariant {
    Injection injection = Injection::with_injection;
    Task task = Task::rating;
    Context context = Context::high;

    // stable id like "with-rating-high", used in file names and reports
    std::string id() const;
    static PromptVariant parse(const std::string& injection, const std::string& task,
                               const std::string& context);
    bool operator==(const PromptVariant&) const = default;
};

// All eight injection x task x context combinations, in report order.
std::vector<PromptVariant> all_variants();

struct RenderedPrompt {
    std::string text;
    PromptVariant variant;
    std::string user_id;
    std::string item_id;
    std::size_t token_estimate = 0;  // ceil(chars / 4)

    bool operator==(const RenderedPrompt&) const = default;
};

// The six likelihood options the rating prompts offer, worst to best.
const std::vector<std::string>& likelihood_labels();

inline constexpr std::size_t kDefaultCharBudget = 32000;

// Neutral names used in place of real domain names at medium context.
inline constexpr const char* kMediumSourceName = "Domain A";
inline constexpr const char* kMediumTargetName = "Domain B";

// "5" for integral ratings, "4.5" otherwise; history bullets and prompts
// show ratings in this form.
std::string format_rating(double rating);

class PromptLibrary {
public:
    // Loads the four family templates from `templates_dir`:
    //   with_injection_rating.tmpl, with_injection_ranking.tmpl,
    //   no_injection_rating.tmpl,   no_injection_ranking.tmpl
    static PromptLibrary load(const std::string& templates_dir);

    RenderedPrompt render(const sampler::EvalInstance& inst, const PromptVariant& variant,
                          const std::string& source_domain, const std::string& target_domain,
                          std::size_t char_budget = kDefaultCharBudget) const;

    // Same constituents re-rendered at medium context. Idempotent.
    RenderedPrompt degrade_to_medium(const sampler::EvalInstance& inst, PromptVariant variant,
                                     const std::string& source_domain,
                                     const std::string& target_domain,
                                     std::size_t char_budget = kDefaultCharBudget) const;

private:
    // keyed by injection/task; raw template text
    std::map<std::string, std::string> templates_;
};

}  // namespace cdrbench::promptgen
