// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Recovery of structured predictions from raw model text: likelihood
// labels for the rating task, candidate permutations for the ranking
// task. Parsing is lenient about formatting but never invents data; text
// that yields nothing usable comes back as nullopt and is counted as a
// parse failure upstream.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace cdrbench::respparse {

using nlohmann::json;

// Rating values for the six likelihood labels, worst to best. Values
// must be strictly increasing; the prompt anchors the scale at 1.0-5.0,
// so the default spreads the labels evenly across that range.
struct LabelMap {
    std::array<double, 6> values{1.0, 1.8, 2.6, 3.4, 4.2, 5.0};

    // evenly spaced across the prompt's stated 1.0-5.0 scale
    static LabelMap prompt_anchored();
    // evenly spaced across the full 0.5-5.0 rating range
    static LabelMap full_range();
    static LabelMap evenly_spaced(double lo, double hi);
    static LabelMap preset(const std::string& name);  // "prompt_anchored" | "full_range"
    static LabelMap from_json(const json& j);

    json to_json() const;
    void validate() const;  // throws std::invalid_argument when not increasing
    bool operator==(const LabelMap&) const = default;
};

double label_to_rating(std::size_t label_index, const LabelMap& map);

struct ParsedRating {
    std::size_t label_index = 0;  // into likelihood_labels()
    bool ambiguous = false;       // text mentioned more than one distinct label
};

// Finds likelihood labels in free text, case-insensitively, preferring
// longer labels at the same position ("Very Unlikely" over "Unlikely").
// Result is the first label mentioned; nullopt when none appears.
std::optional<ParsedRating> parse_rating(const std::string& text);

enum class MatchTier { exact, normalized, fuzzy, appended };

struct ParsedRanking {
    // permutation[r] = candidate index ranked at position r; always a
    // full permutation of 0..k_total-1
    std::vector<std::size_t> permutation;
    std::vector<MatchTier> tiers;          // how each position was matched
    std::size_t dropped_hallucinations = 0;  // output items matching no candidate
    std::size_t appended_missing = 0;        // candidates absent from the output
};

// Recovers a candidate permutation from model text: takes the outermost
// bracketed list when present, otherwise one item per line. Items match
// candidates exactly, then under normalization, then by token-set
// similarity >= fuzzy_threshold. Duplicates keep the first occurrence;
// unmatched output is dropped; unmentioned candidates are appended in
// candidate order. Returns nullopt when nothing matches.
std::optional<ParsedRanking> parse_ranking(const std::string& text,
                                           const std::vector<std::string>& candidates,
                                           double fuzzy_threshold = 0.85);

// 1-based rank of the positive candidate in a parsed permutation.
std::size_t rank_of_positive(const ParsedRanking& parsed, std::size_t positive_index);

// Shared matching helpers (also used for title collision checks and the
// word-overlap scoring mock): ASCII casefold, punctuation to spaces,
// whitespace collapsed; common UTF-8 quotes and dashes are treated as
// punctuation.
std::string normalize_for_match(const std::string& text);
std::set<std::string> token_set(const std::string& normalized);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

const char* match_tier_name(MatchTier tier);

}  // namespace cdrbench::respparse
