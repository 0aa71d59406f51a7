// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// One hand-built Books -> Movies evaluation instance shared by the prompt
// and response-parsing tests. The golden prompt files under tests/golden/
// were written against exactly this data.

#pragma once

#include <string>
#include <vector>

#include "cdrbench/sampler.hpp"

namespace cdrbench::testfix {

inline sampler::EvalInstance books_movies_instance() {
    sampler::EvalInstance inst;
    inst.user_id = "fixture-user";
    inst.positive_item_id = "M-slp";
    inst.positive_title = "Silver Linings Playbook";
    inst.positive_rating = 5.0;
    inst.positive_timestamp = 1357000000;
    inst.source_history = {{"The Last Runaway: A Novel", 5.0},
                           {"My Beloved World", 5.0},
                           {"Inferno", 2.0},
                           {"Nursing A Grudge", 1.0}};
    inst.target_history = {{"China Beach", 5.0},
                           {"The No. 1 Ladies' Detective Agency: Season 1", 5.0}};
    const std::vector<std::string> order = {
        "Macross Plus, Vol. 2",
        "Barney Miller: Complete Third Season",
        "The Omen Collection",
        "Coen Brothers Collection (Blood Simple/Fargo/Miller's Crossing/Raising Arizona)",
        "Gilbert; Sullivan: Broadway Theatre Archive",
        "Thriller - The Complete Season One",
        "Impostor",
        "Silver Linings Playbook",
        "Project X",
        "Let's Rock Again",
        "Perry Mason: Season 1, Vol. 2",
        "Letters from Iwo Jima",
        "Sesame Street - Learning About Numbers VHS",
        "Of Human Bondage VHS",
        "California Split",
        "Blue Seed: Nightfall",
        "The Lone Ranger",
        "The Cowboys VHS",
        "Harry Potter and the Order of the Phoenix",
        "Gunman's Walk VHS",
        "Sherlock: Season 1"};
    inst.candidates = order;
    inst.positive_position = 7;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i == inst.positive_position) continue;
        inst.negatives.push_back({"M-neg-" + std::to_string(i), order[i]});
    }
    inst.seed_trace = 0;
    return inst;
}

}  // namespace cdrbench::testfix
