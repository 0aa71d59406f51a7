// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/respparse.hpp"

#include <algorithm>
#include <cctype>

#include "cdrbench/promptgen.hpp"

namespace cdrbench::respparse {

LabelMap LabelMap::prompt_anchored() { return evenly_spaced(1.0, 5.0); }

LabelMap LabelMap::full_range() { return evenly_spaced(0.5, 5.0); }

LabelMap LabelMap::evenly_spaced(double lo, double hi) {
    LabelMap m;
    for (std::size_t i = 0; i < m.values.size(); ++i)
        m.values[i] = lo + static_cast<double>(i) * (hi - lo) / 5.0;
    m.validate();
    return m;
}

LabelMap LabelMap::preset(const std::string& name) {
    if (name == "prompt_anchored") return prompt_anchored();
    if (name == "full_range") return full_range();
    throw std::invalid_argument("unknown label map preset: " + name);
}

LabelMap LabelMap::from_json(const json& j) {
    if (j.is_string()) return preset(j.get<std::string>());
    LabelMap m;
    const json& values = j.is_array() ? j : j.at("values");
    if (values.size() != m.values.size())
        throw std::invalid_argument("label map needs exactly 6 values");
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = values[i].get<double>();
    m.validate();
    return m;
}

json LabelMap::to_json() const { return json(values); }

void LabelMap::validate() const {
    for (std::size_t i = 1; i < values.size(); ++i)
        if (!(values[i] > values[i - 1]))
            throw std::invalid_argument("label map values must be strictly increasing");
}

double label_to_rating(std::size_t label_index, const LabelMap& map) {
    if (label_index >= map.values.size())
        throw std::invalid_argument("label index out of range: " + std::to_string(label_index));
    return map.values[label_index];
}

namespace {

std::string ascii_lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool word_boundary(const std::string& text, std::size_t pos, std::size_t len) {
    const auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    if (pos > 0 && alnum(text[pos - 1])) return false;
    if (pos + len < text.size() && alnum(text[pos + len])) return false;
    return true;
}

struct Occurrence {
    std::size_t pos;
    std::size_t len;
    std::size_t label;
};

}  // namespace

std::optional<ParsedRating> parse_rating(const std::string& text) {
    const std::string lower = ascii_lower(text);
    const auto& labels = promptgen::likelihood_labels();

    std::vector<Occurrence> occurrences;
    for (std::size_t idx = 0; idx < labels.size(); ++idx) {
        const std::string needle = ascii_lower(labels[idx]);
        for (std::size_t pos = lower.find(needle); pos != std::string::npos;
             pos = lower.find(needle, pos + 1)) {
            if (word_boundary(lower, pos, needle.size()))
                occurrences.push_back({pos, needle.size(), idx});
        }
    }
    if (occurrences.empty()) return std::nullopt;

    // earliest first; at the same position the longest label wins, so
    // "Very Unlikely" is not read as "Unlikely"
    std::sort(occurrences.begin(), occurrences.end(), [](const Occurrence& a, const Occurrence& b) {
        if (a.pos != b.pos) return a.pos < b.pos;
        return a.len > b.len;
    });

    std::vector<Occurrence> accepted;
    std::size_t last_end = 0;
    for (const auto& occ : occurrences) {
        if (!accepted.empty() && occ.pos < last_end) continue;
        accepted.push_back(occ);
        last_end = occ.pos + occ.len;
    }

    ParsedRating out;
    out.label_index = accepted.front().label;
    std::set<std::size_t> distinct;
    for (const auto& occ : accepted) distinct.insert(occ.label);
    out.ambiguous = distinct.size() > 1;
    return out;
}

namespace {

// UTF-8 punctuation commonly produced by models; mapped to spaces so
// curly-quoted output still lines up with ASCII titles.
const char* kUtf8Punct[] = {"\xE2\x80\x98", "\xE2\x80\x99", "\xE2\x80\x9C",
                            "\xE2\x80\x9D", "\xE2\x80\x93", "\xE2\x80\x94"};

std::string flatten_utf8_punct(const std::string& s) {
    std::string out = s;
    for (const char* seq : kUtf8Punct) {
        std::size_t pos;
        while ((pos = out.find(seq)) != std::string::npos) out.replace(pos, 3, " ");
    }
    return out;
}

}  // namespace

std::string normalize_for_match(const std::string& text) {
    const std::string flat = flatten_utf8_punct(text);
    std::string out;
    out.reserve(flat.size());
    bool pending_space = false;
    for (unsigned char c : flat) {
        if (std::isalnum(c) || c >= 0x80) {
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(c));
        } else {
            pending_space = true;
        }
    }
    return out;
}

std::set<std::string> token_set(const std::string& normalized) {
    std::set<std::string> out;
    std::size_t start = 0;
    while (start < normalized.size()) {
        std::size_t end = normalized.find(' ', start);
        if (end == std::string::npos) end = normalized.size();
        if (end > start) out.insert(normalized.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.count(t);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

const char* match_tier_name(MatchTier tier) {
    switch (tier) {
        case MatchTier::exact: return "exact";
        case MatchTier::normalized: return "normalized";
        case MatchTier::fuzzy: return "fuzzy";
        case MatchTier::appended: return "appended";
    }
    return "unknown";
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool starts_with_at(const std::string& s, std::size_t pos, const char* seq) {
    const std::size_t n = std::char_traits<char>::length(seq);
    return s.compare(pos, n, seq) == 0;
}

// length of the quote character at pos (1 for ASCII, 3 for UTF-8), 0 if none
std::size_t quote_len_at(const std::string& s, std::size_t pos, bool opening) {
    if (pos >= s.size()) return 0;
    const char c = s[pos];
    if (c == '\'' || c == '"' || c == '`') return 1;
    if (opening) {
        if (starts_with_at(s, pos, "\xE2\x80\x98") || starts_with_at(s, pos, "\xE2\x80\x9C"))
            return 3;
    } else {
        if (starts_with_at(s, pos, "\xE2\x80\x99") || starts_with_at(s, pos, "\xE2\x80\x9D"))
            return 3;
    }
    return 0;
}

// A closing quote only counts when followed (modulo spaces) by a comma,
// a bracket, or the end of the list; apostrophes inside titles such as
// "Gunman's Walk VHS" stay part of the item.
bool closes_item(const std::string& s, std::size_t after) {
    while (after < s.size() && s[after] == ' ') ++after;
    return after >= s.size() || s[after] == ',' || s[after] == ']';
}

std::vector<std::string> split_quote_aware(const std::string& inner) {
    std::vector<std::string> frags;
    std::string cur;
    bool in_quote = false;
    std::size_t i = 0;
    while (i < inner.size()) {
        if (!in_quote) {
            if (inner[i] == ',') {
                frags.push_back(cur);
                cur.clear();
                ++i;
                continue;
            }
            const std::size_t ql = quote_len_at(inner, i, true);
            if (ql && trim(cur).empty()) {
                in_quote = true;
                cur.append(inner, i, ql);
                i += ql;
                continue;
            }
        } else {
            const std::size_t ql = quote_len_at(inner, i, false);
            if (ql && closes_item(inner, i + ql)) {
                in_quote = false;
                cur.append(inner, i, ql);
                i += ql;
                continue;
            }
        }
        cur += inner[i++];
    }
    frags.push_back(cur);
    return frags;
}

std::string strip_quotes(std::string s) {
    const std::size_t lead = quote_len_at(s, 0, true);
    if (lead) s.erase(0, lead);
    if (!s.empty()) {
        for (std::size_t len : {std::size_t(3), std::size_t(1)}) {
            if (s.size() >= len && quote_len_at(s, s.size() - len, false) == len) {
                s.erase(s.size() - len);
                break;
            }
        }
    }
    return trim(s);
}

std::string strip_enumeration(const std::string& line) {
    std::size_t i = 0;
    const std::size_t digits_start = i;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i > digits_start && i < line.size() &&
        (line[i] == '.' || line[i] == ')' || line[i] == ':')) {
        return trim(line.substr(i + 1));
    }
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) return trim(line.substr(1));
    return line;
}

struct CandidateView {
    std::string raw;
    std::string normalized;
    std::set<std::string> tokens;
};

}  // namespace

std::optional<ParsedRanking> parse_ranking(const std::string& text,
                                           const std::vector<std::string>& candidates,
                                           double fuzzy_threshold) {
    if (candidates.empty()) return std::nullopt;

    std::vector<CandidateView> views(candidates.size());
    std::size_t max_commas = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        views[i].raw = trim(candidates[i]);
        views[i].normalized = normalize_for_match(candidates[i]);
        views[i].tokens = token_set(views[i].normalized);
        max_commas = std::max(
            max_commas,
            static_cast<std::size_t>(std::count(candidates[i].begin(), candidates[i].end(), ',')));
    }

    const auto matches_some_candidate = [&](const std::string& item) {
        for (const auto& v : views)
            if (v.raw == item) return true;
        const std::string norm = normalize_for_match(item);
        for (const auto& v : views)
            if (v.normalized == norm) return true;
        return false;
    };

    std::vector<std::string> items;
    const std::size_t open = text.find('[');
    const std::size_t close = text.rfind(']');
    if (open != std::string::npos && close != std::string::npos && open < close) {
        std::vector<std::string> frags;
        for (const auto& f : split_quote_aware(text.substr(open + 1, close - open - 1))) {
            const std::string cleaned = strip_quotes(trim(f));
            if (!cleaned.empty()) frags.push_back(cleaned);
        }
        // Unquoted titles containing commas arrive as several fragments;
        // greedily rejoin runs that reproduce a known candidate.
        for (std::size_t i = 0; i < frags.size();) {
            bool joined = false;
            const std::size_t top = std::min(i + max_commas, frags.size() - 1);
            for (std::size_t j = top; j > i; --j) {
                std::string merged = frags[i];
                for (std::size_t k = i + 1; k <= j; ++k) merged += ", " + frags[k];
                if (matches_some_candidate(merged)) {
                    items.push_back(std::move(merged));
                    i = j + 1;
                    joined = true;
                    break;
                }
            }
            if (!joined) items.push_back(frags[i++]);
        }
    } else {
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            std::string line = trim(text.substr(start, end - start));
            line = strip_enumeration(line);
            if (!line.empty() && line.back() == ',') line.pop_back();
            line = strip_quotes(trim(line));
            if (!line.empty()) items.push_back(line);
            start = end + 1;
            if (end == text.size()) break;
        }
    }

    ParsedRanking out;
    std::vector<bool> claimed(candidates.size(), false);
    const auto claim = [&](std::size_t idx, MatchTier tier) {
        claimed[idx] = true;
        out.permutation.push_back(idx);
        out.tiers.push_back(tier);
    };

    for (const auto& item : items) {
        const std::string raw = trim(item);
        std::optional<std::size_t> exact_claimed;
        bool handled = false;
        for (std::size_t i = 0; i < views.size() && !handled; ++i) {
            if (views[i].raw == raw) {
                if (!claimed[i]) {
                    claim(i, MatchTier::exact);
                    handled = true;
                } else {
                    exact_claimed = i;
                }
            }
        }
        if (handled) continue;
        if (exact_claimed) continue;  // duplicate mention; first one wins

        const std::string norm = normalize_for_match(raw);
        bool norm_duplicate = false;
        for (std::size_t i = 0; i < views.size() && !handled; ++i) {
            if (views[i].normalized == norm) {
                if (!claimed[i]) {
                    claim(i, MatchTier::normalized);
                    handled = true;
                } else {
                    norm_duplicate = true;
                }
            }
        }
        if (handled) continue;
        if (norm_duplicate) continue;

        const auto tokens = token_set(norm);
        double best = 0.0;
        std::size_t best_idx = 0;
        bool found = false;
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (claimed[i]) continue;
            const double sim = jaccard(tokens, views[i].tokens);
            if (sim > best) {
                best = sim;
                best_idx = i;
                found = true;
            }
        }
        if (found && best >= fuzzy_threshold)
            claim(best_idx, MatchTier::fuzzy);
        else
            ++out.dropped_hallucinations;
    }

    if (out.permutation.empty()) return std::nullopt;

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!claimed[i]) {
            claim(i, MatchTier::appended);
            ++out.appended_missing;
        }
    }
    return out;
}

std::size_t rank_of_positive(const ParsedRanking& parsed, std::size_t positive_index) {
    for (std::size_t r = 0; r < parsed.permutation.size(); ++r)
        if (parsed.permutation[r] == positive_index) return r + 1;
    throw std::logic_error("positive candidate missing from permutation");
}

}  // namespace cdrbench::respparse
