// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/promptgen.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cdrbench::promptgen {

std::string PromptVariant::id() const {
    std::string s = injection == Injection::with_injection ? "with" : "no";
    s += task == Task::rating ? "-rating" : "-ranking";
    s += context == Context::high ? "-high" : "-medium";
    return s;
}

PromptVariant PromptVariant::parse(const std::string& injection, const std::string& task,
                                   const std::string& context) {
    PromptVariant v;
    if (injection == "with" || injection == "with_injection")
        v.injection = Injection::with_injection;
    else if (injection == "no" || injection == "no_injection")
        v.injection = Injection::no_injection;
    else
        throw TemplateError("unknown injection variant: " + injection);
    if (task == "rating")
        v.task = Task::rating;
    else if (task == "ranking")
        v.task = Task::ranking;
    else
        throw TemplateError("unknown task: " + task);
    if (context == "high")
        v.context = Context::high;
    else if (context == "medium")
        v.context = Context::medium;
    else
        throw TemplateError("unknown context level: " + context);
    return v;
}

std::vector<PromptVariant> all_variants() {
    std::vector<PromptVariant> out;
    for (auto injection : {Injection::with_injection, Injection::no_injection})
        for (auto task : {Task::rating, Task::ranking})
            for (auto context : {Context::high, Context::medium})
                out.push_back({injection, task, context});
    return out;
}

const std::vector<std::string>& likelihood_labels() {
    static const std::vector<std::string> labels = {
        "Very Unlikely", "Unlikely", "Somewhat Unlikely", "Neutral", "Likely", "Highly Likely"};
    return labels;
}

std::string format_rating(double rating) {
    const double rounded = std::round(rating);
    if (std::fabs(rating - rounded) < 1e-9)
        return std::to_string(static_cast<long long>(std::llround(rating)));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", rating);
    return buf;
}

namespace {

using Bindings = std::map<std::string, std::string>;
using Lists = std::map<std::string, const std::vector<sampler::HistoryEntry>*>;

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

bool section_open(const std::string& line, std::string* name) {
    if (line.size() < 6 || line.compare(0, 3, "{{#") != 0 ||
        line.compare(line.size() - 2, 2, "}}") != 0)
        return false;
    *name = line.substr(3, line.size() - 5);
    return true;
}

bool section_close(const std::string& line, std::string* name) {
    if (line.size() < 6 || line.compare(0, 3, "{{/") != 0 ||
        line.compare(line.size() - 2, 2, "}}") != 0)
        return false;
    *name = line.substr(3, line.size() - 5);
    return true;
}

std::string substitute(const std::string& line, const Bindings& bindings) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t open = line.find("{{", pos);
        if (open == std::string::npos) {
            out.append(line, pos, std::string::npos);
            return out;
        }
        const std::size_t close = line.find("}}", open + 2);
        if (close == std::string::npos)
            throw TemplateError("unterminated slot in line: " + line);
        out.append(line, pos, open - pos);
        const std::string name = line.substr(open + 2, close - open - 2);
        if (name.empty() || name[0] == '#' || name[0] == '/')
            throw TemplateError("section tag must stand on its own line: " + line);
        const auto it = bindings.find(name);
        if (it == bindings.end()) throw TemplateError("unbound slot: " + name);
        out += it->second;
        pos = close + 2;
    }
}

void expand(const std::vector<std::string>& lines, std::size_t begin, std::size_t end,
            const Bindings& bindings, const Lists& lists, bool intro_on, std::string& out) {
    std::string name;
    for (std::size_t i = begin; i < end;) {
        if (section_open(lines[i], &name)) {
            std::size_t j = i + 1;
            int depth = 0;
            std::string other;
            for (; j < end; ++j) {
                if (section_open(lines[j], &other)) {
                    ++depth;
                } else if (section_close(lines[j], &other)) {
                    if (depth == 0) {
                        if (other != name)
                            throw TemplateError("mismatched section close: " + other);
                        break;
                    }
                    --depth;
                }
            }
            if (j == end) throw TemplateError("unterminated section: " + name);

            if (name == "intro") {
                if (intro_on) expand(lines, i + 1, j, bindings, lists, intro_on, out);
            } else if (auto it = lists.find(name); it != lists.end()) {
                for (const auto& entry : *it->second) {
                    Bindings inner = bindings;
                    inner["title"] = entry.title;
                    inner["rating"] = format_rating(entry.rating);
                    expand(lines, i + 1, j, inner, lists, intro_on, out);
                }
            } else {
                throw TemplateError("unknown section: " + name);
            }
            i = j + 1;
        } else {
            out += substitute(lines[i], bindings);
            out += '\n';
            ++i;
        }
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string family_key(Injection injection, Task task) {
    std::string key = injection == Injection::with_injection ? "with_injection" : "no_injection";
    key += task == Task::rating ? "_rating" : "_ranking";
    return key;
}

std::string candidate_list_text(const std::vector<std::string>& candidates) {
    std::string out = "[";
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (i) out += ", ";
        out += '\'';
        out += candidates[i];
        out += '\'';
    }
    out += ']';
    return out;
}

std::string item_format_text(std::size_t n) {
    std::string out;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i > 1) out += ", ";
        out += "Item" + std::to_string(i);
    }
    return out;
}

}  // namespace

PromptLibrary PromptLibrary::load(const std::string& templates_dir) {
    PromptLibrary lib;
    for (auto injection : {Injection::with_injection, Injection::no_injection}) {
        for (auto task : {Task::rating, Task::ranking}) {
            const std::string key = family_key(injection, task);
            lib.templates_[key] = read_file(templates_dir + "/" + key + ".tmpl");
        }
    }
    return lib;
}

RenderedPrompt PromptLibrary::render(const sampler::EvalInstance& inst,
                                     const PromptVariant& variant,
                                     const std::string& source_domain,
                                     const std::string& target_domain,
                                     std::size_t char_budget) const {
    const auto it = templates_.find(family_key(variant.injection, variant.task));
    if (it == templates_.end()) throw TemplateError("template library not loaded");
    if (variant.task == Task::rating && inst.positive_title.empty())
        throw TemplateError("rating prompt needs a candidate title");
    if (variant.task == Task::ranking && inst.candidates.empty())
        throw TemplateError("ranking prompt needs a candidate list");

    const bool high = variant.context == Context::high;
    Bindings bindings;
    bindings["source_domain"] = high ? source_domain : kMediumSourceName;
    bindings["target_domain"] = high ? target_domain : kMediumTargetName;
    bindings["candidate_title"] = inst.positive_title;
    if (variant.task == Task::ranking) {
        bindings["candidate_list"] = candidate_list_text(inst.candidates);
        bindings["item_format_list"] = item_format_text(inst.candidates.size());
    }
    Lists lists;
    lists["source_history"] = &inst.source_history;
    lists["target_history"] = &inst.target_history;

    RenderedPrompt out;
    const auto lines = split_lines(it->second);
    expand(lines, 0, lines.size(), bindings, lists, high, out.text);
    if (variant.task == Task::ranking && out.text.size() > char_budget)
        throw BudgetError("ranking prompt exceeds character budget: " +
                          std::to_string(out.text.size()) + " > " +
                          std::to_string(char_budget));
    out.variant = variant;
    out.user_id = inst.user_id;
    out.item_id = inst.positive_item_id;
    out.token_estimate = (out.text.size() + 3) / 4;
    return out;
}

RenderedPrompt PromptLibrary::degrade_to_medium(const sampler::EvalInstance& inst,
                                                PromptVariant variant,
                                                const std::string& source_domain,
                                                const std::string& target_domain,
                                                std::size_t char_budget) const {
    variant.context = Context::medium;
    return render(inst, variant, source_domain, target_domain, char_budget);
}

}  // namespace cdrbench::promptgen
