// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace cdrbench::jsonl {

using json = nlohmann::json;

// Calls fn(line_number, parsed) for every parseable line and returns the
// number of lines that failed to parse. Blank lines are ignored.
inline std::size_t for_each_record(const std::string& path,
                                   const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string line;
    std::size_t lineno = 0, bad = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) {
            ++bad;
            continue;
        }
        fn(lineno, rec);
    }
    return bad;
}

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open file for writing: " + path);
    }
    void write(const json& rec) { out_ << rec.dump() << '\n'; }
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

}  // namespace cdrbench::jsonl
