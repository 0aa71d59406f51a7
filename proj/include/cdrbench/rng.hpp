// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cdrbench::rng {

// Standard-library distributions are implementation-defined, so every draw
// that must reproduce bit-for-bit across toolchains goes through these
// helpers on top of mt19937_64 (whose output sequence the standard pins).

using Engine = std::mt19937_64;

inline std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Per-entity seed derivation: a master seed plus one or more string keys.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view a,
                                 std::string_view b = {}) {
    std::uint64_t h = mix(master);
    h = mix(h ^ hash_str(a));
    if (!b.empty()) h = mix(h ^ hash_str(b));
    return h;
}

// Uniform integer in [0, n) via rejection sampling.
inline std::uint64_t uniform_below(Engine& eng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
        x = eng();
    } while (x >= limit);
    return x % n;
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
    return double(eng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double uniform_range(Engine& eng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(eng);
}

template <typename T>
void shuffle(Engine& eng, std::vector<T>& v) {
    // Fisher-Yates, descending
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = std::size_t(uniform_below(eng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Deterministically picks k distinct indices out of [0, n).
inline std::vector<std::size_t> sample_indices(Engine& eng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + std::size_t(uniform_below(eng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace cdrbench::rng
