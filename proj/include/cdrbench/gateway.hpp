// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0
//
// Model access: an OpenAI-compatible chat-completions backend plus a
// deterministic offline mock. Completions are cached on disk keyed by
// (model, temperature, prompt) so reruns replay byte-identical text
// without network traffic.

#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdrbench/promptgen.hpp"
#include "cdrbench/respparse.hpp"
#include "cdrbench/sampler.hpp"

#include "json.hpp"

namespace cdrbench::gateway {

using nlohmann::json;

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Missing or rejected credentials; never retried.
class CredentialError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

// Backend still failing after the retry budget, or a non-retryable
// HTTP status.
class BackendUnavailableError : public GatewayError {
public:
    BackendUnavailableError(const std::string& what, int status)
        : GatewayError(what), last_status(status) {}
    int last_status = 0;  // 0 when the failure was transport-level
};

enum class Backend { http_openai_compatible, mock };

struct ModelSpec {
    Backend backend = Backend::mock;
    std::string model_name = "mock";
    double temperature = 0.0;
    int max_output_tokens = 512;  // backends need room for 21 titles; >= 16
    std::string endpoint;         // http backend, e.g. http://host:8080/v1/chat/completions
    std::string api_key_env = "OPENAI_API_KEY";

    void validate() const;  // throws GatewayError on a bad spec
    static ModelSpec from_json(const json& j);
    json to_json() const;
};

struct TokenUsage {
    std::int64_t input = 0;
    std::int64_t output = 0;
};

struct CompletionRecord {
    std::string cache_key;
    std::string raw_text;  // verbatim model output
    double latency_ms = 0.0;
    TokenUsage token_usage;
    int attempt_count = 0;
    bool from_cache = false;

    json to_json() const;
    static CompletionRecord from_json(const json& j);
};

struct GatewayOptions {
    int max_attempts = 5;
    int backoff_initial_ms = 250;
    double backoff_factor = 2.0;
    int max_in_flight = 4;          // concurrent requests
    double requests_per_minute = 600.0;
    int timeout_seconds = 120;
    bool verbose = false;

    static GatewayOptions from_json(const json& j);
    json to_json() const;
};

std::string cache_key(const ModelSpec& spec, const std::string& prompt_text);

// One JSON file per completion under `dir`. Corrupt entries are evicted
// and treated as misses. Thread-safe.
class ResponseCache {
public:
    explicit ResponseCache(std::string dir);
    std::optional<CompletionRecord> get(const std::string& key);
    void put(const CompletionRecord& record);
    bool contains(const std::string& key) const;  // probe without touching hit/miss counters
    std::size_t hits() const;
    std::size_t misses() const;
    const std::string& dir() const { return dir_; }

private:
    std::string path_for(const std::string& key) const;
    std::string dir_;
    mutable std::mutex mu_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

// Offline stand-in: derives the reply from the instance itself. Rating
// prompts get the likelihood label nearest the user's mean history
// rating; ranking prompts get candidates ordered by word overlap with
// the history titles. Deterministic, zero latency.
std::string mock_complete(const promptgen::RenderedPrompt& prompt,
                          const sampler::EvalInstance& instance,
                          const respparse::LabelMap& map = respparse::LabelMap::prompt_anchored());

class Gateway {
public:
    explicit Gateway(GatewayOptions opts = {});

    // Single completion, retrying transient failures with exponential
    // backoff. The mock backend requires `instance`.
    CompletionRecord complete(const promptgen::RenderedPrompt& prompt, const ModelSpec& spec,
                              const sampler::EvalInstance* instance = nullptr,
                              const respparse::LabelMap* map = nullptr);

    // complete() through the cache: hits skip the backend entirely.
    CompletionRecord cached_complete(const promptgen::RenderedPrompt& prompt,
                                     const ModelSpec& spec, ResponseCache& cache,
                                     const sampler::EvalInstance* instance = nullptr,
                                     const respparse::LabelMap* map = nullptr);

    // Bounded-concurrency batch honoring the requests/minute budget.
    // Results align with prompts; the first failure aborts the batch.
    std::vector<CompletionRecord> complete_many(
        const std::vector<promptgen::RenderedPrompt>& prompts, const ModelSpec& spec,
        ResponseCache* cache = nullptr,
        const std::vector<const sampler::EvalInstance*>* instances = nullptr,
        const respparse::LabelMap* map = nullptr);

    const GatewayOptions& options() const { return opts_; }

private:
    CompletionRecord complete_http(const promptgen::RenderedPrompt& prompt,
                                   const ModelSpec& spec);
    GatewayOptions opts_;
};

}  // namespace cdrbench::gateway
