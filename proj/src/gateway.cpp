// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#include "cdrbench/gateway.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "cdrbench/digest.hpp"

#include "httplib.h"

namespace cdrbench::gateway {

namespace fs = std::filesystem;

void ModelSpec::validate() const {
    if (model_name.empty()) throw GatewayError("model spec: model_name is required");
    if (!(temperature >= 0.0) || !std::isfinite(temperature))
        throw GatewayError("model spec: temperature must be a finite non-negative number");
    if (max_output_tokens < 16)
        throw GatewayError("model spec: max_output_tokens must be at least 16");
    if (backend == Backend::http_openai_compatible) {
        if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
            throw GatewayError("model spec: http backend needs an http(s) endpoint");
        if (api_key_env.empty())
            throw GatewayError("model spec: http backend needs api_key_env");
    }
}

ModelSpec ModelSpec::from_json(const json& j) {
    ModelSpec spec;
    const std::string backend = j.value("backend", "mock");
    if (backend == "mock")
        spec.backend = Backend::mock;
    else if (backend == "http" || backend == "http_openai_compatible")
        spec.backend = Backend::http_openai_compatible;
    else
        throw GatewayError("unknown backend: " + backend);
    spec.model_name = j.contains("model") ? j.at("model").get<std::string>()
                                          : j.value("model_name", spec.model_name);
    spec.temperature = j.value("temperature", spec.temperature);
    spec.max_output_tokens = j.value("max_output_tokens", spec.max_output_tokens);
    spec.endpoint = j.value("endpoint", spec.endpoint);
    spec.api_key_env = j.value("api_key_env", spec.api_key_env);
    spec.validate();
    return spec;
}

json ModelSpec::to_json() const {
    return json{{"backend", backend == Backend::mock ? "mock" : "http_openai_compatible"},
                {"model_name", model_name},
                {"temperature", temperature},
                {"max_output_tokens", max_output_tokens},
                {"endpoint", endpoint},
                {"api_key_env", api_key_env}};
}

json CompletionRecord::to_json() const {
    return json{{"cache_key", cache_key},
                {"raw_text", raw_text},
                {"latency_ms", latency_ms},
                {"token_usage", {{"input", token_usage.input}, {"output", token_usage.output}}},
                {"attempt_count", attempt_count}};
}

CompletionRecord CompletionRecord::from_json(const json& j) {
    CompletionRecord rec;
    rec.cache_key = j.at("cache_key").get<std::string>();
    rec.raw_text = j.at("raw_text").get<std::string>();
    rec.latency_ms = j.value("latency_ms", 0.0);
    if (j.contains("token_usage")) {
        rec.token_usage.input = j["token_usage"].value("input", std::int64_t(0));
        rec.token_usage.output = j["token_usage"].value("output", std::int64_t(0));
    }
    rec.attempt_count = j.value("attempt_count", 0);
    return rec;
}

GatewayOptions GatewayOptions::from_json(const json& j) {
    GatewayOptions o;
    o.max_attempts = j.value("max_attempts", o.max_attempts);
    o.backoff_initial_ms = j.value("backoff_initial_ms", o.backoff_initial_ms);
    o.backoff_factor = j.value("backoff_factor", o.backoff_factor);
    o.max_in_flight = j.value("max_in_flight", o.max_in_flight);
    o.requests_per_minute = j.value("requests_per_minute", o.requests_per_minute);
    o.timeout_seconds = j.value("timeout_seconds", o.timeout_seconds);
    o.verbose = j.value("verbose", o.verbose);
    return o;
}

json GatewayOptions::to_json() const {
    return json{{"max_attempts", max_attempts},
                {"backoff_initial_ms", backoff_initial_ms},
                {"backoff_factor", backoff_factor},
                {"max_in_flight", max_in_flight},
                {"requests_per_minute", requests_per_minute},
                {"timeout_seconds", timeout_seconds},
                {"verbose", verbose}};
}

std::string cache_key(const ModelSpec& spec, const std::string& prompt_text) {
    char temp[32];
    std::snprintf(temp, sizeof temp, "%.6g", spec.temperature);
    std::string material = spec.model_name;
    material += '\x1f';
    material += temp;
    material += '\x1f';
    material += prompt_text;
    return digest::sha256_hex(material);
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
}

std::string ResponseCache::path_for(const std::string& key) const {
    return dir_ + "/" + key + ".json";
}

std::optional<CompletionRecord> ResponseCache::get(const std::string& key) {
    const std::string path = path_for(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::lock_guard<std::mutex> lock(mu_);
        ++misses_;
        return std::nullopt;
    }
    std::ostringstream os;
    os << in.rdbuf();
    in.close();

    const json j = json::parse(os.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("raw_text") ||
        j.value("cache_key", "") != key) {
        std::cerr << "gateway: evicting corrupt cache entry " << path << "\n";
        std::error_code ec;
        fs::remove(path, ec);
        std::lock_guard<std::mutex> lock(mu_);
        ++misses_;
        return std::nullopt;
    }
    CompletionRecord rec = CompletionRecord::from_json(j);
    rec.from_cache = true;
    std::lock_guard<std::mutex> lock(mu_);
    ++hits_;
    return rec;
}

void ResponseCache::put(const CompletionRecord& record) {
    const std::string path = path_for(record.cache_key);
    std::ostringstream tmp_name;
    tmp_name << path << ".tmp." << std::this_thread::get_id();
    {
        std::ofstream out(tmp_name.str(), std::ios::binary | std::ios::trunc);
        if (!out) throw GatewayError("cache: cannot write " + tmp_name.str());
        out << record.to_json().dump() << "\n";
    }
    fs::rename(tmp_name.str(), path);
}

bool ResponseCache::contains(const std::string& key) const {
    std::error_code ec;
    return fs::exists(path_for(key), ec);
}

std::size_t ResponseCache::hits() const {
    std::lock_guard<std::mutex> lock(mu_);
    return hits_;
}

std::size_t ResponseCache::misses() const {
    std::lock_guard<std::mutex> lock(mu_);
    return misses_;
}

namespace {

double history_mean(const std::vector<sampler::HistoryEntry>& history) {
    double sum = 0.0;
    for (const auto& h : history) sum += h.rating;
    return sum / static_cast<double>(history.size());
}

std::string mock_rating_reply(const sampler::EvalInstance& inst, const respparse::LabelMap& map) {
    double mean = 3.0;
    if (!inst.target_history.empty())
        mean = history_mean(inst.target_history);
    else if (!inst.source_history.empty())
        mean = history_mean(inst.source_history);

    std::size_t best = 0;
    double best_dist = std::abs(mean - map.values[0]);
    for (std::size_t i = 1; i < map.values.size(); ++i) {
        const double dist = std::abs(mean - map.values[i]);
        if (dist <= best_dist) {  // ties resolve toward the higher label
            best_dist = dist;
            best = i;
        }
    }
    return promptgen::likelihood_labels()[best];
}

std::string mock_ranking_reply(const sampler::EvalInstance& inst) {
    std::set<std::string> history_tokens;
    for (const auto* history : {&inst.source_history, &inst.target_history})
        for (const auto& h : *history)
            for (const auto& t : respparse::token_set(respparse::normalize_for_match(h.title)))
                history_tokens.insert(t);

    struct Scored {
        std::size_t overlap;
        const std::string* title;
    };
    std::vector<Scored> scored;
    scored.reserve(inst.candidates.size());
    for (const auto& c : inst.candidates) {
        std::size_t overlap = 0;
        for (const auto& t : respparse::token_set(respparse::normalize_for_match(c)))
            overlap += history_tokens.count(t);
        scored.push_back({overlap, &c});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        return *a.title < *b.title;
    });

    std::string out = "[";
    for (std::size_t i = 0; i < scored.size(); ++i) {
        if (i) out += ", ";
        out += *scored[i].title;
    }
    out += "]";
    return out;
}

}  // namespace

std::string mock_complete(const promptgen::RenderedPrompt& prompt,
                          const sampler::EvalInstance& instance, const respparse::LabelMap& map) {
    if (prompt.variant.task == promptgen::Task::rating)
        return mock_rating_reply(instance, map);
    return mock_ranking_reply(instance);
}

Gateway::Gateway(GatewayOptions opts) : opts_(opts) {}

CompletionRecord Gateway::complete(const promptgen::RenderedPrompt& prompt, const ModelSpec& spec,
                                   const sampler::EvalInstance* instance,
                                   const respparse::LabelMap* map) {
    spec.validate();
    if (spec.backend == Backend::mock) {
        if (!instance) throw GatewayError("mock backend needs the eval instance");
        CompletionRecord rec;
        rec.cache_key = cache_key(spec, prompt.text);
        rec.raw_text =
            mock_complete(prompt, *instance, map ? *map : respparse::LabelMap::prompt_anchored());
        rec.latency_ms = 0.0;
        rec.token_usage.input = static_cast<std::int64_t>(prompt.token_estimate);
        rec.token_usage.output = static_cast<std::int64_t>((rec.raw_text.size() + 3) / 4);
        rec.attempt_count = 1;
        return rec;
    }
    return complete_http(prompt, spec);
}

namespace {

struct Endpoint {
    std::string base;  // scheme://host[:port]
    std::string path;
};

Endpoint split_endpoint(const std::string& url) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) throw GatewayError("endpoint missing scheme: " + url);
    const std::size_t slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, slash), url.substr(slash)};
}

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

}  // namespace

CompletionRecord Gateway::complete_http(const promptgen::RenderedPrompt& prompt,
                                        const ModelSpec& spec) {
    const char* key = std::getenv(spec.api_key_env.c_str());
    if (!key || !*key)
        throw CredentialError("credential " + spec.api_key_env +
                              " is not set; refusing to call " + spec.endpoint);

    const Endpoint ep = split_endpoint(spec.endpoint);
    httplib::Client client(ep.base);
    client.set_connection_timeout(opts_.timeout_seconds, 0);
    client.set_read_timeout(opts_.timeout_seconds, 0);
    client.set_write_timeout(opts_.timeout_seconds, 0);

    const httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};
    const std::string body = json{{"model", spec.model_name},
                                  {"messages", json::array({json{{"role", "user"},
                                                                 {"content", prompt.text}}})},
                                  {"temperature", spec.temperature},
                                  {"max_tokens", spec.max_output_tokens}}
                                 .dump();

    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
        const auto t0 = std::chrono::steady_clock::now();
        auto res = client.Post(ep.path, headers, body, "application/json");
        const double latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();

        if (res) {
            last_status = res->status;
            if (res->status == 401 || res->status == 403)
                throw CredentialError("backend rejected credentials (HTTP " +
                                      std::to_string(res->status) + ") for " + spec.endpoint);
            if (res->status == 200) {
                const json j = json::parse(res->body, nullptr, false);
                if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
                    throw BackendUnavailableError(
                        "malformed completion body from " + spec.endpoint, res->status);
                CompletionRecord rec;
                rec.cache_key = cache_key(spec, prompt.text);
                rec.raw_text = j["choices"][0].at("message").at("content").get<std::string>();
                rec.latency_ms = latency_ms;
                rec.attempt_count = attempt;
                if (j.contains("usage")) {
                    rec.token_usage.input = j["usage"].value("prompt_tokens", std::int64_t(0));
                    rec.token_usage.output =
                        j["usage"].value("completion_tokens", std::int64_t(0));
                }
                if (rec.token_usage.input == 0)
                    rec.token_usage.input = static_cast<std::int64_t>(prompt.token_estimate);
                if (rec.token_usage.output == 0)
                    rec.token_usage.output =
                        static_cast<std::int64_t>((rec.raw_text.size() + 3) / 4);
                return rec;
            }
            if (!retryable_status(res->status))
                throw BackendUnavailableError("HTTP " + std::to_string(res->status) + " from " +
                                                  spec.endpoint + ": " + res->body.substr(0, 200),
                                              res->status);
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            last_status = 0;
            last_error = "transport error: " + httplib::to_string(res.error());
        }

        if (attempt < opts_.max_attempts) {
            const double delay =
                opts_.backoff_initial_ms * std::pow(opts_.backoff_factor, attempt - 1);
            if (opts_.verbose)
                std::cerr << "gateway: attempt " << attempt << " failed (" << last_error
                          << "), retrying in " << delay << " ms\n";
            std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(delay)));
        }
    }
    throw BackendUnavailableError("backend still failing after " +
                                      std::to_string(opts_.max_attempts) + " attempts (" +
                                      last_error + "): " + spec.endpoint,
                                  last_status);
}

CompletionRecord Gateway::cached_complete(const promptgen::RenderedPrompt& prompt,
                                          const ModelSpec& spec, ResponseCache& cache,
                                          const sampler::EvalInstance* instance,
                                          const respparse::LabelMap* map) {
    const std::string key = cache_key(spec, prompt.text);
    if (auto hit = cache.get(key)) return *hit;
    CompletionRecord rec = complete(prompt, spec, instance, map);
    cache.put(rec);
    return rec;
}

namespace {

// Serializes request starts so consecutive dispatches are at least
// 60/rpm seconds apart.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute) {
        if (requests_per_minute > 0)
            interval_ = std::chrono::duration<double>(60.0 / requests_per_minute);
    }

    void acquire() {
        if (interval_.count() <= 0) return;
        std::chrono::steady_clock::time_point slot;
        {
            std::lock_guard<std::mutex> lock(mu_);
            const auto now = std::chrono::steady_clock::now();
            slot = std::max(now, next_);
            next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                               interval_);
        }
        std::this_thread::sleep_until(slot);
    }

private:
    std::chrono::duration<double> interval_{0.0};
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_ = std::chrono::steady_clock::now();
};

}  // namespace

std::vector<CompletionRecord> Gateway::complete_many(
    const std::vector<promptgen::RenderedPrompt>& prompts, const ModelSpec& spec,
    ResponseCache* cache, const std::vector<const sampler::EvalInstance*>* instances,
    const respparse::LabelMap* map) {
    spec.validate();
    if (instances && instances->size() != prompts.size())
        throw GatewayError("complete_many: instances/prompts size mismatch");

    std::vector<CompletionRecord> results(prompts.size());
    if (prompts.empty()) return results;

    RateLimiter limiter(opts_.requests_per_minute);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mu;
    std::exception_ptr first_error;

    const auto worker = [&]() {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= prompts.size()) return;
            try {
                const sampler::EvalInstance* inst = instances ? (*instances)[i] : nullptr;
                if (cache) {
                    const std::string key = cache_key(spec, prompts[i].text);
                    if (auto hit = cache->get(key)) {
                        results[i] = *hit;
                        continue;
                    }
                }
                if (spec.backend == Backend::http_openai_compatible) limiter.acquire();
                CompletionRecord rec = complete(prompts[i], spec, inst, map);
                if (cache) cache->put(rec);
                results[i] = std::move(rec);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };

    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(opts_.max_in_flight, prompts.size()));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (first_error) std::rethrow_exception(first_error);
    return results;
}

}  // namespace cdrbench::gateway
