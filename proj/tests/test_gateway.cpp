// Copyright 2026 cdrbench contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>
#include <unistd.h>

#include <httplib.h>

#include "cdrbench/gateway.hpp"
#include "cdrbench/respparse.hpp"
#include "fixture_instance.hpp"

using namespace cdrbench;
using namespace cdrbench::gateway;
namespace fs = std::filesystem;

namespace {

promptgen::RenderedPrompt make_prompt(const std::string& text, promptgen::Task task) {
    promptgen::RenderedPrompt p;
    p.text = text;
    p.variant.task = task;
    p.variant.injection = promptgen::Injection::with_injection;
    p.token_estimate = (text.size() + 3) / 4;
    return p;
}

struct TempCacheDir {
    fs::path path;
    TempCacheDir() : path(fs::temp_directory_path() / ("cdrbench-cache-" +
                                                       std::to_string(::getpid()))) {
        fs::remove_all(path);
    }
    ~TempCacheDir() { fs::remove_all(path); }
};

GatewayOptions fast_options() {
    GatewayOptions opts;
    opts.backoff_initial_ms = 1;
    opts.backoff_factor = 1.0;
    opts.requests_per_minute = 0.0;  // disabled in tests
    opts.timeout_seconds = 5;
    return opts;
}

// Minimal OpenAI-style stub. `fail_first` requests get `fail_status`.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    std::atomic<int> requests{0};
    int fail_first = 0;
    int fail_status = 500;
    std::string reply_content = "Likely";
    int port = 0;

    StubServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            const int n = ++requests;
            last_body = req.body;
            auth = req.get_header_value("Authorization");
            if (n <= fail_first) {
                res.status = fail_status;
                res.set_content("{\"error\":\"synthetic failure\"}", "application/json");
                return;
            }
            const json body{
                {"choices", {{{"message", {{"role", "assistant"}, {"content", reply_content}}}}}},
                {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 2}}}};
            res.set_content(body.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
    std::string last_body;
    std::string auth;
};

ModelSpec http_spec(const StubServer& stub) {
    ModelSpec spec;
    spec.backend = Backend::http_openai_compatible;
    spec.model_name = "stub-model";
    spec.endpoint = stub.endpoint();
    spec.api_key_env = "CDRBENCH_TEST_KEY";
    return spec;
}

}  // namespace

TEST_CASE("model specs validate and roundtrip through json") {
    ModelSpec spec;
    CHECK_NOTHROW(spec.validate());

    ModelSpec bad = spec;
    bad.model_name = "";
    CHECK_THROWS_AS(bad.validate(), GatewayError);
    bad = spec;
    bad.max_output_tokens = 4;
    CHECK_THROWS_AS(bad.validate(), GatewayError);
    bad = spec;
    bad.temperature = -1.0;
    CHECK_THROWS_AS(bad.validate(), GatewayError);

    ModelSpec http;
    http.backend = Backend::http_openai_compatible;
    http.endpoint = "not a url";
    CHECK_THROWS_AS(http.validate(), GatewayError);
    http.endpoint = "http://localhost:9999";
    CHECK_NOTHROW(http.validate());

    const auto back = ModelSpec::from_json(http.to_json());
    CHECK(back.backend == http.backend);
    CHECK(back.endpoint == http.endpoint);
    // the short spelling is accepted
    const auto short_form = ModelSpec::from_json(json{{"backend", "http"},
                                                      {"model", "gpt-4o"},
                                                      {"endpoint", "https://x/v1"}});
    CHECK(short_form.backend == Backend::http_openai_compatible);
    CHECK(short_form.model_name == "gpt-4o");
}

TEST_CASE("cache keys separate model, temperature, and prompt") {
    ModelSpec a;
    const auto base = cache_key(a, "prompt one");
    CHECK(base == cache_key(a, "prompt one"));
    CHECK(base != cache_key(a, "prompt two"));
    ModelSpec b = a;
    b.model_name = "other";
    CHECK(base != cache_key(b, "prompt one"));
    ModelSpec c = a;
    c.temperature = 0.7;
    CHECK(base != cache_key(c, "prompt one"));
    // endpoint does not affect identity: the same model behind a proxy
    // must replay from cache
    ModelSpec d = a;
    d.endpoint = "http://somewhere:1234";
    CHECK(base == cache_key(d, "prompt one"));
}

TEST_CASE("response cache stores, probes, and evicts corrupt entries") {
    TempCacheDir tmp;
    ResponseCache cache(tmp.path.string());

    CompletionRecord rec;
    rec.cache_key = "abc123";
    rec.raw_text = "Likely";
    rec.token_usage = {7, 2};
    rec.attempt_count = 1;

    CHECK_FALSE(cache.get("abc123").has_value());
    CHECK(cache.misses() == 1);
    cache.put(rec);
    CHECK(cache.contains("abc123"));
    CHECK(cache.misses() == 1);  // contains() is counter-neutral
    const auto got = cache.get("abc123");
    REQUIRE(got.has_value());
    CHECK(got->raw_text == "Likely");
    CHECK(got->token_usage.input == 7);
    CHECK(got->from_cache);
    CHECK(cache.hits() == 1);

    // corrupt the entry on disk: next get evicts it and reports a miss
    {
        std::ofstream out(tmp.path / "abc123.json", std::ios::trunc);
        out << "{not json";
    }
    CHECK_FALSE(cache.get("abc123").has_value());
    CHECK_FALSE(cache.contains("abc123"));
}

TEST_CASE("mock rating replies track the history mean through the label map") {
    auto inst = testfix::books_movies_instance();
    const auto rating_prompt = make_prompt("rate it", promptgen::Task::rating);
    // target history mean is 5.0 -> top label
    CHECK(mock_complete(rating_prompt, inst) == "Highly Likely");

    // no target history -> source mean 3.25 -> nearest anchored value 3.4
    inst.target_history.clear();
    CHECK(mock_complete(rating_prompt, inst) == "Neutral");

    // no history at all -> 3.0, equidistant between 2.6 and 3.4, ties go up
    inst.source_history.clear();
    CHECK(mock_complete(rating_prompt, inst) == "Neutral");

    // deterministic
    CHECK(mock_complete(rating_prompt, testfix::books_movies_instance()) ==
          mock_complete(rating_prompt, testfix::books_movies_instance()));
}

TEST_CASE("mock ranking replies order candidates by history word overlap") {
    sampler::EvalInstance inst;
    inst.user_id = "u";
    inst.positive_item_id = "i";
    inst.positive_title = "Alpha Beta Gamma";
    inst.source_history = {{"Alpha Beta", 5.0}};
    inst.target_history = {{"Delta Epsilon", 4.0}};
    inst.candidates = {"Zeta Show", "Alpha Beta Gamma", "Alpha Only", "Delta Epsilon Return"};
    inst.positive_position = 1;
    for (std::size_t i = 0; i < inst.candidates.size(); ++i)
        if (i != 1) inst.negatives.push_back({"n" + std::to_string(i), inst.candidates[i]});

    const auto reply =
        mock_complete(make_prompt("rank it", promptgen::Task::ranking), inst);
    // overlap: Alpha Beta Gamma = 2, Delta Epsilon Return = 2, Alpha Only = 1, Zeta = 0;
    // tie between the two 2-overlap titles breaks on the raw title
    CHECK(reply ==
          "[Alpha Beta Gamma, Delta Epsilon Return, Alpha Only, Zeta Show]");

    const auto parsed = respparse::parse_ranking(reply, inst.candidates);
    REQUIRE(parsed.has_value());
    CHECK(parsed->permutation == std::vector<std::size_t>{1, 3, 2, 0});
    CHECK(parsed->appended_missing == 0);
}

TEST_CASE("gateway mock completions carry usage estimates and hit the cache") {
    TempCacheDir tmp;
    ResponseCache cache(tmp.path.string());
    Gateway gw(fast_options());
    const auto inst = testfix::books_movies_instance();
    const auto prompt = make_prompt("some prompt text here", promptgen::Task::rating);

    ModelSpec spec;  // mock
    CHECK_THROWS_AS(gw.complete(prompt, spec, nullptr), GatewayError);

    const auto rec = gw.cached_complete(prompt, spec, cache, &inst);
    CHECK(rec.raw_text == "Highly Likely");
    CHECK(rec.attempt_count == 1);
    CHECK_FALSE(rec.from_cache);
    CHECK(rec.token_usage.input == std::int64_t(prompt.token_estimate));
    CHECK(rec.token_usage.output > 0);

    const auto replay = gw.cached_complete(prompt, spec, cache, &inst);
    CHECK(replay.from_cache);
    CHECK(replay.raw_text == rec.raw_text);
    CHECK(replay.token_usage.input == rec.token_usage.input);
    CHECK(cache.hits() == 1);
}

TEST_CASE("http backend completes against a stub server") {
    setenv("CDRBENCH_TEST_KEY", "sk-test-123", 1);
    StubServer stub;
    Gateway gw(fast_options());
    const auto prompt = make_prompt("please rate", promptgen::Task::rating);

    const auto rec = gw.complete(prompt, http_spec(stub));
    CHECK(rec.raw_text == "Likely");
    CHECK(rec.attempt_count == 1);
    CHECK(rec.token_usage.input == 10);   // from the usage block
    CHECK(rec.token_usage.output == 2);
    CHECK(stub.requests == 1);
    CHECK(stub.auth == "Bearer sk-test-123");

    const auto body = json::parse(stub.last_body);
    CHECK(body["model"] == "stub-model");
    CHECK(body["messages"][0]["content"] == "please rate");
    CHECK(body["temperature"] == 0.0);
}

TEST_CASE("transient server errors are retried until success") {
    setenv("CDRBENCH_TEST_KEY", "sk-test-123", 1);
    StubServer stub;
    stub.fail_first = 2;
    Gateway gw(fast_options());

    const auto rec = gw.complete(make_prompt("p", promptgen::Task::rating), http_spec(stub));
    CHECK(rec.raw_text == "Likely");
    CHECK(rec.attempt_count == 3);
    CHECK(stub.requests == 3);
}

TEST_CASE("retry budget exhaustion surfaces the last status") {
    setenv("CDRBENCH_TEST_KEY", "sk-test-123", 1);
    StubServer stub;
    stub.fail_first = 1000;
    auto opts = fast_options();
    opts.max_attempts = 3;
    Gateway gw(opts);

    try {
        gw.complete(make_prompt("p", promptgen::Task::rating), http_spec(stub));
        FAIL("expected BackendUnavailableError");
    } catch (const BackendUnavailableError& e) {
        CHECK(e.last_status == 500);
    }
    CHECK(stub.requests == 3);
}

TEST_CASE("client errors do not burn retries") {
    setenv("CDRBENCH_TEST_KEY", "sk-test-123", 1);
    StubServer stub;
    stub.fail_first = 1000;
    stub.fail_status = 400;
    Gateway gw(fast_options());

    try {
        gw.complete(make_prompt("p", promptgen::Task::rating), http_spec(stub));
        FAIL("expected BackendUnavailableError");
    } catch (const BackendUnavailableError& e) {
        CHECK(e.last_status == 400);
    }
    CHECK(stub.requests == 1);

    stub.fail_status = 401;
    CHECK_THROWS_AS(gw.complete(make_prompt("p", promptgen::Task::rating), http_spec(stub)),
                    CredentialError);
}

TEST_CASE("a missing api key fails before any network traffic") {
    StubServer stub;
    Gateway gw(fast_options());
    auto spec = http_spec(stub);
    spec.api_key_env = "CDRBENCH_DEFINITELY_UNSET_KEY";
    unsetenv("CDRBENCH_DEFINITELY_UNSET_KEY");

    CHECK_THROWS_AS(gw.complete(make_prompt("p", promptgen::Task::rating), spec),
                    CredentialError);
    CHECK(stub.requests == 0);
}

TEST_CASE("complete_many keeps order and replays entirely from cache") {
    setenv("CDRBENCH_TEST_KEY", "sk-test-123", 1);
    StubServer stub;
    TempCacheDir tmp;
    ResponseCache cache(tmp.path.string());
    auto opts = fast_options();
    opts.max_in_flight = 3;
    Gateway gw(opts);

    std::vector<promptgen::RenderedPrompt> prompts;
    for (int i = 0; i < 10; ++i)
        prompts.push_back(make_prompt("prompt number " + std::to_string(i),
                                      promptgen::Task::rating));

    const auto first = gw.complete_many(prompts, http_spec(stub), &cache);
    REQUIRE(first.size() == 10);
    CHECK(stub.requests == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(first[i].raw_text == "Likely");
        CHECK(first[i].cache_key == cache_key(http_spec(stub), prompts[i].text));
    }

    // warm replay: same results, zero additional requests
    const auto second = gw.complete_many(prompts, http_spec(stub), &cache);
    CHECK(stub.requests == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(second[i].raw_text == first[i].raw_text);
        CHECK(second[i].from_cache);
    }
}

TEST_CASE("complete_many surfaces the first hard failure") {
    setenv("CDRBENCH_TEST_KEY", "sk-test-123", 1);
    StubServer stub;
    stub.fail_first = 1000;
    stub.fail_status = 400;
    auto opts = fast_options();
    opts.max_in_flight = 2;
    Gateway gw(opts);

    std::vector<promptgen::RenderedPrompt> prompts;
    for (int i = 0; i < 4; ++i)
        prompts.push_back(make_prompt("p" + std::to_string(i), promptgen::Task::rating));
    CHECK_THROWS_AS(gw.complete_many(prompts, http_spec(stub), nullptr),
                    BackendUnavailableError);
}
