#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <random>
#include <thread>

#include "guidemod/gateway.hpp"
#include "support/helpers.hpp"

using namespace guidemod;
using testsupport::TempDir;

namespace {

gateway::CompletionRequest make_request(const std::string& user_text,
                                        const std::string& model_id = "test-model") {
    gateway::CompletionRequest request;
    request.model.family = gateway::ModelFamily::gpt;
    request.model.model_id = model_id;
    request.model.reasoning_options = {{"reasoning_effort", "low"}};
    request.system_text = "system";
    request.user_text = user_text;
    return request;
}

class CannedProvider : public gateway::Provider {
public:
    explicit CannedProvider(std::string text) : text_(std::move(text)) {}
    gateway::CompletionResponse complete(const gateway::CompletionRequest& request) override {
        ++calls;
        gateway::CompletionResponse resp;
        resp.text = text_ + ":" + request.user_text;
        resp.input_tokens = 10;
        resp.output_tokens = 5;
        resp.latency_seconds = 0.25;
        return resp;
    }
    std::string name() const override { return "canned"; }
    int calls = 0;

private:
    std::string text_;
};

}  // namespace

TEST_CASE("request hash is stable, field-sensitive and price-insensitive") {
    const auto a = make_request("hello");
    CHECK(a.hash() == make_request("hello").hash());
    CHECK(a.hash() != make_request("hello2").hash());

    auto b = make_request("hello");
    b.model.reasoning_options["reasoning_effort"] = "high";
    CHECK(a.hash() != b.hash());

    auto c = make_request("hello");
    c.decoding["temperature"] = "0.2";
    CHECK(a.hash() != c.hash());

    auto repriced = make_request("hello");
    repriced.model.price_in = 99.0;
    repriced.model.price_out = 99.0;
    CHECK(a.hash() == repriced.hash());  // prices are accounting, not semantics
}

TEST_CASE("record then replay returns the identical response") {
    TempDir dir("gw-rr");
    auto provider = std::make_shared<CannedProvider>("ok");
    auto store = std::make_shared<gateway::ReplayStore>(dir.path());
    gateway::CompletionGateway recorder(gateway::GatewayMode::record, provider, store);

    const auto request = make_request("payload");
    const auto live = recorder.complete(request, 0);
    CHECK(live.text == "ok:payload");
    CHECK(provider->calls == 1);

    gateway::CompletionGateway replayer(gateway::GatewayMode::replay, nullptr, store);
    const auto replayed = replayer.complete(request, 0);
    CHECK(replayed.text == live.text);
    CHECK(replayed.input_tokens == live.input_tokens);
    CHECK(replayed.output_tokens == live.output_tokens);
    CHECK(replayed.latency_seconds == live.latency_seconds);

    // recording the same request again hits the store, not the provider
    const auto again = recorder.complete(request, 1);
    CHECK(provider->calls == 1);
    CHECK(again.text == live.text);
}

TEST_CASE("replay of an unknown hash is a fixture-missing error, never a live call") {
    TempDir dir("gw-miss");
    auto store = std::make_shared<gateway::ReplayStore>(dir.path());
    gateway::CompletionGateway replayer(gateway::GatewayMode::replay, nullptr, store);
    CHECK_THROWS_AS(replayer.complete(make_request("never recorded"), 0),
                    gateway::FixtureMissingError);
}

TEST_CASE("shuffled replay serves every hash its own response") {
    TempDir dir("gw-shuffle");
    auto provider = std::make_shared<CannedProvider>("r");
    auto store = std::make_shared<gateway::ReplayStore>(dir.path());
    gateway::CompletionGateway recorder(gateway::GatewayMode::record, provider, store);

    std::vector<gateway::CompletionRequest> requests;
    for (int i = 0; i < 10; ++i) requests.push_back(make_request("req-" + std::to_string(i)));
    for (const auto& r : requests) recorder.complete(r, 0);

    std::mt19937_64 rng(5);
    std::shuffle(requests.begin(), requests.end(), rng);
    gateway::CompletionGateway replayer(gateway::GatewayMode::replay, nullptr, store);
    for (const auto& r : requests) {
        CHECK(replayer.complete(r, 0).text == "r:" + r.user_text);
    }
}

TEST_CASE("http provider retries 429/5xx with backoff and gives up with an attempt log") {
    std::atomic<int> hits{0};
    std::atomic<bool> always_rate_limit{false};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int n = ++hits;
        if (always_rate_limit.load() || n <= 2) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        nlohmann::json body{
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "done"}}}}}},
            {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}};
        res.set_content(body.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("GUIDEMOD_TEST_KEY", "k", 1);
    gateway::HttpProviderConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.api_key_env = "GUIDEMOD_TEST_KEY";
    auto provider = std::make_shared<gateway::HttpProvider>(config);

    gateway::RetryPolicy fast{.max_attempts = 3, .base_backoff_ms = 1};
    gateway::CompletionGateway gw(gateway::GatewayMode::live, provider, nullptr, fast);
    const auto resp = gw.complete(make_request("via http"), 0);
    CHECK(resp.text == "done");
    CHECK(resp.input_tokens == 7);
    CHECK(resp.output_tokens == 3);
    CHECK(hits.load() == 3);

    // now the server always rate-limits: expect a transport error with the
    // per-attempt log after exhausting the budget
    always_rate_limit.store(true);
    try {
        gw.complete(make_request("exhausted"), 0);
        FAIL("expected TransportError");
    } catch (const gateway::TransportError& e) {
        CHECK(e.attempts().size() == 3);
        CHECK(std::string(e.what()).find("429") != std::string::npos);
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("non-transient http failures do not retry") {
    std::atomic<int> hits{0};
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("GUIDEMOD_TEST_KEY", "k", 1);
    gateway::HttpProviderConfig config;
    config.endpoint = "http://127.0.0.1:" + std::to_string(port);
    config.api_key_env = "GUIDEMOD_TEST_KEY";
    gateway::CompletionGateway gw(gateway::GatewayMode::live,
                                  std::make_shared<gateway::HttpProvider>(config), nullptr,
                                  {.max_attempts = 3, .base_backoff_ms = 1});
    CHECK_THROWS_AS(gw.complete(make_request("bad"), 0), std::runtime_error);
    CHECK(hits.load() == 1);

    server.stop();
    server_thread.join();
}

TEST_CASE("scripted provider fires the first rule whose needles all match") {
    gateway::ScriptedProvider provider(
        {{{"alpha", "beta"}, {"both", 0, 0, 0.0}}, {{"alpha"}, {"only alpha", 0, 0, 0.0}}});
    CHECK(provider.complete(make_request("has alpha and beta")).text == "both");
    CHECK(provider.complete(make_request("alpha alone")).text == "only alpha");
    CHECK_THROWS(provider.complete(make_request("neither")));
}

TEST_CASE("extract_payload: floor case, fenced block, prose, failure modes") {
    CHECK(gateway::extract_payload(R"({"annotations": []})").empty());

    const std::string fenced =
        "Sure, here you go:\n```json\n{\"annotations\": [{\"begin\": 1}]}\n```\nanything else?";
    const auto arr = gateway::extract_payload(fenced);
    REQUIRE(arr.size() == 1);
    CHECK(arr[0]["begin"] == 1);

    // an earlier balanced object without the payload key is skipped
    const auto skipping = gateway::extract_payload(
        R"(meta: {"note": "x"} and payload {"annotations": [{"begin": 2}]})");
    CHECK(skipping[0]["begin"] == 2);

    // braces inside strings do not confuse the scanner
    const auto tricky = gateway::extract_payload(
        R"({"annotations": [{"span_text": "curly } inside", "begin": 3}]})");
    CHECK(tricky[0]["begin"] == 3);

    CHECK_THROWS_AS(gateway::extract_payload(R"({"annotations": [)"), gateway::PayloadError);
    CHECK_THROWS_AS(gateway::extract_payload("no json at all"), gateway::PayloadError);
    CHECK_THROWS_AS(gateway::extract_payload(R"({"other": 1})"), gateway::PayloadError);
    try {
        gateway::extract_payload("raw text {{{");
        FAIL("expected PayloadError");
    } catch (const gateway::PayloadError& e) {
        CHECK(e.raw_text() == "raw text {{{");  // carried for the repair path
    }
}

TEST_CASE("cost ledger: unit prices, zero tokens, summation oracle") {
    gateway::ModelSpec model;
    model.model_id = "m";
    model.price_in = 1.0;
    model.price_out = 2.0;

    gateway::CostLedger ledger;
    ledger.record_cost({"", 0, 0, 0.0}, model, 0, "h0");
    CHECK(ledger.cost_of(0) == 0.0);

    ledger.record_cost({"", 1000000, 1000000, 30.0}, model, 1, "h1");
    CHECK(ledger.cost_of(1) == doctest::Approx(3.0));
    CHECK(ledger.minutes_of(1) == doctest::Approx(0.5));

    // random call log vs an independent sum
    std::mt19937_64 rng(61);
    gateway::CostLedger random_ledger;
    std::map<int, double> oracle_cost;
    std::map<int, double> oracle_seconds;
    for (int i = 0; i < 200; ++i) {
        const int iteration = static_cast<int>(rng() % 5);
        gateway::CompletionResponse resp;
        resp.input_tokens = static_cast<long>(rng() % 100000);
        resp.output_tokens = static_cast<long>(rng() % 100000);
        resp.latency_seconds = static_cast<double>(rng() % 1000) / 100.0;
        random_ledger.record_cost(resp, model, iteration, "h" + std::to_string(i));
        oracle_cost[iteration] += static_cast<double>(resp.input_tokens) * 1.0 / 1e6 +
                                  static_cast<double>(resp.output_tokens) * 2.0 / 1e6;
        oracle_seconds[iteration] += resp.latency_seconds;
    }
    double total = 0.0;
    for (const auto& [iteration, cost] : oracle_cost) {
        CHECK(random_ledger.cost_of(iteration) == doctest::Approx(cost).epsilon(1e-12));
        CHECK(random_ledger.minutes_of(iteration) ==
              doctest::Approx(oracle_seconds[iteration] / 60.0).epsilon(1e-12));
        total += cost;
    }
    CHECK(random_ledger.total_cost() == doctest::Approx(total).epsilon(1e-12));
    CHECK(random_ledger.iterations() == std::vector<int>{0, 1, 2, 3, 4});
}
