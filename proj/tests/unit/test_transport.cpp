#include <doctest.h>

#include <cmath>

#include "behave/error.hpp"
#include "behave/mock.hpp"
#include "behave/transport.hpp"
#include "support/scripted_transport.hpp"

using namespace behave;
using namespace std::chrono_literals;
using testing_support::ScriptedTransport;

namespace {

const EndpointConfig kCfg = EndpointConfig::make("http://127.0.0.1:1/v1/chat/completions", "m");
const std::string kOk = R"({"choices":[{"index":0,"message":{"role":"assistant","content":"ok"}}]})";

struct RecordingSleeper {
    std::vector<std::chrono::milliseconds> delays;
    Sleeper fn() {
        return [this](std::chrono::milliseconds d) { delays.push_back(d); };
    }
};

class ThrowingTransport final : public Transport {
public:
    int calls = 0;
    HttpResponse post_json(const EndpointConfig&, const std::string&) override {
        if (++calls < 3) throw Error(ErrorCode::Transport, "connection refused");
        return {200, "{}", std::nullopt};
    }
};

}  // namespace

TEST_CASE("backoff grows geometrically within the jitter band and never decreases") {
    RetryPolicy p;
    p.jitter_seed = 5;
    for (int trial = 0; trial < 50; ++trial) {
        p.jitter_seed = static_cast<std::uint64_t>(trial);
        Backoff b(p);
        std::chrono::milliseconds last{0};
        for (int k = 0; k < 8; ++k) {
            const auto d = b.next();
            const double base = 1000.0 * std::pow(2.0, k);
            CHECK(d >= last);
            CHECK(d.count() <= 60000);
            if (base * 1.5 <= 60000) {
                CHECK(d.count() >= static_cast<long long>(base));
                CHECK(d.count() <= static_cast<long long>(base * 1.5));
            }
            last = d;
        }
    }
}

TEST_CASE("Retry-After raises the delay") {
    RetryPolicy p;
    p.jitter_seed = 1;
    Backoff b(p);
    CHECK(b.next(7000ms) == 7000ms);
    CHECK(b.next() >= 7000ms);
    p.honor_retry_after = false;
    Backoff ignore(p);
    CHECK(ignore.next(7000ms) < 7000ms);
}

TEST_CASE("rate limits are retried until success") {
    ScriptedTransport t({{429, "{}", std::nullopt}, {429, "{}", 2000ms}, {200, kOk, std::nullopt}});
    RecordingSleeper sleeper;
    RetryPolicy p;
    p.jitter_seed = 3;
    const auto raw = send_request(t, kCfg, "{}", p, sleeper.fn());
    CHECK(raw.attempts == 3);
    CHECK(raw.body == kOk);
    CHECK(t.bodies.size() == 3);
    REQUIRE(sleeper.delays.size() == 2);
    CHECK(sleeper.delays[1] >= 2000ms);
}

TEST_CASE("non-retryable statuses fail after one attempt") {
    ScriptedTransport t({{401, R"({"error":{"message":"bad key"}})", std::nullopt}});
    RecordingSleeper sleeper;
    try {
        send_request(t, kCfg, "{}", RetryPolicy{}, sleeper.fn());
        FAIL("expected ProviderFailure");
    } catch (const ProviderFailure& e) {
        CHECK(e.error().status == 401);
        CHECK(e.body().find("bad key") != std::string::npos);
    }
    CHECK(t.bodies.size() == 1);
    CHECK(sleeper.delays.empty());
}

TEST_CASE("retries stop at max_attempts") {
    ScriptedTransport t({{503, "{}", std::nullopt}});
    RecordingSleeper sleeper;
    RetryPolicy p;
    p.max_attempts = 4;
    CHECK_THROWS_AS(send_request(t, kCfg, "{}", p, sleeper.fn()), ProviderFailure);
    CHECK(t.bodies.size() == 4);
    CHECK(sleeper.delays.size() == 3);
}

TEST_CASE("connection failures are retried") {
    ThrowingTransport t;
    RecordingSleeper sleeper;
    const auto raw = send_request(t, kCfg, "{}", RetryPolicy{}, sleeper.fn());
    CHECK(raw.attempts == 3);
}

TEST_CASE("HTTP transport talks to the mock server and reports Retry-After") {
    auto scenario = mock::parse_scenario(
        R"({"rules":[{"match":"busy","status_sequence":[429],"retry_after":1.5,"response":{"text":"late"}}],
            "default_response":{"text":"hello there"}})");
    mock::Server server(scenario);
    server.start();
    const auto cfg = EndpointConfig::make(server.base_url() + "/chat/completions", "mock-model", "secret");
    HttpTransport http;

    const auto ok = http.post_json(cfg, R"({"model":"mock-model","messages":[{"role":"user","content":"hi"}]})");
    CHECK(ok.status == 200);
    CHECK(ok.body.find("hello there") != std::string::npos);

    const auto busy = http.post_json(cfg, R"({"model":"mock-model","messages":[{"role":"user","content":"busy"}]})");
    CHECK(busy.status == 429);
    CHECK(busy.retry_after == 1500ms);

    server.stop();
    const auto refused = EndpointConfig::make("http://127.0.0.1:" + std::to_string(server.port()) + "/v1/completions", "m");
    HttpTransport quick(std::chrono::seconds(2));
    try {
        quick.post_json(refused, "{}");
        FAIL("expected a transport error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Transport);
    }
}
