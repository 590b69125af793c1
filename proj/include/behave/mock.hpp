#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "behave/design.hpp"
#include "behave/protocol.hpp"

namespace behave::mock {

struct WeightedText {
    std::string text;
    double probability = 0.0;
};

// Either a fixed text or a categorical distribution over texts, plus an
// optional per-position logprob table (token -> probability, in file order).
struct ScriptedResponse {
    std::optional<std::string> text;
    std::vector<WeightedText> distribution;
    std::vector<std::vector<WeightedText>> logprob_table;
};

enum class MatchKind { Substring, Regex };

struct Rule {
    MatchKind kind = MatchKind::Substring;
    std::string pattern;
    std::regex compiled;
    std::vector<ScriptedResponse> responses;  // consumed in order, cycling
    std::vector<int> status_sequence;         // one status per matched request, then 200
    std::optional<std::chrono::milliseconds> latency;
    std::optional<double> retry_after_seconds;  // sent with non-2xx statuses

    bool matches(std::string_view subject) const;
};

struct Scenario {
    std::vector<Rule> rules;
    ScriptedResponse default_response{std::string("OK"), {}, {}};
    std::uint64_t seed = 0;
};

// Parses the JSON scenario format (see docs/scenario.md). Throws
// Error{Scenario} carrying the parse location or the offending field.
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::string& path);

// Draws one text from a categorical distribution.
std::string stochastic_emit(const std::vector<WeightedText>& distribution, CounterRng& rng);

struct CapturedRequest {
    std::uint64_t sequence = 0;
    std::int64_t timestamp_ms = 0;
    std::string endpoint;
    std::string body;  // byte-identical to what the client sent
    int status = 0;
};

// Deterministic request handling shared by the HTTP server and tests: given
// an endpoint path and raw body, produces the status and response payload.
class Engine {
public:
    explicit Engine(Scenario scenario);

    struct Reply {
        int status = 200;
        std::string body;
        std::optional<double> retry_after_seconds;
        std::optional<std::chrono::milliseconds> latency;
    };

    Reply handle(std::string_view endpoint, const std::string& body);

    std::vector<CapturedRequest> captures() const;
    void clear_captures();
    std::string captures_json() const;

private:
    struct RuleState {
        std::size_t next_response = 0;
        std::size_t next_status = 0;
    };

    Reply respond(EndpointMode mode, const OrderedJson& request, const std::string& body);

    Scenario scenario_;
    mutable std::mutex mu_;
    std::vector<RuleState> state_;
    std::vector<CapturedRequest> captures_;
    std::uint64_t unseeded_draws_ = 0;
};

// HTTP front end exposing /v1/chat/completions, /v1/completions and the
// /__captures admin endpoint (GET dumps, DELETE clears).
class Server {
public:
    Server(Scenario scenario, std::string host = "127.0.0.1", int port = 0);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts serving on a background thread. Throws Error{Bind}.
    void start();
    void stop();
    // Blocks until stop() is called from another thread.
    void wait();

    int port() const noexcept { return port_; }
    const std::string& host() const noexcept { return host_; }
    std::string base_url() const;

    Engine& engine() noexcept { return engine_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    Engine engine_;
    std::string host_;
    int port_;
};

}  // namespace behave::mock
