#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "behave/protocol.hpp"

namespace behave {

struct HttpResponse {
    int status = 0;
    std::string body;
    std::optional<std::chrono::milliseconds> retry_after;
};

// POSTs a JSON body to the endpoint. Implementations throw
// Error{Transport} for connection-level failures.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post_json(const EndpointConfig& cfg, const std::string& body) = 0;
};

class HttpTransport final : public Transport {
public:
    explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}
    HttpResponse post_json(const EndpointConfig& cfg, const std::string& body) override;

private:
    std::chrono::seconds timeout_;
};

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double factor = 2.0;
    // Each delay is scaled by (1 + jitter * u), u uniform in [0, 1). Values
    // below factor - 1 keep successive delays non-decreasing.
    double jitter = 0.5;
    std::chrono::milliseconds max_delay{60000};
    bool honor_retry_after = true;
    std::optional<std::uint64_t> jitter_seed;
};

// Stateful delay sequence for one request. Delays never decrease.
class Backoff {
public:
    explicit Backoff(const RetryPolicy& policy);
    std::chrono::milliseconds next(std::optional<std::chrono::milliseconds> retry_after = std::nullopt);

private:
    RetryPolicy policy_;
    std::mt19937_64 rng_;
    int retries_ = 0;
    std::chrono::milliseconds last_{0};
};

struct RawResponse {
    int status = 0;
    std::string body;
    int attempts = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Sends with retries on 429/5xx and transport failures. Returns the 2xx body
// verbatim; throws ProviderFailure (or the final transport Error) otherwise.
RawResponse send_request(Transport& transport, const EndpointConfig& cfg, const std::string& body,
                         const RetryPolicy& policy, const Sleeper& sleep = {});

}  // namespace behave
