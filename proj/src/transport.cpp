#include "behave/transport.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <httplib.h>
#include <thread>

namespace behave {

namespace {

std::optional<std::chrono::milliseconds> parse_retry_after(const std::string& value) {
    // Only the delta-seconds form; HTTP-dates are ignored.
    double seconds = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), seconds);
    if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size() || seconds < 0) return std::nullopt;
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(seconds * 1000.0)));
}

}  // namespace

HttpResponse HttpTransport::post_json(const EndpointConfig& cfg, const std::string& body) {
    httplib::Client client(cfg.url.origin());
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers = {{"Accept", "application/json"}};
    if (cfg.api_key) headers.emplace("Authorization", "Bearer " + *cfg.api_key);

    auto res = client.Post(cfg.url.path, headers, body, "application/json");
    if (!res) {
        throw Error(ErrorCode::Transport,
                    "request to " + cfg.url.origin() + " failed: " + httplib::to_string(res.error()));
    }
    HttpResponse out;
    out.status = res->status;
    out.body = std::move(res->body);
    if (res->has_header("Retry-After")) out.retry_after = parse_retry_after(res->get_header_value("Retry-After"));
    return out;
}

Backoff::Backoff(const RetryPolicy& policy)
    : policy_(policy), rng_(policy.jitter_seed.value_or(std::random_device{}())) {}

std::chrono::milliseconds Backoff::next(std::optional<std::chrono::milliseconds> retry_after) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double scale = std::pow(policy_.factor, retries_++) * (1.0 + policy_.jitter * unit(rng_));
    auto delay = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(policy_.base_delay.count()) * scale));
    delay = std::min(delay, policy_.max_delay);
    if (policy_.honor_retry_after && retry_after) delay = std::max(delay, *retry_after);
    delay = std::max(delay, last_);
    last_ = delay;
    return delay;
}

RawResponse send_request(Transport& transport, const EndpointConfig& cfg, const std::string& body,
                         const RetryPolicy& policy, const Sleeper& sleep) {
    Backoff backoff(policy);
    const int max_attempts = std::max(policy.max_attempts, 1);
    auto pause = [&](std::chrono::milliseconds d) {
        if (sleep) {
            sleep(d);
        } else if (d.count() > 0) {
            std::this_thread::sleep_for(d);
        }
    };

    for (int attempt = 1;; ++attempt) {
        HttpResponse res;
        try {
            res = transport.post_json(cfg, body);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Transport || attempt >= max_attempts) throw;
            pause(backoff.next());
            continue;
        }
        if (res.status >= 200 && res.status < 300) return RawResponse{res.status, std::move(res.body), attempt};
        auto err = handle_error_code(res.status);
        if (!err.retryable || attempt >= max_attempts) throw ProviderFailure(std::move(err), res.body);
        pause(backoff.next(res.retry_after));
    }
}

}  // namespace behave
