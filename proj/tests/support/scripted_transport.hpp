#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "behave/mock.hpp"
#include "behave/transport.hpp"

namespace testing_support {

// Replays a fixed list of responses, then repeats the last one.
class ScriptedTransport final : public behave::Transport {
public:
    explicit ScriptedTransport(std::vector<behave::HttpResponse> script) : script_(std::move(script)) {}

    behave::HttpResponse post_json(const behave::EndpointConfig&, const std::string& body) override {
        std::lock_guard lock(mu_);
        bodies.push_back(body);
        const auto i = std::min(next_++, script_.size() - 1);
        return script_[i];
    }

    std::vector<std::string> bodies;

private:
    std::mutex mu_;
    std::vector<behave::HttpResponse> script_;
    std::size_t next_ = 0;
};

// Routes requests to an in-process mock engine without sockets.
class EngineTransport final : public behave::Transport {
public:
    explicit EngineTransport(behave::mock::Scenario scenario) : engine(std::move(scenario)) {}

    behave::HttpResponse post_json(const behave::EndpointConfig& cfg, const std::string& body) override {
        auto reply = engine.handle(cfg.url.path, body);
        behave::HttpResponse r{reply.status, reply.body, std::nullopt};
        if (reply.retry_after_seconds) {
            r.retry_after = std::chrono::milliseconds(static_cast<long long>(*reply.retry_after_seconds * 1000));
        }
        return r;
    }

    behave::mock::Engine engine;
};

}  // namespace testing_support
