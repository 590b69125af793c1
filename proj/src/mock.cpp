#include "behave/mock.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <httplib.h>
#include <sstream>
#include <thread>

#include "text_util.hpp"

namespace behave::mock {

namespace {

Error scenario_error(const std::string& where, const std::string& what) {
    return Error(ErrorCode::Scenario, where + ": " + what);
}

std::vector<WeightedText> parse_weighted_object(const OrderedJson& obj, const std::string& where) {
    if (!obj.is_object() || obj.empty()) throw scenario_error(where, "expected a non-empty {token: probability} object");
    std::vector<WeightedText> out;
    double total = 0;
    for (auto& [token, p] : obj.items()) {
        if (!p.is_number()) throw scenario_error(where + "." + token, "probability must be a number");
        const double v = p.get<double>();
        if (!(v > 0.0 && v <= 1.0)) throw scenario_error(where + "." + token, "probability must be in (0, 1]");
        total += v;
        out.push_back({token, v});
    }
    if (total > 1.0 + 1e-9) throw scenario_error(where, "probabilities sum to more than 1");
    return out;
}

ScriptedResponse parse_response(const OrderedJson& j, const std::string& where) {
    if (j.is_string()) return ScriptedResponse{j.get<std::string>(), {}, {}};
    if (!j.is_object()) throw scenario_error(where, "expected an object or a string");
    ScriptedResponse r;
    if (j.contains("text")) {
        if (!j["text"].is_string()) throw scenario_error(where + ".text", "must be a string");
        r.text = j["text"].get<std::string>();
    }
    if (j.contains("distribution")) {
        if (r.text) throw scenario_error(where, "give either text or distribution, not both");
        const auto& d = j["distribution"];
        if (!d.is_array() || d.empty()) throw scenario_error(where + ".distribution", "expected a non-empty array");
        double total = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto at = where + ".distribution[" + std::to_string(i) + "]";
            if (!d[i].is_object() || !d[i].contains("text") || !d[i].contains("p")) {
                throw scenario_error(at, "expected {\"text\": ..., \"p\": ...}");
            }
            const double p = d[i]["p"].get<double>();
            if (!(p >= 0.0 && p <= 1.0)) throw scenario_error(at + ".p", "probability must be in [0, 1]");
            total += p;
            r.distribution.push_back({d[i]["text"].get<std::string>(), p});
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw scenario_error(where + ".distribution", "probabilities sum to " + std::to_string(total) + ", not 1");
        }
    }
    if (j.contains("logprobs")) {
        const auto& table = j["logprobs"];
        if (!table.is_array()) throw scenario_error(where + ".logprobs", "expected an array of per-position objects");
        for (std::size_t i = 0; i < table.size(); ++i) {
            auto pos = parse_weighted_object(table[i], where + ".logprobs[" + std::to_string(i) + "]");
            std::stable_sort(pos.begin(), pos.end(),
                             [](const WeightedText& a, const WeightedText& b) { return a.probability > b.probability; });
            r.logprob_table.push_back(std::move(pos));
        }
    }
    if (!r.text && r.distribution.empty()) {
        if (r.logprob_table.empty()) throw scenario_error(where, "needs text, distribution or logprobs");
        std::string text;
        for (const auto& pos : r.logprob_table) text += pos.front().text;
        r.text = std::move(text);
    }
    return r;
}

}  // namespace

bool Rule::matches(std::string_view subject) const {
    if (kind == MatchKind::Substring) return subject.find(pattern) != std::string_view::npos;
    return std::regex_search(subject.begin(), subject.end(), compiled);
}

Scenario parse_scenario(std::string_view json_text) {
    OrderedJson doc;
    try {
        doc = OrderedJson::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Scenario, std::string("scenario is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw scenario_error("scenario", "top level must be an object");
    Scenario sc;
    try {
        if (doc.contains("seed")) sc.seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("default_response")) sc.default_response = parse_response(doc["default_response"], "default_response");
        if (doc.contains("rules")) {
            const auto& rules = doc["rules"];
            if (!rules.is_array()) throw scenario_error("rules", "expected an array");
            for (std::size_t i = 0; i < rules.size(); ++i) {
                const auto where = "rules[" + std::to_string(i) + "]";
                const auto& rj = rules[i];
                if (!rj.is_object()) throw scenario_error(where, "expected an object");
                Rule rule;
                if (rj.contains("match") == rj.contains("regex")) {
                    throw scenario_error(where, "give exactly one of \"match\" (substring) or \"regex\"");
                }
                if (rj.contains("match")) {
                    rule.pattern = rj["match"].get<std::string>();
                } else {
                    rule.kind = MatchKind::Regex;
                    rule.pattern = rj["regex"].get<std::string>();
                    try {
                        rule.compiled = std::regex(rule.pattern, std::regex::ECMAScript);
                    } catch (const std::regex_error& e) {
                        throw scenario_error(where + ".regex", std::string("invalid pattern: ") + e.what());
                    }
                }
                if (rj.contains("response")) rule.responses.push_back(parse_response(rj["response"], where + ".response"));
                if (rj.contains("responses")) {
                    const auto& rs = rj["responses"];
                    if (!rs.is_array()) throw scenario_error(where + ".responses", "expected an array");
                    for (std::size_t k = 0; k < rs.size(); ++k) {
                        rule.responses.push_back(parse_response(rs[k], where + ".responses[" + std::to_string(k) + "]"));
                    }
                }
                if (rj.contains("status_sequence")) {
                    for (const auto& s : rj["status_sequence"]) {
                        const int status = s.get<int>();
                        if (status < 100 || status > 599) throw scenario_error(where + ".status_sequence", "bad HTTP status");
                        rule.status_sequence.push_back(status);
                    }
                }
                if (rj.contains("latency_ms")) rule.latency = std::chrono::milliseconds(rj["latency_ms"].get<std::int64_t>());
                if (rj.contains("retry_after")) rule.retry_after_seconds = rj["retry_after"].get<double>();
                sc.rules.push_back(std::move(rule));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Scenario, std::string("scenario field has the wrong type: ") + e.what());
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open scenario file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scenario(buf.str());
    } catch (const Error& e) {
        throw Error(ErrorCode::Scenario, path + ": " + e.what());
    }
}

std::string stochastic_emit(const std::vector<WeightedText>& distribution, CounterRng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& w : distribution) {
        acc += w.probability;
        if (u < acc) return w.text;
    }
    // u landed past the rounded cumulative sum.
    for (auto it = distribution.rbegin(); it != distribution.rend(); ++it) {
        if (it->probability > 0) return it->text;
    }
    return distribution.empty() ? std::string() : distribution.back().text;
}

Engine::Engine(Scenario scenario) : scenario_(std::move(scenario)), state_(scenario_.rules.size()) {}

namespace {

std::string content_text(const OrderedJson& content) {
    if (content.is_string()) return content.get<std::string>();
    std::string out;
    if (content.is_array()) {
        for (const auto& part : content) {
            if (part.is_object() && part.value("type", "") == "text" && part.contains("text")) {
                out += part["text"].get<std::string>();
            }
        }
    }
    return out;
}

std::string match_subject(EndpointMode mode, const OrderedJson& request) {
    if (mode == EndpointMode::Text) {
        const auto& prompt = request.at("prompt");
        if (prompt.is_array()) return prompt.empty() ? std::string() : prompt[0].get<std::string>();
        return prompt.get<std::string>();
    }
    const auto& messages = request.at("messages");
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->value("role", "") == "user") return content_text(it->at("content"));
    }
    return {};
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t j = i;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        words.push_back(text.substr(i, j - i));
        i = j;
    }
    return words;
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << v;
    return s.str();
}

std::string error_body(int status) {
    const auto err = handle_error_code(status);
    std::string type = status == 429 ? "rate_limit_error" : status >= 500 ? "server_error" : "invalid_request_error";
    OrderedJson body{{"error", OrderedJson{{"message", err.explanation}, {"type", type}, {"code", status}}}};
    return body.dump();
}

}  // namespace

Engine::Reply Engine::handle(std::string_view endpoint, const std::string& body) {
    std::lock_guard lock(mu_);
    Reply reply;
    OrderedJson request;
    std::optional<EndpointMode> mode;
    if (endpoint.ends_with("/chat/completions")) {
        mode = EndpointMode::Chat;
    } else if (endpoint.ends_with("/completions")) {
        mode = EndpointMode::Text;
    }

    try {
        if (!mode) {
            reply.status = 404;
            reply.body = error_body(404);
        } else {
            request = OrderedJson::parse(body);
            reply = respond(*mode, request, body);
        }
    } catch (const nlohmann::json::exception& e) {
        reply = Reply{};
        reply.status = 400;
        OrderedJson err{{"error", OrderedJson{{"message", std::string("invalid request: ") + e.what()},
                                              {"type", "invalid_request_error"},
                                              {"code", 400}}}};
        reply.body = err.dump();
    }

    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now().time_since_epoch());
    captures_.push_back(CapturedRequest{captures_.size() + 1, now.count(), std::string(endpoint), body, reply.status});
    return reply;
}

Engine::Reply Engine::respond(EndpointMode mode, const OrderedJson& request, const std::string& body) {
    Reply reply;
    const std::string subject = match_subject(mode, request);

    const Rule* rule = nullptr;
    RuleState* state = nullptr;
    for (std::size_t i = 0; i < scenario_.rules.size(); ++i) {
        if (scenario_.rules[i].matches(subject)) {
            rule = &scenario_.rules[i];
            state = &state_[i];
            break;
        }
    }
    if (rule) {
        reply.latency = rule->latency;
        if (state->next_status < rule->status_sequence.size()) {
            const int status = rule->status_sequence[state->next_status++];
            if (status < 200 || status >= 300) {
                reply.status = status;
                reply.body = error_body(status);
                reply.retry_after_seconds = rule->retry_after_seconds;
                return reply;
            }
        }
    }
    const ScriptedResponse& scripted =
        rule && !rule->responses.empty() ? rule->responses[state->next_response++ % rule->responses.size()]
                                         : scenario_.default_response;

    const int n = request.value("n", 1);
    const int max_tokens = request.value("max_tokens", -1);
    int top_k = 0;
    bool want_logprobs = false;
    if (mode == EndpointMode::Chat) {
        want_logprobs = request.value("logprobs", false);
        top_k = request.value("top_logprobs", 0);
    } else if (request.contains("logprobs") && request["logprobs"].is_number_integer()) {
        top_k = request["logprobs"].get<int>();
        want_logprobs = top_k > 0;
    }
    const std::optional<std::uint64_t> request_seed =
        request.contains("seed") && request["seed"].is_number_integer()
            ? std::optional<std::uint64_t>(request["seed"].get<std::int64_t>())
            : std::nullopt;

    OrderedJson choices = OrderedJson::array();
    std::size_t completion_tokens = 0;
    for (int i = 0; i < std::max(n, 1); ++i) {
        std::string text;
        if (scripted.text) {
            text = *scripted.text;
        } else {
            const auto key = request_seed
                                 ? CounterRng::derive_key(scenario_.seed, {*request_seed, static_cast<std::uint64_t>(i),
                                                                           detail::fnv1a(subject)})
                                 : CounterRng::derive_key(scenario_.seed, {unseeded_draws_++});
            CounterRng rng(key);
            text = stochastic_emit(scripted.distribution, rng);
        }
        std::string finish = "stop";
        auto words = split_words(text);
        if (max_tokens >= 0 && words.size() > static_cast<std::size_t>(max_tokens)) {
            words.resize(static_cast<std::size_t>(max_tokens));
            text.clear();
            for (const auto& w : words) text += w;
            finish = "length";
        }
        completion_tokens += words.size();

        OrderedJson lp = nullptr;
        if (want_logprobs) {
            std::vector<std::vector<WeightedText>> positions = scripted.logprob_table;
            if (positions.empty()) {
                for (const auto& w : words) positions.push_back({WeightedText{w, 1.0}});
            }
            if (mode == EndpointMode::Chat) {
                OrderedJson content = OrderedJson::array();
                for (const auto& pos : positions) {
                    OrderedJson top = OrderedJson::array();
                    for (std::size_t k = 0; k < pos.size() && static_cast<int>(k) < top_k; ++k) {
                        top.push_back(OrderedJson{{"token", pos[k].text}, {"logprob", std::log(pos[k].probability)}});
                    }
                    content.push_back(OrderedJson{{"token", pos.front().text},
                                                  {"logprob", std::log(pos.front().probability)},
                                                  {"top_logprobs", std::move(top)}});
                }
                lp = OrderedJson{{"content", std::move(content)}};
            } else {
                OrderedJson tokens = OrderedJson::array(), token_lps = OrderedJson::array(),
                            tops = OrderedJson::array(), offsets = OrderedJson::array();
                std::size_t offset = 0;
                for (const auto& pos : positions) {
                    tokens.push_back(pos.front().text);
                    token_lps.push_back(std::log(pos.front().probability));
                    OrderedJson top = OrderedJson::object();
                    for (std::size_t k = 0; k < pos.size() && static_cast<int>(k) < top_k; ++k) {
                        top[pos[k].text] = std::log(pos[k].probability);
                    }
                    tops.push_back(std::move(top));
                    offsets.push_back(offset);
                    offset += pos.front().text.size();
                }
                lp = OrderedJson{{"tokens", std::move(tokens)},
                                 {"token_logprobs", std::move(token_lps)},
                                 {"top_logprobs", std::move(tops)},
                                 {"text_offset", std::move(offsets)}};
            }
        }

        if (mode == EndpointMode::Chat) {
            choices.push_back(OrderedJson{{"index", i},
                                          {"message", OrderedJson{{"role", "assistant"}, {"content", text}}},
                                          {"logprobs", std::move(lp)},
                                          {"finish_reason", finish}});
        } else {
            choices.push_back(
                OrderedJson{{"index", i}, {"text", text}, {"logprobs", std::move(lp)}, {"finish_reason", finish}});
        }
    }

    const auto prompt_tokens = split_words(subject).size();
    OrderedJson out;
    out["id"] = "mockcmpl-" + hex(detail::fnv1a(body));
    out["object"] = mode == EndpointMode::Chat ? "chat.completion" : "text_completion";
    out["created"] = 0;
    out["model"] = request.value("model", "mock");
    out["choices"] = std::move(choices);
    out["usage"] = OrderedJson{{"prompt_tokens", prompt_tokens},
                               {"completion_tokens", completion_tokens},
                               {"total_tokens", prompt_tokens + completion_tokens}};
    reply.body = out.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    return reply;
}

std::vector<CapturedRequest> Engine::captures() const {
    std::lock_guard lock(mu_);
    return captures_;
}

void Engine::clear_captures() {
    std::lock_guard lock(mu_);
    captures_.clear();
}

std::string Engine::captures_json() const {
    std::lock_guard lock(mu_);
    OrderedJson arr = OrderedJson::array();
    for (const auto& c : captures_) {
        arr.push_back(OrderedJson{{"sequence", c.sequence},
                                  {"timestamp_ms", c.timestamp_ms},
                                  {"endpoint", c.endpoint},
                                  {"body", c.body},
                                  {"status", c.status}});
    }
    return arr.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

struct Server::Impl {
    httplib::Server http;
    std::thread thread;
};

Server::Server(Scenario scenario, std::string host, int port)
    : impl_(std::make_unique<Impl>()), engine_(std::move(scenario)), host_(std::move(host)), port_(port) {}

Server::~Server() { stop(); }

void Server::start() {
    auto& http = impl_->http;
    auto completion = [this](const httplib::Request& req, httplib::Response& res) {
        auto reply = engine_.handle(req.path, req.body);
        if (reply.latency && reply.latency->count() > 0) std::this_thread::sleep_for(*reply.latency);
        res.status = reply.status;
        if (reply.retry_after_seconds) {
            std::ostringstream s;
            s << *reply.retry_after_seconds;
            res.set_header("Retry-After", s.str());
        }
        res.set_content(reply.body, "application/json");
    };
    http.Post(R"(.*/completions)", completion);
    http.Get("/__captures", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(engine_.captures_json(), "application/json");
    });
    http.Delete("/__captures", [this](const httplib::Request&, httplib::Response& res) {
        engine_.clear_captures();
        res.status = 204;
    });

    http.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    if (port_ == 0) {
        port_ = http.bind_to_any_port(host_);
        if (port_ < 0) {
            port_ = 0;
            throw Error(ErrorCode::Bind, "cannot bind an ephemeral port on " + host_);
        }
    } else if (!http.bind_to_port(host_, port_)) {
        throw Error(ErrorCode::Bind, "cannot bind " + host_ + ":" + std::to_string(port_));
    }
    impl_->thread = std::thread([&http] { http.listen_after_bind(); });
    http.wait_until_ready();
}

void Server::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Server::wait() {
    while (impl_->http.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

std::string Server::base_url() const { return "http://" + host_ + ":" + std::to_string(port_) + "/v1"; }

}  // namespace behave::mock
