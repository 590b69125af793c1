#include "behave/protocol.hpp"

#include <algorithm>
#include <array>
#include <charconv>

#include "text_util.hpp"

namespace behave {

const char* to_string(EndpointMode mode) noexcept { return mode == EndpointMode::Chat ? "chat" : "text"; }

const char* to_string(Role role) noexcept {
    switch (role) {
        case Role::System: return "system";
        case Role::Assistant: return "assistant";
        case Role::User: break;
    }
    return "user";
}

std::string HttpUrl::origin() const {
    const bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
    return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
}

HttpUrl parse_http_url(std::string_view url) {
    HttpUrl out;
    auto fail = [&](const std::string& why) {
        return Error(ErrorCode::InvalidArgument, "invalid API URL '" + std::string(url) + "': " + why);
    };
    auto sep = url.find("://");
    if (sep == std::string_view::npos) throw fail("missing scheme");
    out.scheme = detail::to_lower(url.substr(0, sep));
    if (out.scheme != "http" && out.scheme != "https") throw fail("scheme must be http or https");
    auto rest = url.substr(sep + 3);
    const auto slash_it = std::find(rest.begin(), rest.end(), '/');
    const auto slash = slash_it == rest.end() ? std::string_view::npos
                                              : static_cast<std::size_t>(slash_it - rest.begin());
    auto authority = rest.substr(0, slash);
    out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    if (authority.empty()) throw fail("missing host");
    out.port = out.scheme == "https" ? 443 : 80;
    if (authority.front() == '[') {
        auto close = authority.find(']');
        if (close == std::string_view::npos) throw fail("unterminated IPv6 literal");
        out.host = std::string(authority.substr(1, close - 1));
        authority.remove_prefix(close + 1);
        if (!authority.empty() && authority.front() != ':') throw fail("bad port");
    } else {
        auto colon = authority.rfind(':');
        out.host = std::string(authority.substr(0, colon));
        authority = colon == std::string_view::npos ? std::string_view{} : authority.substr(colon);
    }
    if (!authority.empty()) {
        auto digits = authority.substr(1);
        int port = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
        if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size() || port < 1 ||
            port > 65535) {
            throw fail("bad port");
        }
        out.port = port;
    }
    if (out.host.empty()) throw fail("missing host");
    return out;
}

EndpointMode infer_mode(std::string_view url) {
    auto path = url;
    if (auto q = path.find_first_of("?#"); q != std::string_view::npos) path = path.substr(0, q);
    while (path.ends_with('/')) path.remove_suffix(1);
    return path.ends_with("/chat/completions") ? EndpointMode::Chat : EndpointMode::Text;
}

EndpointConfig EndpointConfig::make(std::string api_url, std::string model, std::optional<std::string> api_key,
                                    std::optional<EndpointMode> mode_override) {
    EndpointConfig cfg;
    cfg.url = parse_http_url(api_url);
    cfg.mode = mode_override.value_or(infer_mode(api_url));
    cfg.api_url = std::move(api_url);
    cfg.model = std::move(model);
    if (api_key && !api_key->empty() && *api_key != "NA") cfg.api_key = std::move(api_key);
    return cfg;
}

namespace {

constexpr std::array<std::string_view, 2> kReservedChat = {"model", "messages"};
constexpr std::array<std::string_view, 2> kReservedText = {"model", "prompt"};

Error invalid(const std::string& what) { return Error(ErrorCode::InvalidParams, what); }

}  // namespace

void validate(const GenerationParams& p, EndpointMode mode) {
    if (p.max_tokens < 0) throw invalid("max_tokens must be >= 0");
    if (p.n < 1) throw invalid("n must be >= 1");
    if (p.temperature && *p.temperature < 0.0) throw invalid("temperature must be non-negative");
    if (p.logprobs < 0) throw invalid("logprobs must be non-negative");
    if (p.top_logprobs < 0 || p.top_logprobs > 20) throw invalid("top_logprobs must be within 0..20");
    if (mode == EndpointMode::Text) {
        if (p.logprobs > 5) throw invalid("text-completion logprobs must be within 0..5, got " + std::to_string(p.logprobs));
        if (p.top_logprobs > 0) throw invalid("top_logprobs applies to chat completion only");
    } else if (p.top_logprobs > 0 && p.logprobs == 0) {
        throw invalid("top_logprobs requires logprobs to be enabled");
    }
    if (!p.extra.is_object()) throw invalid("extra parameters must be a JSON object");
    const auto& reserved = mode == EndpointMode::Chat ? kReservedChat : kReservedText;
    for (auto key : reserved) {
        if (p.extra.contains(std::string(key))) {
            throw invalid("extra parameter '" + std::string(key) + "' would overwrite a request field");
        }
    }
}

GenerationParams effective_params(GenerationParams params, DesignMode design) {
    if (design == DesignMode::MultipleTrialsPerRun) params.n = 1;
    return params;
}

bool Conversation::well_formed() const noexcept {
    std::size_t i = 0;
    if (!messages_.empty() && messages_[0].role == Role::System) i = 1;
    for (std::size_t k = 0; i < messages_.size(); ++i, ++k) {
        const Role expected = k % 2 == 0 ? Role::User : Role::Assistant;
        if (messages_[i].role != expected) return false;
    }
    return true;
}

Conversation add_message(const Conversation& conv, Role role, std::vector<ContentSegment> content) {
    if (content.empty()) throw Error(ErrorCode::InvalidArgument, "message content must not be empty");
    if (role == Role::System && !conv.empty()) {
        throw Error(ErrorCode::SystemAfterStart, "a system message can only open a conversation");
    }
    Conversation next = conv;
    next.messages_.push_back(Message{role, std::move(content)});
    return next;
}

Conversation add_message(const Conversation& conv, Role role, std::string text) {
    return add_message(conv, role, std::vector<ContentSegment>{ContentSegment::text(std::move(text))});
}

namespace {

OrderedJson render_content(const std::vector<ContentSegment>& content, const GenerationParams& params) {
    const bool multimodal = has_non_text(content);
    if (!multimodal) return OrderedJson(text_of(content));
    OrderedJson parts = OrderedJson::array();
    for (const auto& seg : content) {
        switch (seg.kind) {
            case SegmentKind::Text:
                if (!seg.tagged && detail::trim(seg.payload).empty()) break;
                parts.push_back(OrderedJson{{"type", "text"}, {"text", seg.payload}});
                break;
            case SegmentKind::Image: {
                OrderedJson image{{"url", std::string(detail::trim(seg.payload))},
                                  {"detail", to_string(seg.detail.value_or(params.img_detail))}};
                parts.push_back(OrderedJson{{"type", "image_url"}, {"image_url", std::move(image)}});
                break;
            }
            case SegmentKind::Audio:
                throw Error(ErrorCode::UnsupportedModality, "audio input is not supported by this endpoint adapter");
        }
    }
    return parts;
}

void merge_extra(OrderedJson& body, const GenerationParams& params) {
    for (auto& [key, value] : params.extra.items()) body[key] = value;
}

}  // namespace

OrderedJson render_messages(const Conversation& conv, const GenerationParams& params) {
    OrderedJson out = OrderedJson::array();
    for (const auto& m : conv.messages()) {
        out.push_back(OrderedJson{{"role", to_string(m.role)}, {"content", render_content(m.content, params)}});
    }
    return out;
}

OrderedJson build_chat_request(const EndpointConfig& cfg, const Conversation& conv, const GenerationParams& params) {
    if (cfg.mode != EndpointMode::Chat) {
        throw Error(ErrorCode::ModeMismatch, "chat request built for a text-completion endpoint");
    }
    validate(params, EndpointMode::Chat);
    OrderedJson body;
    body["model"] = cfg.model;
    body["messages"] = render_messages(conv, params);
    body["max_tokens"] = params.max_tokens;
    if (params.temperature) body["temperature"] = *params.temperature;
    body["n"] = params.n;
    if (params.logprobs > 0) {
        body["logprobs"] = true;
        if (params.top_logprobs > 0) body["top_logprobs"] = params.top_logprobs;
    }
    if (params.seed) body["seed"] = *params.seed;
    merge_extra(body, params);
    return body;
}

OrderedJson build_text_request(const EndpointConfig& cfg, std::string_view prompt, const GenerationParams& params) {
    if (cfg.mode != EndpointMode::Text) {
        throw Error(ErrorCode::ModeMismatch, "text request built for a chat-completion endpoint");
    }
    validate(params, EndpointMode::Text);
    OrderedJson body;
    body["model"] = cfg.model;
    body["prompt"] = std::string(prompt);
    body["max_tokens"] = params.max_tokens;
    if (params.temperature) body["temperature"] = *params.temperature;
    body["n"] = params.n;
    if (params.logprobs > 0) body["logprobs"] = params.logprobs;
    if (params.seed) body["seed"] = *params.seed;
    merge_extra(body, params);
    return body;
}

ProviderError handle_error_code(int status) {
    ProviderError err{status, {}, false};
    switch (status) {
        case 400: err.explanation = "Bad request: the request body was rejected; check the parameters and message format."; break;
        case 401: err.explanation = "Unauthorized: the API key is missing or invalid."; break;
        case 403: err.explanation = "Forbidden: the key has no access to this model or region."; break;
        case 404: err.explanation = "Not found: check the API URL and the model name."; break;
        case 408: err.explanation = "Request timeout: the server gave up waiting for the request."; break;
        case 413: err.explanation = "Payload too large: the request exceeds the server's size limit."; break;
        case 422: err.explanation = "Unprocessable entity: one or more parameters are invalid for this model."; break;
        case 429:
            err.explanation = "Rate limited: too many requests or tokens per minute, or quota exhausted; retrying after a delay.";
            err.retryable = true;
            break;
        case 500: err.explanation = "Internal server error at the provider."; err.retryable = true; break;
        case 502: err.explanation = "Bad gateway: the provider's upstream failed."; err.retryable = true; break;
        case 503: err.explanation = "Service unavailable: the provider is overloaded or down."; err.retryable = true; break;
        case 504: err.explanation = "Gateway timeout: the provider did not respond in time."; err.retryable = true; break;
        default:
            if (status >= 200 && status < 300) {
                err.explanation = "Success.";
            } else if (status >= 500 && status < 600) {
                err.explanation = "Provider failure (HTTP " + std::to_string(status) + ").";
            } else {
                err.explanation = "Unexpected HTTP status " + std::to_string(status) + ".";
            }
    }
    return err;
}

ProviderFailure::ProviderFailure(ProviderError err, const std::string& body)
    : Error(ErrorCode::Provider, "HTTP " + std::to_string(err.status) + ": " + err.explanation),
      err_(std::move(err)),
      body_(body) {}

namespace {

OrderedJson parse_payload(std::string_view raw) {
    try {
        return OrderedJson::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, std::string("response is not valid JSON: ") + e.what());
    }
}

const OrderedJson& choices_of(const OrderedJson& doc) {
    if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array()) {
        throw Error(ErrorCode::MalformedResponse, "response has no \"choices\" array");
    }
    return doc["choices"];
}

const OrderedJson& find_choice(const OrderedJson& choices, int index) {
    for (const auto& c : choices) {
        if (c.is_object() && c.contains("index") && c["index"].is_number_integer() && c["index"].get<int>() == index) {
            return c;
        }
    }
    if (index >= 0 && static_cast<std::size_t>(index) < choices.size()) return choices[static_cast<std::size_t>(index)];
    throw Error(ErrorCode::MalformedResponse, "response has no choice " + std::to_string(index));
}

}  // namespace

std::vector<Completion> extract_completions(std::string_view raw, EndpointMode mode) {
    const auto doc = parse_payload(raw);
    const auto& choices = choices_of(doc);
    std::vector<Completion> out;
    int position = 0;
    for (const auto& c : choices) {
        if (!c.is_object()) throw Error(ErrorCode::MalformedResponse, "choice is not an object");
        Completion comp;
        comp.index = c.contains("index") && c["index"].is_number_integer() ? c["index"].get<int>() : position;
        if (mode == EndpointMode::Chat) {
            if (!c.contains("message") || !c["message"].is_object() || !c["message"].contains("content")) {
                throw Error(ErrorCode::MalformedResponse, "chat choice has no message.content");
            }
            const auto& content = c["message"]["content"];
            if (content.is_string()) {
                comp.text = content.get<std::string>();
            } else if (!content.is_null()) {
                throw Error(ErrorCode::MalformedResponse, "message.content is not a string");
            }
        } else {
            if (!c.contains("text") || !c["text"].is_string()) {
                throw Error(ErrorCode::MalformedResponse, "text choice has no \"text\" field");
            }
            comp.text = c["text"].get<std::string>();
        }
        out.push_back(std::move(comp));
        ++position;
    }
    std::stable_sort(out.begin(), out.end(), [](const Completion& a, const Completion& b) { return a.index < b.index; });
    return out;
}

std::vector<PositionLogprobs> extract_logprobs(std::string_view raw, EndpointMode mode, int choice) {
    const auto doc = parse_payload(raw);
    const auto& c = find_choice(choices_of(doc), choice);
    if (!c.contains("logprobs") || c["logprobs"].is_null()) {
        throw Error(ErrorCode::LogprobsAbsent, "logprobs were requested but the response carries none");
    }
    const auto& lp = c["logprobs"];
    std::vector<PositionLogprobs> out;
    auto malformed = [](const std::string& what) { return Error(ErrorCode::MalformedResponse, what); };
    try {
        if (mode == EndpointMode::Chat) {
            if (!lp.contains("content") || !lp["content"].is_array()) throw malformed("logprobs.content missing");
            for (const auto& pos : lp["content"]) {
                PositionLogprobs p;
                p.chosen = {pos.at("token").get<std::string>(), pos.at("logprob").get<double>()};
                if (pos.contains("top_logprobs") && pos["top_logprobs"].is_array()) {
                    for (const auto& alt : pos["top_logprobs"]) {
                        p.candidates.push_back({alt.at("token").get<std::string>(), alt.at("logprob").get<double>()});
                    }
                }
                if (p.candidates.empty()) p.candidates.push_back(p.chosen);
                out.push_back(std::move(p));
            }
        } else {
            if (!lp.contains("tokens") || !lp["tokens"].is_array()) throw malformed("logprobs.tokens missing");
            const auto& tokens = lp["tokens"];
            const auto& token_lps = lp.at("token_logprobs");
            const OrderedJson* tops = lp.contains("top_logprobs") && lp["top_logprobs"].is_array() ? &lp["top_logprobs"] : nullptr;
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                PositionLogprobs p;
                p.chosen.token = tokens[i].get<std::string>();
                p.chosen.logprob = token_lps.at(i).is_null() ? 0.0 : token_lps.at(i).get<double>();
                if (tops && i < tops->size() && (*tops)[i].is_object()) {
                    for (auto& [tok, value] : (*tops)[i].items()) p.candidates.push_back({tok, value.get<double>()});
                }
                if (p.candidates.empty()) p.candidates.push_back(p.chosen);
                out.push_back(std::move(p));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw malformed(std::string("malformed logprobs block: ") + e.what());
    }
    for (auto& p : out) {
        std::stable_sort(p.candidates.begin(), p.candidates.end(),
                         [](const TokenLogprob& a, const TokenLogprob& b) { return a.logprob > b.logprob; });
    }
    return out;
}

std::optional<EndpointMode> detect_payload_mode(std::string_view raw) {
    try {
        const auto doc = OrderedJson::parse(raw);
        const auto& choices = doc.at("choices");
        if (choices.empty()) return std::nullopt;
        if (choices[0].contains("message")) return EndpointMode::Chat;
        if (choices[0].contains("text")) return EndpointMode::Text;
    } catch (const nlohmann::json::exception&) {
    }
    return std::nullopt;
}

}  // namespace behave
