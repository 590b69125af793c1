#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "behave/design.hpp"
#include "behave/error.hpp"
#include "behave/stimuli.hpp"

namespace behave {

using OrderedJson = nlohmann::ordered_json;

enum class EndpointMode { Chat, Text };

const char* to_string(EndpointMode mode) noexcept;

struct HttpUrl {
    std::string scheme;  // "http" or "https"
    std::string host;
    int port = 0;
    std::string path;  // always begins with '/'

    // scheme://host[:port]
    std::string origin() const;
};

// Throws InvalidArgument unless `url` is an absolute http(s) URL.
HttpUrl parse_http_url(std::string_view url);

// Chat iff the URL path ends with "/chat/completions".
EndpointMode infer_mode(std::string_view url);

struct EndpointConfig {
    std::optional<std::string> api_key;  // absent for self-hosted servers
    std::string api_url;
    std::string model;
    EndpointMode mode = EndpointMode::Chat;
    HttpUrl url;

    // A key of "" or "NA" is treated as absent.
    static EndpointConfig make(std::string api_url, std::string model, std::optional<std::string> api_key = {},
                               std::optional<EndpointMode> mode_override = {});
};

struct GenerationParams {
    std::string system_prompt;
    int max_tokens = 500;
    std::optional<double> temperature;  // omitted from requests when unset
    int n = 1;
    // Chat: 0 = off, anything else = on. Text: number of top tokens, 0..5.
    int logprobs = 0;
    int top_logprobs = 0;  // Chat only, 0..20
    ImageDetail img_detail = ImageDetail::Auto;
    OrderedJson extra = OrderedJson::object();  // merged last into the body
    std::optional<std::int64_t> seed;
};

// Throws InvalidParams when a constraint for `mode` is violated.
void validate(const GenerationParams& params, EndpointMode mode);

// n is forced to 1 for multi-trial designs.
GenerationParams effective_params(GenerationParams params, DesignMode design);

enum class Role { System, User, Assistant };

const char* to_string(Role role) noexcept;

struct Message {
    Role role = Role::User;
    std::vector<ContentSegment> content;

    friend bool operator==(const Message&, const Message&) = default;
};

// Ordered message list; values are never modified in place.
class Conversation {
public:
    const std::vector<Message>& messages() const noexcept { return messages_; }
    bool empty() const noexcept { return messages_.empty(); }
    std::size_t size() const noexcept { return messages_.size(); }

    // [system?] (user assistant)* with optionally one trailing user message.
    bool well_formed() const noexcept;

    friend Conversation add_message(const Conversation& conv, Role role, std::vector<ContentSegment> content);
    friend bool operator==(const Conversation&, const Conversation&) = default;

private:
    std::vector<Message> messages_;
};

// Throws SystemAfterStart for a system message on a non-empty conversation and
// InvalidArgument for empty content.
Conversation add_message(const Conversation& conv, Role role, std::vector<ContentSegment> content);
Conversation add_message(const Conversation& conv, Role role, std::string text);

// The "messages" array exactly as it appears in a chat request body.
OrderedJson render_messages(const Conversation& conv, const GenerationParams& params);

// Key order: model, messages, max_tokens, temperature, n, logprobs,
// top_logprobs, seed, then extra keys.
OrderedJson build_chat_request(const EndpointConfig& cfg, const Conversation& conv, const GenerationParams& params);

// Key order: model, prompt, max_tokens, temperature, n, logprobs, seed, then
// extra keys.
OrderedJson build_text_request(const EndpointConfig& cfg, std::string_view prompt, const GenerationParams& params);

struct ProviderError {
    int status = 0;
    std::string explanation;
    bool retryable = false;
};

ProviderError handle_error_code(int status);

class ProviderFailure : public Error {
public:
    explicit ProviderFailure(ProviderError err, const std::string& body = {});
    const ProviderError& error() const noexcept { return err_; }
    const std::string& body() const noexcept { return body_; }

private:
    ProviderError err_;
    std::string body_;
};

struct Completion {
    int index = 0;
    std::string text;
};

// One entry per choice, sorted by the choice's index field.
std::vector<Completion> extract_completions(std::string_view raw, EndpointMode mode);

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
};

struct PositionLogprobs {
    TokenLogprob chosen;
    std::vector<TokenLogprob> candidates;  // most probable first
};

// Per output position of choice `choice`. Throws LogprobsAbsent when the
// payload carries no logprob block.
std::vector<PositionLogprobs> extract_logprobs(std::string_view raw, EndpointMode mode, int choice = 0);

// Chat if the first choice has "message", Text if it has "text".
std::optional<EndpointMode> detect_payload_mode(std::string_view raw);

}  // namespace behave
