#include <doctest.h>

#include <cmath>
#include <httplib.h>

#include "behave/error.hpp"
#include "behave/mock.hpp"

using namespace behave;
using namespace behave::mock;

namespace {

ErrorCode scenario_code(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;
}

std::string chat_body(const std::string& user, const std::string& extra = "") {
    return R"({"model":"m","messages":[{"role":"user","content":")" + user + R"("}])" + extra + "}";
}

OrderedJson reply_json(Engine& e, const std::string& endpoint, const std::string& body) {
    const auto r = e.handle(endpoint, body);
    REQUIRE(r.status == 200);
    return OrderedJson::parse(r.body);
}

}  // namespace

TEST_CASE("scenario validation") {
    CHECK(scenario_code("{") == ErrorCode::Scenario);
    CHECK(scenario_code("[]") == ErrorCode::Scenario);
    CHECK(scenario_code(R"({"rules":[{"response":"x"}]})") == ErrorCode::Scenario);
    CHECK(scenario_code(R"({"rules":[{"regex":"(","response":"x"}]})") == ErrorCode::Scenario);
    CHECK(scenario_code(R"({"rules":[{"match":"a","response":{"distribution":[{"text":"x","p":0.5}]}}]})") ==
          ErrorCode::Scenario);
    CHECK(scenario_code(R"({"rules":[{"match":"a","response":{"logprobs":[{"she":1.5}]}}]})") == ErrorCode::Scenario);
    CHECK(scenario_code(R"({"rules":[{"match":"a","status_sequence":[42]}]})") == ErrorCode::Scenario);
    try {
        parse_scenario("{\n  \"rules\": [\n}");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    const auto sc = parse_scenario(R"({"seed":7,"rules":[{"match":"a","responses":["x",{"text":"y"}]}]})");
    CHECK(sc.seed == 7);
    REQUIRE(sc.rules.size() == 1);
    CHECK(sc.rules[0].responses.size() == 2);
}

TEST_CASE("first matching rule wins and responses cycle") {
    Engine e(parse_scenario(R"({"rules":[
        {"match":"Pelcra","responses":[{"text":"one"},{"text":"two"}]},
        {"regex":"Pel.*","response":{"text":"never"}}],
        "default_response":{"text":"fallback"}})"));
    auto text = [&](const std::string& user) {
        return reply_json(e, "/v1/chat/completions", chat_body(user))["choices"][0]["message"]["content"].get<std::string>();
    };
    CHECK(text("Although Pelcra was sick") == "one");
    CHECK(text("Although Pelcra was sick") == "two");
    CHECK(text("Although Pelcra was sick") == "one");
    CHECK(text("unrelated") == "fallback");
}

TEST_CASE("the last user message is matched") {
    Engine e(parse_scenario(R"({"rules":[{"match":"second","response":"matched"}]})"));
    const std::string body =
        R"({"model":"m","messages":[{"role":"user","content":"first"},{"role":"assistant","content":"second"},)"
        R"({"role":"user","content":"third"}]})";
    CHECK(reply_json(e, "/v1/chat/completions", body)["choices"][0]["message"]["content"] == "OK");
}

TEST_CASE("status sequences precede the scripted response") {
    Engine e(parse_scenario(
        R"({"rules":[{"match":"x","status_sequence":[429,503,200],"retry_after":2,"response":"done"}]})"));
    auto r1 = e.handle("/v1/chat/completions", chat_body("x"));
    CHECK(r1.status == 429);
    CHECK(r1.retry_after_seconds == 2.0);
    CHECK(OrderedJson::parse(r1.body)["error"]["code"] == 429);
    CHECK(e.handle("/v1/chat/completions", chat_body("x")).status == 503);
    CHECK(e.handle("/v1/chat/completions", chat_body("x")).status == 200);
    CHECK(e.handle("/v1/chat/completions", chat_body("x")).status == 200);
    const auto caps = e.captures();
    REQUIRE(caps.size() == 4);
    CHECK(caps[0].status == 429);
    CHECK(caps[3].sequence == 4);
    CHECK(caps[0].body == chat_body("x"));
}

TEST_CASE("max_tokens truncates by words and n yields several choices") {
    Engine e(parse_scenario(R"({"default_response":{"text":"one two three four"}})"));
    const auto j = reply_json(e, "/v1/chat/completions", chat_body("hi", R"(,"max_tokens":2,"n":3)"));
    REQUIRE(j["choices"].size() == 3);
    CHECK(j["choices"][2]["index"] == 2);
    CHECK(j["choices"][0]["message"]["content"] == "one two");
    CHECK(j["choices"][0]["finish_reason"] == "length");
    CHECK(j["usage"]["completion_tokens"] == 6);
}

TEST_CASE("seeded draws are reproducible and follow the distribution") {
    const std::string sc =
        R"({"seed":3,"default_response":{"distribution":[{"text":"she","p":0.7},{"text":"he","p":0.3}]}})";
    Engine a(parse_scenario(sc)), b(parse_scenario(sc));
    int she = 0;
    const int draws = 4000;
    for (int i = 0; i < draws; ++i) {
        const auto body = chat_body("prompt", R"(,"seed":)" + std::to_string(i));
        const auto ta = reply_json(a, "/v1/chat/completions", body)["choices"][0]["message"]["content"];
        const auto tb = reply_json(b, "/v1/chat/completions", body)["choices"][0]["message"]["content"];
        CHECK(ta == tb);
        if (ta == "she") ++she;
    }
    // Binomial(4000, 0.7): sd = 29; allow 4 sd.
    CHECK(std::abs(she - 2800) < 116);
}

TEST_CASE("stochastic_emit matches probabilities") {
    CounterRng rng(CounterRng::derive_key(11, {}));
    const std::vector<WeightedText> dist{{"a", 0.2}, {"b", 0.0}, {"c", 0.8}};
    int a = 0, b = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto t = stochastic_emit(dist, rng);
        a += t == "a";
        b += t == "b";
    }
    CHECK(b == 0);
    // Binomial(10000, 0.2): sd = 40.
    CHECK(std::abs(a - 2000) < 160);
}

TEST_CASE("chat logprobs follow the provider format") {
    Engine e(parse_scenario(R"({"default_response":{"text":"She","logprobs":[{"She":0.6,"He":0.3,"It":0.1}]}})"));
    const auto j = reply_json(e, "/v1/chat/completions", chat_body("x", R"(,"logprobs":true,"top_logprobs":2)"));
    const auto& pos = j["choices"][0]["logprobs"]["content"][0];
    CHECK(pos["token"] == "She");
    CHECK(std::abs(pos["logprob"].get<double>() - std::log(0.6)) < 1e-12);
    REQUIRE(pos["top_logprobs"].size() == 2);
    CHECK(pos["top_logprobs"][1]["token"] == "He");

    const auto plain = reply_json(e, "/v1/chat/completions", chat_body("x"));
    CHECK(plain["choices"][0]["logprobs"].is_null());
}

TEST_CASE("text completions with logprobs") {
    Engine e(parse_scenario(R"({"default_response":{"logprobs":[{" she":0.3," he":0.4," the":0.2}]}})"));
    const auto j = reply_json(e, "/v1/completions", R"({"model":"m","prompt":"Although Pelcra was sick,","max_tokens":1,"logprobs":5})");
    CHECK(j["object"] == "text_completion");
    const auto& lp = j["choices"][0]["logprobs"];
    CHECK(j["choices"][0]["text"] == " he");
    CHECK(lp["tokens"][0] == " he");
    CHECK(lp["top_logprobs"][0].size() == 3);
    CHECK(std::abs(lp["top_logprobs"][0][" she"].get<double>() - std::log(0.3)) < 1e-12);
    CHECK(lp["text_offset"][0] == 0);
}

TEST_CASE("malformed and unknown requests") {
    Engine e(Scenario{});
    CHECK(e.handle("/v1/chat/completions", "{").status == 400);
    CHECK(e.handle("/v1/embeddings", "{}").status == 404);
}

TEST_CASE("response ids are content-derived") {
    Engine e(Scenario{});
    const auto a = reply_json(e, "/v1/chat/completions", chat_body("x"));
    const auto b = reply_json(e, "/v1/chat/completions", chat_body("x"));
    CHECK(a["id"] == b["id"]);
    CHECK(a["created"] == 0);
}

TEST_CASE("server exposes captures and refuses an occupied port") {
    Server server(parse_scenario(R"({"default_response":"hi"})"));
    server.start();
    CHECK(server.port() > 0);
    httplib::Client client("127.0.0.1", server.port());
    auto res = client.Post("/v1/chat/completions", chat_body("hello"), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto caps = client.Get("/__captures");
    REQUIRE(caps);
    const auto arr = OrderedJson::parse(caps->body);
    REQUIRE(arr.size() == 1);
    CHECK(arr[0]["endpoint"] == "/v1/chat/completions");
    CHECK(arr[0]["body"] == chat_body("hello"));
    CHECK(client.Delete("/__captures")->status == 204);
    CHECK(server.engine().captures().empty());

    Server clash(Scenario{}, "127.0.0.1", server.port());
    try {
        clash.start();
        FAIL("expected a bind error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Bind);
    }
    server.stop();
}
