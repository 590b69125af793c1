#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

#include "behave/error.hpp"
#include "behave/runner.hpp"
#include "support/scripted_transport.hpp"

using namespace behave;
using testing_support::EngineTransport;
using testing_support::ScriptedTransport;

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("behave_runner_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

HttpResponse chat_reply(const std::string& text) {
    OrderedJson j{{"object", "chat.completion"},
                  {"choices", OrderedJson::array({OrderedJson{{"index", 0},
                                                              {"message", {{"role", "assistant"}, {"content", text}}},
                                                              {"finish_reason", "stop"}}})}};
    return HttpResponse{200, j.dump(), std::nullopt};
}

RetryPolicy quick_retry() {
    RetryPolicy p;
    p.base_delay = std::chrono::milliseconds(1);
    p.max_delay = std::chrono::milliseconds(2);
    p.max_attempts = 3;
    return p;
}

StimulusSet four_trials() {
    return parse_stimuli(
        "Run,Item,Condition,Prompt\n"
        "1,1,A,first prompt\n"
        "1,2,B,second prompt\n"
        "1,3,A,third prompt\n"
        "1,4,B,fourth prompt\n");
}

}  // namespace

TEST_CASE("chat runs carry the conversation forward") {
    TempDir dir;
    const auto schedule = build_schedule(four_trials(), 1, false, 0);
    ScriptedTransport transport({chat_reply("R1"), chat_reply("R2"), chat_reply("R3"), chat_reply("R4")});
    GenerationParams params;
    params.system_prompt = "You are a participant.";
    RunOptions opts;
    opts.transport = &transport;
    const auto cfg = EndpointConfig::make("http://127.0.0.1:1/v1/chat/completions", "m");
    const auto summary = run_experiment(schedule, cfg, params, dir.file("out.csv"), opts);
    CHECK(summary.records_written == 4);
    CHECK(summary.runs_aborted == 0);
    REQUIRE(transport.bodies.size() == 4);

    for (std::size_t t = 0; t < 4; ++t) {
        const auto body = OrderedJson::parse(transport.bodies[t]);
        const auto& msgs = body["messages"];
        REQUIRE(msgs.size() == 2 + 2 * t);
        CHECK(msgs[0]["role"] == "system");
        CHECK(msgs[0]["content"] == "You are a participant.");
        for (std::size_t k = 0; k < t; ++k) {
            CHECK(msgs[1 + 2 * k]["role"] == "user");
            CHECK(msgs[2 + 2 * k]["role"] == "assistant");
            CHECK(msgs[2 + 2 * k]["content"] == "R" + std::to_string(k + 1));
        }
        CHECK(msgs.back()["role"] == "user");
    }

    const auto table = read_results(dir.file("out.csv"));
    REQUIRE(table.records.size() == 4);
    CHECK(table.records[2].trial == 3);
    CHECK(table.records[2].response == "R3");
    CHECK(table.records[2].message == OrderedJson::parse(transport.bodies[2])["messages"].dump());
    CHECK(table.records[2].raw_response == chat_reply("R3").body);
}

TEST_CASE("no system message without a system prompt") {
    TempDir dir;
    const auto schedule = build_schedule(four_trials(), 1, false, 0);
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    run_experiment(schedule, EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, dir.file("o.csv"), opts);
    CHECK(OrderedJson::parse(transport.bodies[0])["messages"][0]["role"] == "user");
}

TEST_CASE("n choices produce n records per trial") {
    TempDir dir;
    const auto set = parse_stimuli("Run,Item,Condition,Prompt\n1,1,A,p1\n2,2,B,p2\n");
    const auto schedule = build_schedule(set, 2, false, 0);
    EngineTransport transport(mock::parse_scenario(R"({"default_response":"She left."})"));
    GenerationParams params;
    params.n = 3;
    RunOptions opts;
    opts.transport = &transport;
    const auto summary =
        run_experiment(schedule, EndpointConfig::make("http://h/v1/chat/completions", "m"), params, dir.file("n.csv"), opts);
    CHECK(summary.records_written == 12);
    const auto table = read_results(dir.file("n.csv"));
    std::map<std::tuple<int, std::int64_t>, std::set<int>> ns;
    for (const auto& r : table.records) ns[{r.session, r.run}].insert(r.n);
    REQUIRE(ns.size() == 4);
    for (const auto& [k, v] : ns) CHECK(v == std::set<int>{1, 2, 3});
}

TEST_CASE("n is forced to one in multi-trial designs") {
    TempDir dir;
    const auto schedule = build_schedule(four_trials(), 1, false, 0);
    EngineTransport transport(mock::Scenario{});
    GenerationParams params;
    params.n = 3;
    RunOptions opts;
    opts.transport = &transport;
    const auto summary =
        run_experiment(schedule, EndpointConfig::make("http://h/v1/chat/completions", "m"), params, dir.file("o.csv"), opts);
    CHECK(summary.records_written == 4);
}

TEST_CASE("an unauthorized response aborts the run without retrying") {
    TempDir dir;
    const auto schedule = build_schedule(four_trials(), 1, false, 0);
    ScriptedTransport transport({HttpResponse{401, R"({"error":{"message":"bad key"}})", std::nullopt}});
    RunOptions opts;
    opts.transport = &transport;
    opts.retry = quick_retry();
    const auto summary =
        run_experiment(schedule, EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, dir.file("a.csv"), opts);
    CHECK(transport.bodies.size() == 1);
    CHECK(summary.records_written == 0);
    REQUIRE(summary.aborted.size() == 1);
    CHECK(summary.aborted[0].status == 401);
    CHECK(summary.aborted[0].completed_trials == 0);
    CHECK(read_results(dir.file("a.csv")).records.empty());
}

TEST_CASE("rate limits are retried") {
    TempDir dir;
    const auto set = parse_stimuli("Run,Item,Condition,Prompt\n1,1,A,p\n");
    ScriptedTransport transport({HttpResponse{429, "{}", std::chrono::milliseconds(1)},
                                 HttpResponse{429, "{}", std::nullopt}, chat_reply("ok")});
    RunOptions opts;
    opts.transport = &transport;
    opts.retry = quick_retry();
    int attempts = 0;
    opts.on_trial = [&](const TrialEvent& e) { attempts = e.attempts; };
    const auto summary = run_experiment(build_schedule(set, 1, false, 0),
                                        EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, dir.file("r.csv"), opts);
    CHECK(summary.records_written == 1);
    CHECK(attempts == 3);
    CHECK(transport.bodies.size() == 3);
}

TEST_CASE("a malformed response aborts only its run") {
    TempDir dir;
    const auto set = parse_stimuli("Run,Item,Condition,Prompt\n1,1,A,p\n2,2,B,q\n");
    ScriptedTransport transport({HttpResponse{200, "not json", std::nullopt}, chat_reply("fine")});
    RunOptions opts;
    opts.transport = &transport;
    const auto summary = run_experiment(build_schedule(set, 1, false, 0),
                                        EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, dir.file("m.csv"), opts);
    CHECK(summary.runs_total == 2);
    CHECK(summary.runs_aborted == 1);
    CHECK(summary.records_written == 1);
    CHECK(summary.aborted[0].run == 1);
    CHECK(summary.aborted[0].reason.find("MalformedResponse") != std::string::npos);
}

TEST_CASE("text endpoints reject conversations and system prompts") {
    TempDir dir;
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    const auto cfg = EndpointConfig::make("http://h/v1/completions", "m");
    REQUIRE(cfg.mode == EndpointMode::Text);
    try {
        run_experiment(build_schedule(four_trials(), 1, false, 0), cfg, {}, dir.file("t.csv"), opts);
        FAIL("expected ModeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ModeMismatch);
    }
    const auto single = parse_stimuli("Run,Item,Condition,Prompt\n1,1,A,p\n");
    GenerationParams params;
    params.system_prompt = "sys";
    try {
        run_experiment(build_schedule(single, 1, false, 0), cfg, params, dir.file("t.csv"), opts);
        FAIL("expected InvalidParams");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidParams);
    }
    CHECK(transport.bodies.empty());
}

TEST_CASE("text endpoints send the prompt verbatim") {
    TempDir dir;
    const auto set = parse_stimuli("Run,Item,Condition,Prompt\n1,1,A,Although Pelcra was sick\n");
    EngineTransport transport(mock::parse_scenario(R"({"default_response":" she"})"));
    RunOptions opts;
    opts.transport = &transport;
    run_experiment(build_schedule(set, 1, false, 0), EndpointConfig::make("http://h/v1/completions", "m"), {},
                   dir.file("t.csv"), opts);
    const auto caps = transport.engine.captures();
    REQUIRE(caps.size() == 1);
    CHECK(OrderedJson::parse(caps[0].body)["prompt"] == "Although Pelcra was sick");
    const auto table = read_results(dir.file("t.csv"));
    CHECK(table.records[0].response == " she");
    CHECK(table.records[0].message == "Although Pelcra was sick");
}

TEST_CASE("parallel output is sorted and per-trial seeds are stable") {
    TempDir dir;
    std::string csv = "Run,Item,Condition,Prompt\n";
    for (int r = 1; r <= 12; ++r) {
        for (int i = 1; i <= 3; ++i) csv += std::to_string(r) + "," + std::to_string(i) + ",A,prompt " + std::to_string(r * 10 + i) + "\n";
    }
    const auto schedule = build_schedule(parse_stimuli(csv), 2, true, 99);
    const std::string scenario =
        R"({"seed":5,"default_response":{"distribution":[{"text":"she","p":0.5},{"text":"he","p":0.5}]}})";
    auto run_once = [&](int workers, const std::string& name) {
        EngineTransport transport(mock::parse_scenario(scenario));
        RunOptions opts;
        opts.transport = &transport;
        opts.parallelism = workers;
        opts.per_trial_seed = true;
        run_experiment(schedule, EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, dir.file(name), opts);
        return read_file(dir.file(name));
    };
    const auto serial = run_once(1, "s.csv");
    const auto parallel = run_once(6, "p.csv");
    CHECK(serial == parallel);

    const auto table = parse_results(parallel);
    REQUIRE(table.records.size() == 72);
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        const auto& r = table.records[i];
        CHECK(r.session == static_cast<int>(i / 36) + 1);
        CHECK(r.run == static_cast<std::int64_t>((i % 36) / 3) + 1);
        CHECK(r.trial == static_cast<int>(i % 3) + 1);
    }
}

TEST_CASE("trial seeds are positive and distinct") {
    std::set<std::int64_t> seen;
    for (int s = 1; s <= 3; ++s) {
        for (int r = 1; r <= 10; ++r) {
            for (int t = 1; t <= 10; ++t) {
                const auto v = trial_seed(42, s, r, t);
                CHECK(v >= 0);
                CHECK(v <= 0x7FFFFFFF);
                seen.insert(v);
            }
        }
    }
    CHECK(seen.size() == 300);
    CHECK(trial_seed(42, 1, 1, 1) == trial_seed(42, 1, 1, 1));
    CHECK(trial_seed(42, 1, 1, 1) != trial_seed(43, 1, 1, 1));
}

TEST_CASE("per-trial seeds appear in request bodies") {
    TempDir dir;
    const auto schedule = build_schedule(four_trials(), 1, false, 7);
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    opts.per_trial_seed = true;
    run_experiment(schedule, EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, dir.file("o.csv"), opts);
    for (int t = 0; t < 4; ++t) {
        CHECK(OrderedJson::parse(transport.bodies[t])["seed"] == trial_seed(7, 1, 1, t + 1));
    }
}

TEST_CASE("unwritable output is an I/O error") {
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    try {
        run_experiment(build_schedule(four_trials(), 1, false, 0), EndpointConfig::make("http://h/v1/chat/completions", "m"),
                       {}, "/nonexistent-dir/sub/out.csv", opts);
        FAIL("expected Io");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Io);
    }
    CHECK(transport.bodies.empty());
}

TEST_CASE("unsupported output extensions are rejected") {
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    try {
        run_experiment(build_schedule(four_trials(), 1, false, 0), EndpointConfig::make("http://h/v1/chat/completions", "m"),
                       {}, "out.json", opts);
        FAIL("expected UnsupportedExtension");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnsupportedExtension);
    }
}

TEST_CASE("xlsx output replaces the streaming sidecar") {
    TempDir dir;
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    const auto path = dir.file("out.xlsx");
    const auto summary = run_experiment(build_schedule(four_trials(), 1, false, 0),
                                        EndpointConfig::make("http://h/v1/chat/completions", "m"), {}, path, opts);
    CHECK(summary.records_written == 4);
    CHECK(fs::exists(path));
    CHECK_FALSE(fs::exists(path + ".partial.csv"));
    CHECK(read_file(path).substr(0, 2) == "PK");
}

TEST_CASE("extra stimulus columns are echoed") {
    TempDir dir;
    const auto set = parse_stimuli("Run,Item,Condition,Prompt,Name\n1,1,A,p,Pelcra\n");
    ScriptedTransport transport({chat_reply("x")});
    RunOptions opts;
    opts.transport = &transport;
    run_experiment(build_schedule(set, 1, false, 0), EndpointConfig::make("http://h/v1/chat/completions", "m"), {},
                   dir.file("e.csv"), opts);
    const auto table = read_results(dir.file("e.csv"));
    REQUIRE(table.extra_columns == std::vector<std::string>{"Name"});
    CHECK(table.records[0].extra == std::vector<std::string>{"Pelcra"});
}

TEST_CASE("local images become data urls") {
    TempDir dir;
    {
        std::ofstream out(dir.file("pic.png"), std::ios::binary);
        out << "abc";
    }
    auto segs = resolve_local_images(parse_prompt_segments("<text>look</text><img>" + dir.file("pic.png") + "</img>"));
    REQUIRE(segs.size() == 2);
    CHECK(segs[1].payload == "data:image/png;base64,YWJj");
    auto remote = resolve_local_images(parse_prompt_segments("<img>https://example.org/a.png</img>"));
    CHECK(remote[0].payload == "https://example.org/a.png");
    try {
        resolve_local_images(parse_prompt_segments("<img>" + dir.file("missing.png") + "</img>"));
        FAIL("expected InvalidSegment");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidSegment);
    }
}
