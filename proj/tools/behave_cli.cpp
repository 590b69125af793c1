#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include "behave/behave.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitBudget = 2;
constexpr int kExitIo = 3;
constexpr int kExitAllAborted = 4;
constexpr int kExitPartial = 5;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted.store(true); }

struct Owned {
    char* s = nullptr;
    ~Owned() { bhv_string_free(s); }
    std::string str() const { return s ? std::string(s) : std::string(); }
};

int fail(bhv_status st) {
    std::cerr << "error: " << bhv_status_name(st) << ": " << bhv_last_error() << "\n";
    return st == BHV_E_IO ? kExitIo : kExitError;
}

struct DesignFlags {
    std::string stimuli;
    int sessions = 1;
    bool random_item = false;
    std::optional<uint64_t> seed;
};

struct ParamFlags {
    std::string system_prompt;
    int max_tokens = 500;
    std::optional<double> temperature;
    int n = 1;
    int logprobs = 0;
    int top_logprobs = 0;
    std::string img_detail = "auto";
    std::string extra;
};

void add_design_flags(CLI::App* cmd, DesignFlags& d) {
    cmd->add_option("stimuli", d.stimuli, "Stimuli CSV (Run, Item, Condition, Prompt)")->required();
    cmd->add_option("--sessions", d.sessions, "Number of sessions")->check(CLI::PositiveNumber);
    cmd->add_flag("--random-item", d.random_item, "Shuffle trial order within each run");
    cmd->add_option("--seed", d.seed, "Seed for randomization and per-trial request seeds");
}

void add_param_flags(CLI::App* cmd, ParamFlags& p) {
    cmd->add_option("--system-prompt", p.system_prompt, "System prompt (chat mode)");
    cmd->add_option("--max-tokens", p.max_tokens, "Maximum tokens per response");
    cmd->add_option("--temperature", p.temperature, "Sampling temperature");
    cmd->add_option("--n", p.n, "Responses per request");
    cmd->add_option("--logprobs", p.logprobs, "Chat: 1 to request logprobs. Text: top tokens, 0-5");
    cmd->add_option("--top-logprobs", p.top_logprobs, "Chat: top tokens per position, 0-20");
    cmd->add_option("--img-detail", p.img_detail, "Image detail")->check(CLI::IsMember({"low", "high", "auto"}));
    cmd->add_option("--extra", p.extra, "JSON object merged into every request body");
}

struct Handles {
    bhv_stimuli* stimuli = nullptr;
    bhv_schedule* schedule = nullptr;
    bhv_params* params = nullptr;
    bhv_tokenizer* tokenizer = nullptr;
    bhv_endpoint* endpoint = nullptr;
    bhv_run_options* options = nullptr;
    bhv_results* results = nullptr;
    ~Handles() {
        bhv_results_free(results);
        bhv_run_options_free(options);
        bhv_endpoint_free(endpoint);
        bhv_tokenizer_free(tokenizer);
        bhv_params_free(params);
        bhv_schedule_free(schedule);
        bhv_stimuli_free(stimuli);
    }
};

bhv_status build_design(const DesignFlags& d, Handles& h) {
    if (auto st = bhv_stimuli_load(d.stimuli.c_str(), &h.stimuli); st != BHV_OK) return st;
    uint64_t seed = 0;
    if (d.seed) {
        seed = *d.seed;
    } else if (d.random_item) {
        seed = (static_cast<uint64_t>(std::random_device{}()) << 32) | std::random_device{}();
        std::cerr << "randomization seed: " << seed << "\n";
    }
    return bhv_schedule_build(h.stimuli, d.sessions, d.random_item ? 1 : 0, seed, &h.schedule);
}

bhv_status build_params(const ParamFlags& p, Handles& h) {
    bhv_status st = bhv_params_new(&h.params);
    if (st == BHV_OK) st = bhv_params_set_system_prompt(h.params, p.system_prompt.c_str());
    if (st == BHV_OK) st = bhv_params_set_max_tokens(h.params, p.max_tokens);
    if (st == BHV_OK && p.temperature) st = bhv_params_set_temperature(h.params, *p.temperature);
    if (st == BHV_OK) st = bhv_params_set_n(h.params, p.n);
    if (st == BHV_OK) st = bhv_params_set_logprobs(h.params, p.logprobs);
    if (st == BHV_OK) st = bhv_params_set_top_logprobs(h.params, p.top_logprobs);
    if (st == BHV_OK) st = bhv_params_set_img_detail(h.params, p.img_detail.c_str());
    if (st == BHV_OK && !p.extra.empty()) st = bhv_params_set_extra_json(h.params, p.extra.c_str());
    return st;
}

const char* mode_name(bhv_design_mode m) {
    return m == BHV_ONE_TRIAL_PER_RUN ? "one-trial-per-run" : "multiple-trials-per-run";
}

int cmd_validate(const std::string& path) {
    Handles h;
    if (auto st = bhv_stimuli_load(path.c_str(), &h.stimuli); st != BHV_OK) return fail(st);
    const auto runs = bhv_stimuli_run_count(h.stimuli);
    const auto rows = bhv_stimuli_row_count(h.stimuli);
    std::cerr << runs << (runs == 1 ? " run, " : " runs, ") << rows << (rows == 1 ? " row" : " rows")
              << ", mode: " << mode_name(bhv_stimuli_design_mode(h.stimuli)) << "\n";
    return kExitOk;
}

struct PrecheckFlags {
    std::string model = "gpt2";
    std::string registry;
    bool overhead = false;
    std::optional<std::size_t> context_limit;
};

int cmd_precheck(const DesignFlags& d, const ParamFlags& p, const PrecheckFlags& f) {
    Handles h;
    if (auto st = build_design(d, h); st != BHV_OK) return fail(st);
    if (auto st = build_params(p, h); st != BHV_OK) return fail(st);
    if (auto st = bhv_tokenizer_resolve(f.model.c_str(), f.registry.empty() ? nullptr : f.registry.c_str(),
                                        &h.tokenizer);
        st != BHV_OK) {
        return fail(st);
    }
    if (bhv_tokenizer_approximate(h.tokenizer)) std::cerr << "warning: " << bhv_tokenizer_warning(h.tokenizer) << "\n";
    Owned report;
    std::size_t peak = 0;
    if (auto st = bhv_token_check(h.schedule, h.params, h.tokenizer, f.overhead ? 4 : 0, &report.s, &peak);
        st != BHV_OK) {
        return fail(st);
    }
    std::cout << report.str();
    std::cout.flush();
    if (f.context_limit && peak > *f.context_limit) {
        std::cerr << "token budget " << peak << " exceeds the context limit " << *f.context_limit << "\n";
        return kExitBudget;
    }
    return kExitOk;
}

struct RunFlags {
    std::string api_url;
    std::string model;
    std::optional<std::string> api_key;
    std::string mode = "auto";
    std::string output;
    int parallelism = 1;
    int max_attempts = 5;
    int64_t retry_base_ms = 1000;
    int64_t retry_max_ms = 60000;
    int64_t pacing_ms = 0;
    bool quiet = false;
};

int cmd_run(const DesignFlags& d, const ParamFlags& p, RunFlags f) {
    Handles h;
    if (auto st = build_design(d, h); st != BHV_OK) return fail(st);
    if (auto st = build_params(p, h); st != BHV_OK) return fail(st);
    if (!f.api_key) {
        if (const char* env = std::getenv("BEHAVE_API_KEY")) f.api_key = env;
    }
    const bhv_endpoint_mode mode = f.mode == "chat" ? BHV_MODE_CHAT : f.mode == "text" ? BHV_MODE_TEXT : BHV_MODE_AUTO;
    if (auto st = bhv_endpoint_new(f.api_url.c_str(), f.model.c_str(), f.api_key ? f.api_key->c_str() : nullptr, mode,
                                   &h.endpoint);
        st != BHV_OK) {
        return fail(st);
    }
    bhv_status st = bhv_run_options_new(&h.options);
    if (st == BHV_OK) st = bhv_run_options_set_parallelism(h.options, f.parallelism);
    if (st == BHV_OK) st = bhv_run_options_set_retry(h.options, f.max_attempts, f.retry_base_ms, f.retry_max_ms);
    if (st == BHV_OK) st = bhv_run_options_set_pacing_ms(h.options, f.pacing_ms);
    if (st == BHV_OK) st = bhv_run_options_set_per_trial_seed(h.options, d.seed ? 1 : 0);
    if (st == BHV_OK) st = bhv_run_options_set_progress(h.options, f.quiet ? 0 : 1);
    if (st != BHV_OK) return fail(st);

    bhv_run_summary summary{};
    Owned aborted;
    st = bhv_run(h.schedule, h.endpoint, h.params, f.output.c_str(), h.options, &summary, &aborted.s);
    if (st != BHV_OK) return fail(st);

    std::cerr << summary.records_written << " records written to " << f.output << "; " << summary.runs_aborted << " of "
              << summary.runs_total << " runs aborted\n";
    if (summary.truncated_cells > 0) {
        std::cerr << "warning: " << summary.truncated_cells << " cells truncated to the spreadsheet cell limit\n";
    }
    if (summary.runs_aborted > 0) {
        std::cerr << "aborted runs: " << aborted.str() << "\n";
        return summary.runs_aborted == summary.runs_total ? kExitAllAborted : kExitPartial;
    }
    return kExitOk;
}

struct AnalyzeFlags {
    std::string results;
    std::string measure = "completions";
    std::string open_label = "Open syllable";
    std::string closed_label = "Closed syllable";
    bool tidy = false;
};

int cmd_analyze(const AnalyzeFlags& f) {
    Handles h;
    if (auto st = bhv_results_load(f.results.c_str(), &h.results); st != BHV_OK) return fail(st);
    const bhv_measure measure = f.measure == "logprobs" ? BHV_MEASURE_LOGPROBS : BHV_MEASURE_COMPLETIONS;
    if (f.tidy) {
        Owned tidy;
        if (auto st = bhv_analyze_tidy(h.results, measure, &tidy.s); st != BHV_OK) return fail(st);
        std::cout << tidy.str();
        return kExitOk;
    }
    Owned conditions, items;
    if (auto st = bhv_analyze_conditions(h.results, measure, &conditions.s); st != BHV_OK) return fail(st);
    const auto items_status =
        bhv_analyze_items(h.results, measure, f.open_label.c_str(), f.closed_label.c_str(), &items.s);
    if (items_status != BHV_OK && items_status != BHV_E_MISSING_CONDITION) return fail(items_status);
    std::cout << conditions.str();
    if (items_status == BHV_OK) {
        std::cout << "\n" << items.str();
    } else {
        std::cerr << "per-item effects skipped: " << bhv_last_error() << "\n";
    }
    return kExitOk;
}

int cmd_mock_serve(const std::string& scenario, const std::string& host, int port) {
    bhv_mock* mock = nullptr;
    if (auto st = bhv_mock_start(scenario.c_str(), host.c_str(), port, &mock); st != BHV_OK) return fail(st);
    Owned url;
    bhv_mock_base_url(mock, &url.s);
    std::cout << url.str() << std::endl;
    std::cerr << "mock server listening on " << url.str() << " (Ctrl-C to stop)\n";
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    bhv_mock_stop(mock);
    bhv_mock_free(mock);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Run behavioural experiments against chat and text completion endpoints"};
    app.set_config("--config", "", "TOML or INI file supplying option defaults");
    app.require_subcommand(1);

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a stimuli file and report its design");
    validate->add_option("stimuli", validate_path, "Stimuli CSV")->required();

    DesignFlags pre_design;
    ParamFlags pre_params;
    PrecheckFlags pre;
    auto* precheck = app.add_subcommand("precheck", "Count prompt tokens and print the budget report");
    add_design_flags(precheck, pre_design);
    add_param_flags(precheck, pre_params);
    precheck->add_option("--model", pre.model, "Model id used to pick the tokenizer");
    precheck->add_option("--tokenizer-registry", pre.registry, "JSON registry of additional vocabularies");
    precheck->add_flag("--message-overhead", pre.overhead, "Charge 4 tokens of framing per message");
    precheck->add_option("--context-limit", pre.context_limit, "Exit 2 when any budget exceeds this many tokens");

    DesignFlags run_design;
    ParamFlags run_params;
    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "Present the stimuli to a model and save every response");
    add_design_flags(run, run_design);
    add_param_flags(run, run_params);
    run->add_option("--api-url", run_flags.api_url, "Completion endpoint URL")->required();
    run->add_option("--model", run_flags.model, "Model id")->required();
    run->add_option("--api-key", run_flags.api_key, "API key (default: $BEHAVE_API_KEY)");
    run->add_option("--mode", run_flags.mode, "Endpoint mode")->check(CLI::IsMember({"auto", "chat", "text"}));
    run->add_option("-o,--output", run_flags.output, "Output file (.csv or .xlsx)")->required();
    run->add_option("--parallelism", run_flags.parallelism, "Runs executed concurrently")->check(CLI::PositiveNumber);
    run->add_option("--max-attempts", run_flags.max_attempts, "Attempts per request")->check(CLI::PositiveNumber);
    run->add_option("--retry-base-ms", run_flags.retry_base_ms, "First retry delay in milliseconds");
    run->add_option("--retry-max-ms", run_flags.retry_max_ms, "Retry delay cap in milliseconds");
    run->add_option("--pacing-ms", run_flags.pacing_ms, "Minimum gap between requests of one worker");
    run->add_flag("-q,--quiet", run_flags.quiet, "No per-trial progress lines");

    AnalyzeFlags an;
    auto* analyze = app.add_subcommand("analyze", "Summarize a results file by condition and item");
    analyze->add_option("results", an.results, "Results CSV")->required();
    analyze->add_option("--measure", an.measure, "What to score")->check(CLI::IsMember({"completions", "logprobs"}));
    analyze->add_option("--open-label", an.open_label, "Condition label of the open-syllable names");
    analyze->add_option("--closed-label", an.closed_label, "Condition label of the closed-syllable names");
    analyze->add_flag("--tidy", an.tidy, "Print one coded row per record instead");

    std::string scenario, host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("mock-serve", "Serve a scripted OpenAI-compatible endpoint");
    serve->add_option("--scenario", scenario, "Scenario JSON file")->required();
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port, 0 for any free port")->check(CLI::Range(0, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitError;
    }

    if (validate->parsed()) return cmd_validate(validate_path);
    if (precheck->parsed()) return cmd_precheck(pre_design, pre_params, pre);
    if (run->parsed()) return cmd_run(run_design, run_params, run_flags);
    if (analyze->parsed()) return cmd_analyze(an);
    if (serve->parsed()) return cmd_mock_serve(scenario, host, port);
    return kExitError;
}
