#include "behave/behave.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <memory>
#include <string>

#include "behave/analysis.hpp"
#include "behave/csv.hpp"
#include "behave/design.hpp"
#include "behave/error.hpp"
#include "behave/mock.hpp"
#include "behave/protocol.hpp"
#include "behave/results.hpp"
#include "behave/runner.hpp"
#include "behave/stimuli.hpp"
#include "behave/token_budget.hpp"
#include "behave/tokenizer.hpp"

struct bhv_stimuli {
    behave::StimulusSet set;
};
struct bhv_schedule {
    behave::Schedule schedule;
};
struct bhv_params {
    behave::GenerationParams params;
};
struct bhv_tokenizer {
    behave::ResolvedTokenizer resolved;
};
struct bhv_endpoint {
    behave::EndpointConfig cfg;
};
struct bhv_run_options {
    behave::RunOptions options;
    bhv_trial_callback callback = nullptr;
    void* user = nullptr;
};
struct bhv_results {
    behave::ResultTable table;
};
struct bhv_mock {
    std::unique_ptr<behave::mock::Server> server;
};

namespace {

thread_local std::string g_last_error;

bhv_status status_for(behave::ErrorCode code) {
    return static_cast<bhv_status>(static_cast<int>(code) + 1);
}

template <typename F>
bhv_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return BHV_OK;
    } catch (const behave::Error& e) {
        g_last_error = e.what();
        return status_for(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return BHV_E_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return BHV_E_INTERNAL;
    }
}

void require(bool condition, const char* what) {
    if (!condition) throw behave::Error(behave::ErrorCode::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size());
    out[s.size()] = '\0';
    return out;
}

std::string csv_text(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& r : rows) out += behave::csv::format_row(r);
    return out;
}

behave::Measure measure_of(bhv_measure m) {
    return m == BHV_MEASURE_LOGPROBS ? behave::Measure::Logprobs : behave::Measure::Completions;
}

bhv_design_mode design_of(behave::DesignMode m) {
    return m == behave::DesignMode::OneTrialPerRun ? BHV_ONE_TRIAL_PER_RUN : BHV_MULTIPLE_TRIALS_PER_RUN;
}

}  // namespace

extern "C" {

const char* bhv_version(void) { return "0.1.0"; }

const char* bhv_status_name(bhv_status status) {
    if (status == BHV_OK) return "Ok";
    if (status == BHV_E_INTERNAL) return "Internal";
    if (status < BHV_E_INVALID_ARGUMENT || status > BHV_E_MISSING_CONDITION) return "Unknown";
    return behave::to_string(static_cast<behave::ErrorCode>(static_cast<int>(status) - 1));
}

const char* bhv_last_error(void) { return g_last_error.c_str(); }

void bhv_string_free(char* s) { std::free(s); }

bhv_status bhv_stimuli_load(const char* path, bhv_stimuli** out) {
    return guarded([&] {
        require(path && out, "path and out are required");
        *out = new bhv_stimuli{behave::load_stimuli(path)};
    });
}

bhv_status bhv_stimuli_parse(const char* csv_text, size_t length, bhv_stimuli** out) {
    return guarded([&] {
        require((csv_text || length == 0) && out, "text and out are required");
        *out = new bhv_stimuli{behave::parse_stimuli(std::string_view(csv_text ? csv_text : "", length))};
    });
}

size_t bhv_stimuli_row_count(const bhv_stimuli* s) { return s ? s->set.rows.size() : 0; }
size_t bhv_stimuli_run_count(const bhv_stimuli* s) { return s ? s->set.runs().size() : 0; }
bhv_design_mode bhv_stimuli_design_mode(const bhv_stimuli* s) {
    return s ? design_of(behave::schedule_mode(s->set)) : BHV_ONE_TRIAL_PER_RUN;
}
void bhv_stimuli_free(bhv_stimuli* s) { delete s; }

bhv_status bhv_schedule_build(const bhv_stimuli* s, int sessions, int random_item, uint64_t seed,
                              bhv_schedule** out) {
    return guarded([&] {
        require(s && out, "stimuli and out are required");
        *out = new bhv_schedule{behave::build_schedule(s->set, sessions, random_item != 0, seed)};
    });
}

size_t bhv_schedule_trial_count(const bhv_schedule* sch) { return sch ? sch->schedule.trial_count() : 0; }
bhv_design_mode bhv_schedule_mode(const bhv_schedule* sch) {
    return sch ? design_of(sch->schedule.mode) : BHV_ONE_TRIAL_PER_RUN;
}
void bhv_schedule_free(bhv_schedule* sch) { delete sch; }

bhv_status bhv_params_new(bhv_params** out) {
    return guarded([&] {
        require(out, "out is required");
        *out = new bhv_params{};
    });
}
void bhv_params_free(bhv_params* p) { delete p; }

bhv_status bhv_params_set_system_prompt(bhv_params* p, const char* text) {
    return guarded([&] {
        require(p, "params is required");
        p->params.system_prompt = text ? text : "";
    });
}

bhv_status bhv_params_set_max_tokens(bhv_params* p, int max_tokens) {
    return guarded([&] {
        require(p, "params is required");
        p->params.max_tokens = max_tokens;
    });
}

bhv_status bhv_params_set_temperature(bhv_params* p, double temperature) {
    return guarded([&] {
        require(p, "params is required");
        p->params.temperature = temperature;
    });
}

bhv_status bhv_params_clear_temperature(bhv_params* p) {
    return guarded([&] {
        require(p, "params is required");
        p->params.temperature.reset();
    });
}

bhv_status bhv_params_set_n(bhv_params* p, int n) {
    return guarded([&] {
        require(p, "params is required");
        p->params.n = n;
    });
}

bhv_status bhv_params_set_logprobs(bhv_params* p, int logprobs) {
    return guarded([&] {
        require(p, "params is required");
        p->params.logprobs = logprobs;
    });
}

bhv_status bhv_params_set_top_logprobs(bhv_params* p, int top_logprobs) {
    return guarded([&] {
        require(p, "params is required");
        p->params.top_logprobs = top_logprobs;
    });
}

bhv_status bhv_params_set_img_detail(bhv_params* p, const char* detail) {
    return guarded([&] {
        require(p && detail, "params and detail are required");
        const auto parsed = behave::parse_image_detail(detail);
        if (!parsed) throw behave::Error(behave::ErrorCode::InvalidParams, "image detail must be low, high or auto");
        p->params.img_detail = *parsed;
    });
}

bhv_status bhv_params_set_extra_json(bhv_params* p, const char* json_object) {
    return guarded([&] {
        require(p && json_object, "params and json are required");
        behave::OrderedJson extra;
        try {
            extra = behave::OrderedJson::parse(json_object);
        } catch (const nlohmann::json::parse_error& e) {
            throw behave::Error(behave::ErrorCode::InvalidParams, std::string("extra parameters: ") + e.what());
        }
        if (!extra.is_object()) throw behave::Error(behave::ErrorCode::InvalidParams, "extra parameters must be a JSON object");
        p->params.extra = std::move(extra);
    });
}

bhv_status bhv_params_set_seed(bhv_params* p, int64_t seed) {
    return guarded([&] {
        require(p, "params is required");
        p->params.seed = seed;
    });
}

bhv_status bhv_tokenizer_resolve(const char* model, const char* registry_path, bhv_tokenizer** out) {
    return guarded([&] {
        require(model && out, "model and out are required");
        auto registry = behave::TokenizerRegistry::with_defaults();
        if (registry_path && *registry_path) registry.load_file(registry_path);
        *out = new bhv_tokenizer{behave::resolve_tokenizer(model, registry)};
    });
}

const char* bhv_tokenizer_id(const bhv_tokenizer* t) { return t ? t->resolved.tokenizer->id().c_str() : ""; }
int bhv_tokenizer_approximate(const bhv_tokenizer* t) { return t && t->resolved.approximate ? 1 : 0; }
const char* bhv_tokenizer_warning(const bhv_tokenizer* t) { return t ? t->resolved.warning.c_str() : ""; }

bhv_status bhv_tokenizer_count(const bhv_tokenizer* t, const char* text, size_t length, size_t* count) {
    return guarded([&] {
        require(t && (text || length == 0) && count, "tokenizer, text and count are required");
        *count = t->resolved.tokenizer->count(std::string_view(text ? text : "", length));
    });
}

void bhv_tokenizer_free(bhv_tokenizer* t) { delete t; }

bhv_status bhv_token_check(const bhv_schedule* sch, const bhv_params* p, const bhv_tokenizer* t,
                           int message_overhead, char** report, size_t* peak) {
    return guarded([&] {
        require(sch && p && t, "schedule, params and tokenizer are required");
        auto r = behave::token_check(sch->schedule, p->params, *t->resolved.tokenizer,
                                     behave::BudgetOptions{message_overhead});
        r.approximate = r.approximate || t->resolved.approximate;
        if (peak) *peak = r.peak();
        if (report) *report = dup_string(behave::render_report(r));
    });
}

bhv_status bhv_endpoint_new(const char* api_url, const char* model, const char* api_key, bhv_endpoint_mode mode,
                            bhv_endpoint** out) {
    return guarded([&] {
        require(api_url && model && out, "api_url, model and out are required");
        std::optional<behave::EndpointMode> override;
        if (mode == BHV_MODE_CHAT) override = behave::EndpointMode::Chat;
        if (mode == BHV_MODE_TEXT) override = behave::EndpointMode::Text;
        std::optional<std::string> key;
        if (api_key) key = api_key;
        *out = new bhv_endpoint{behave::EndpointConfig::make(api_url, model, key, override)};
    });
}

bhv_endpoint_mode bhv_endpoint_get_mode(const bhv_endpoint* e) {
    return e && e->cfg.mode == behave::EndpointMode::Text ? BHV_MODE_TEXT : BHV_MODE_CHAT;
}

void bhv_endpoint_free(bhv_endpoint* e) { delete e; }

bhv_status bhv_run_options_new(bhv_run_options** out) {
    return guarded([&] {
        require(out, "out is required");
        *out = new bhv_run_options{};
    });
}

void bhv_run_options_free(bhv_run_options* o) { delete o; }

bhv_status bhv_run_options_set_parallelism(bhv_run_options* o, int workers) {
    return guarded([&] {
        require(o && workers >= 1, "options required and workers must be >= 1");
        o->options.parallelism = workers;
    });
}

bhv_status bhv_run_options_set_retry(bhv_run_options* o, int max_attempts, int64_t base_delay_ms,
                                     int64_t max_delay_ms) {
    return guarded([&] {
        require(o && max_attempts >= 1 && base_delay_ms >= 0 && max_delay_ms >= 0,
                "options required; attempts >= 1 and delays >= 0");
        o->options.retry.max_attempts = max_attempts;
        o->options.retry.base_delay = std::chrono::milliseconds(base_delay_ms);
        o->options.retry.max_delay = std::chrono::milliseconds(max_delay_ms);
    });
}

bhv_status bhv_run_options_set_pacing_ms(bhv_run_options* o, int64_t pacing_ms) {
    return guarded([&] {
        require(o && pacing_ms >= 0, "options required and pacing must be >= 0");
        o->options.pacing = std::chrono::milliseconds(pacing_ms);
    });
}

bhv_status bhv_run_options_set_per_trial_seed(bhv_run_options* o, int enabled) {
    return guarded([&] {
        require(o, "options is required");
        o->options.per_trial_seed = enabled != 0;
    });
}

bhv_status bhv_run_options_set_progress(bhv_run_options* o, int enabled) {
    return guarded([&] {
        require(o, "options is required");
        o->options.progress = enabled ? &std::cerr : nullptr;
    });
}

bhv_status bhv_run_options_set_callback(bhv_run_options* o, bhv_trial_callback cb, void* user) {
    return guarded([&] {
        require(o, "options is required");
        o->callback = cb;
        o->user = user;
    });
}

bhv_status bhv_run(const bhv_schedule* sch, const bhv_endpoint* e, const bhv_params* p, const char* save_path,
                   const bhv_run_options* options, bhv_run_summary* summary, char** aborted_json) {
    return guarded([&] {
        require(sch && e && p && save_path, "schedule, endpoint, params and save_path are required");
        behave::RunOptions opts = options ? options->options : behave::RunOptions{};
        if (options && options->callback) {
            auto cb = options->callback;
            auto user = options->user;
            opts.on_trial = [cb, user](const behave::TrialEvent& ev) {
                cb(ev.session, ev.run, ev.trial, ev.ok ? 1 : 0, ev.attempts, user);
            };
        }
        const auto result = behave::run_experiment(sch->schedule, e->cfg, p->params, save_path, opts);
        if (summary) {
            *summary = bhv_run_summary{result.records_written, result.runs_total, result.runs_aborted,
                                       result.truncated_cells};
        }
        if (aborted_json) {
            behave::OrderedJson arr = behave::OrderedJson::array();
            for (const auto& a : result.aborted) {
                arr.push_back(behave::OrderedJson{{"session", a.session},
                                                  {"run", a.run},
                                                  {"completed_trials", a.completed_trials},
                                                  {"status", a.status},
                                                  {"reason", a.reason}});
            }
            *aborted_json = dup_string(arr.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace));
        }
    });
}

bhv_status bhv_results_load(const char* path, bhv_results** out) {
    return guarded([&] {
        require(path && out, "path and out are required");
        *out = new bhv_results{behave::read_results(path)};
    });
}

size_t bhv_results_count(const bhv_results* r) { return r ? r->table.records.size() : 0; }
void bhv_results_free(bhv_results* r) { delete r; }

bhv_status bhv_analyze_conditions(const bhv_results* r, bhv_measure measure, char** csv) {
    return guarded([&] {
        require(r && csv, "results and csv are required");
        if (measure == BHV_MEASURE_LOGPROBS) {
            *csv = dup_string(behave::render_condition_shares(behave::summarize_shares(r->table.records)));
        } else {
            *csv = dup_string(behave::render_condition_summaries(behave::summarize_conditions(r->table.records)));
        }
    });
}

bhv_status bhv_analyze_items(const bhv_results* r, bhv_measure measure, const char* open_label,
                             const char* closed_label, char** csv) {
    return guarded([&] {
        require(r && csv, "results and csv are required");
        behave::LabelPair labels;
        if (open_label) labels.open = open_label;
        if (closed_label) labels.closed = closed_label;
        *csv = dup_string(behave::render_item_effects(behave::item_effect(r->table.records, measure_of(measure), labels)));
    });
}

bhv_status bhv_analyze_tidy(const bhv_results* r, bhv_measure measure, char** csv) {
    return guarded([&] {
        require(r && csv, "results and csv are required");
        *csv = dup_string(csv_text(behave::tidy_table(r->table.records, measure_of(measure))));
    });
}

bhv_status bhv_code_gender(const char* response, bhv_gender* gender, char** first_pronoun) {
    return guarded([&] {
        require(response && gender, "response and gender are required");
        const auto code = behave::code_gender(response);
        switch (code.value) {
            case behave::Gender::Masculine: *gender = BHV_MASCULINE; break;
            case behave::Gender::Feminine: *gender = BHV_FEMININE; break;
            case behave::Gender::None: *gender = BHV_NONE; break;
            case behave::Gender::Both: *gender = BHV_BOTH; break;
        }
        if (first_pronoun) *first_pronoun = code.first_pronoun ? dup_string(*code.first_pronoun) : nullptr;
    });
}

bhv_status bhv_logprob_share(const char* const* tokens, const double* logprobs, size_t count, double* share,
                             int* partial) {
    return guarded([&] {
        require((tokens && logprobs) || count == 0, "tokens and logprobs are required");
        require(share, "share is required");
        std::vector<behave::TokenLogprob> candidates;
        for (size_t i = 0; i < count; ++i) {
            require(tokens[i], "token must not be NULL");
            candidates.push_back({tokens[i], logprobs[i]});
        }
        const auto g = behave::logprob_gender_share(candidates);
        *share = g.share;
        if (partial) *partial = g.partial ? 1 : 0;
    });
}

namespace {

bhv_status start_mock(behave::mock::Scenario scenario, const char* host, int port, bhv_mock** out) {
    return guarded([&] {
        require(out, "out is required");
        auto m = std::make_unique<bhv_mock>();
        m->server = std::make_unique<behave::mock::Server>(std::move(scenario), host ? host : "127.0.0.1", port);
        m->server->start();
        *out = m.release();
    });
}

}  // namespace

bhv_status bhv_mock_start(const char* scenario_path, const char* host, int port, bhv_mock** out) {
    behave::mock::Scenario scenario;
    const auto st = guarded([&] {
        require(scenario_path, "scenario_path is required");
        scenario = behave::mock::load_scenario(scenario_path);
    });
    if (st != BHV_OK) return st;
    return start_mock(std::move(scenario), host, port, out);
}

bhv_status bhv_mock_start_json(const char* scenario_json, const char* host, int port, bhv_mock** out) {
    behave::mock::Scenario scenario;
    const auto st = guarded([&] {
        require(scenario_json, "scenario_json is required");
        scenario = behave::mock::parse_scenario(scenario_json);
    });
    if (st != BHV_OK) return st;
    return start_mock(std::move(scenario), host, port, out);
}

int bhv_mock_port(const bhv_mock* m) { return m ? m->server->port() : 0; }

bhv_status bhv_mock_base_url(const bhv_mock* m, char** url) {
    return guarded([&] {
        require(m && url, "mock and url are required");
        *url = dup_string(m->server->base_url());
    });
}

bhv_status bhv_mock_captures_json(const bhv_mock* m, char** json) {
    return guarded([&] {
        require(m && json, "mock and json are required");
        *json = dup_string(m->server->engine().captures_json());
    });
}

void bhv_mock_wait(bhv_mock* m) {
    if (m) m->server->wait();
}

void bhv_mock_stop(bhv_mock* m) {
    if (m) m->server->stop();
}

void bhv_mock_free(bhv_mock* m) { delete m; }

}  // extern "C"
