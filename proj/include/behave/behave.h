/* C interface to the behave experiment toolkit.
 *
 * Every fallible call returns a bhv_status; on failure bhv_last_error()
 * describes the problem for the calling thread. Strings returned through
 * char** out-parameters are owned by the caller and released with
 * bhv_string_free().
 */
#ifndef BEHAVE_BEHAVE_H
#define BEHAVE_BEHAVE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BHV_API __declspec(dllexport)
#else
#define BHV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bhv_status {
    BHV_OK = 0,
    BHV_E_INVALID_ARGUMENT,
    BHV_E_MISSING_COLUMN,
    BHV_E_EMPTY_TABLE,
    BHV_E_MALFORMED_ROW,
    BHV_E_DUPLICATE_RUN_ITEM,
    BHV_E_UNBALANCED_TAG,
    BHV_E_INVALID_SEGMENT,
    BHV_E_UNKNOWN_VOCABULARY,
    BHV_E_INVALID_PARAMS,
    BHV_E_MODE_MISMATCH,
    BHV_E_UNSUPPORTED_MODALITY,
    BHV_E_SYSTEM_AFTER_START,
    BHV_E_PROVIDER,
    BHV_E_TRANSPORT,
    BHV_E_MALFORMED_RESPONSE,
    BHV_E_LOGPROBS_ABSENT,
    BHV_E_IO,
    BHV_E_UNSUPPORTED_EXTENSION,
    BHV_E_SCHEMA_MISMATCH,
    BHV_E_BIND,
    BHV_E_SCENARIO,
    BHV_E_NO_GENDER_TOKENS,
    BHV_E_MISSING_CONDITION,
    BHV_E_INTERNAL = 100
} bhv_status;

typedef enum bhv_design_mode { BHV_ONE_TRIAL_PER_RUN = 0, BHV_MULTIPLE_TRIALS_PER_RUN = 1 } bhv_design_mode;
typedef enum bhv_endpoint_mode { BHV_MODE_AUTO = -1, BHV_MODE_CHAT = 0, BHV_MODE_TEXT = 1 } bhv_endpoint_mode;
typedef enum bhv_measure { BHV_MEASURE_COMPLETIONS = 0, BHV_MEASURE_LOGPROBS = 1 } bhv_measure;
typedef enum bhv_gender { BHV_MASCULINE = 0, BHV_FEMININE = 1, BHV_NONE = 2, BHV_BOTH = 3 } bhv_gender;

typedef struct bhv_stimuli bhv_stimuli;
typedef struct bhv_schedule bhv_schedule;
typedef struct bhv_params bhv_params;
typedef struct bhv_tokenizer bhv_tokenizer;
typedef struct bhv_endpoint bhv_endpoint;
typedef struct bhv_run_options bhv_run_options;
typedef struct bhv_results bhv_results;
typedef struct bhv_mock bhv_mock;

BHV_API const char* bhv_version(void);
BHV_API const char* bhv_status_name(bhv_status status);
BHV_API const char* bhv_last_error(void);
BHV_API void bhv_string_free(char* s);

/* Stimuli */
BHV_API bhv_status bhv_stimuli_load(const char* path, bhv_stimuli** out);
BHV_API bhv_status bhv_stimuli_parse(const char* csv_text, size_t length, bhv_stimuli** out);
BHV_API size_t bhv_stimuli_row_count(const bhv_stimuli* s);
BHV_API size_t bhv_stimuli_run_count(const bhv_stimuli* s);
BHV_API bhv_design_mode bhv_stimuli_design_mode(const bhv_stimuli* s);
BHV_API void bhv_stimuli_free(bhv_stimuli* s);

/* Schedule */
BHV_API bhv_status bhv_schedule_build(const bhv_stimuli* s, int sessions, int random_item, uint64_t seed,
                                      bhv_schedule** out);
BHV_API size_t bhv_schedule_trial_count(const bhv_schedule* sch);
BHV_API bhv_design_mode bhv_schedule_mode(const bhv_schedule* sch);
BHV_API void bhv_schedule_free(bhv_schedule* sch);

/* Generation parameters */
BHV_API bhv_status bhv_params_new(bhv_params** out);
BHV_API void bhv_params_free(bhv_params* p);
BHV_API bhv_status bhv_params_set_system_prompt(bhv_params* p, const char* text);
BHV_API bhv_status bhv_params_set_max_tokens(bhv_params* p, int max_tokens);
BHV_API bhv_status bhv_params_set_temperature(bhv_params* p, double temperature);
BHV_API bhv_status bhv_params_clear_temperature(bhv_params* p);
BHV_API bhv_status bhv_params_set_n(bhv_params* p, int n);
BHV_API bhv_status bhv_params_set_logprobs(bhv_params* p, int logprobs);
BHV_API bhv_status bhv_params_set_top_logprobs(bhv_params* p, int top_logprobs);
/* "low", "high" or "auto" */
BHV_API bhv_status bhv_params_set_img_detail(bhv_params* p, const char* detail);
/* JSON object merged last into every request body. */
BHV_API bhv_status bhv_params_set_extra_json(bhv_params* p, const char* json_object);
BHV_API bhv_status bhv_params_set_seed(bhv_params* p, int64_t seed);

/* Tokenizers. registry_path may be NULL for the bundled vocabulary only. */
BHV_API bhv_status bhv_tokenizer_resolve(const char* model, const char* registry_path, bhv_tokenizer** out);
BHV_API const char* bhv_tokenizer_id(const bhv_tokenizer* t);
/* Non-zero when the model fell back to an approximate vocabulary. */
BHV_API int bhv_tokenizer_approximate(const bhv_tokenizer* t);
BHV_API const char* bhv_tokenizer_warning(const bhv_tokenizer* t);
BHV_API bhv_status bhv_tokenizer_count(const bhv_tokenizer* t, const char* text, size_t length, size_t* count);
BHV_API void bhv_tokenizer_free(bhv_tokenizer* t);

/* Token budget: writes the rendered report and its peak figure. */
BHV_API bhv_status bhv_token_check(const bhv_schedule* sch, const bhv_params* p, const bhv_tokenizer* t,
                                   int message_overhead, char** report, size_t* peak);

/* Endpoint. api_key may be NULL; "" and "NA" also mean no key. */
BHV_API bhv_status bhv_endpoint_new(const char* api_url, const char* model, const char* api_key,
                                    bhv_endpoint_mode mode, bhv_endpoint** out);
BHV_API bhv_endpoint_mode bhv_endpoint_get_mode(const bhv_endpoint* e);
BHV_API void bhv_endpoint_free(bhv_endpoint* e);

/* Run options */
typedef void (*bhv_trial_callback)(int session, int64_t run, int trial, int ok, int attempts, void* user);

BHV_API bhv_status bhv_run_options_new(bhv_run_options** out);
BHV_API void bhv_run_options_free(bhv_run_options* o);
BHV_API bhv_status bhv_run_options_set_parallelism(bhv_run_options* o, int workers);
BHV_API bhv_status bhv_run_options_set_retry(bhv_run_options* o, int max_attempts, int64_t base_delay_ms,
                                             int64_t max_delay_ms);
BHV_API bhv_status bhv_run_options_set_pacing_ms(bhv_run_options* o, int64_t pacing_ms);
BHV_API bhv_status bhv_run_options_set_per_trial_seed(bhv_run_options* o, int enabled);
/* Non-zero writes one progress line per trial to standard error. */
BHV_API bhv_status bhv_run_options_set_progress(bhv_run_options* o, int enabled);
BHV_API bhv_status bhv_run_options_set_callback(bhv_run_options* o, bhv_trial_callback cb, void* user);

typedef struct bhv_run_summary {
    size_t records_written;
    size_t runs_total;
    size_t runs_aborted;
    size_t truncated_cells;
} bhv_run_summary;

/* options may be NULL. aborted_json, when non-NULL, receives a JSON array
 * describing aborted runs. */
BHV_API bhv_status bhv_run(const bhv_schedule* sch, const bhv_endpoint* e, const bhv_params* p,
                           const char* save_path, const bhv_run_options* options, bhv_run_summary* summary,
                           char** aborted_json);

/* Results and analysis */
BHV_API bhv_status bhv_results_load(const char* path, bhv_results** out);
BHV_API size_t bhv_results_count(const bhv_results* r);
BHV_API void bhv_results_free(bhv_results* r);
/* CSV tables. Labels may be NULL for "Open syllable" / "Closed syllable". */
BHV_API bhv_status bhv_analyze_conditions(const bhv_results* r, bhv_measure measure, char** csv);
BHV_API bhv_status bhv_analyze_items(const bhv_results* r, bhv_measure measure, const char* open_label,
                                     const char* closed_label, char** csv);
BHV_API bhv_status bhv_analyze_tidy(const bhv_results* r, bhv_measure measure, char** csv);

/* first_pronoun may be NULL; receives NULL when no pronoun occurs. */
BHV_API bhv_status bhv_code_gender(const char* response, bhv_gender* gender, char** first_pronoun);
BHV_API bhv_status bhv_logprob_share(const char* const* tokens, const double* logprobs, size_t count, double* share,
                                     int* partial);

/* Mock server. host may be NULL for 127.0.0.1; port 0 picks a free port. */
BHV_API bhv_status bhv_mock_start(const char* scenario_path, const char* host, int port, bhv_mock** out);
BHV_API bhv_status bhv_mock_start_json(const char* scenario_json, const char* host, int port, bhv_mock** out);
BHV_API int bhv_mock_port(const bhv_mock* m);
BHV_API bhv_status bhv_mock_base_url(const bhv_mock* m, char** url);
BHV_API bhv_status bhv_mock_captures_json(const bhv_mock* m, char** json);
/* Blocks until bhv_mock_stop() is called from another thread. */
BHV_API void bhv_mock_wait(bhv_mock* m);
BHV_API void bhv_mock_stop(bhv_mock* m);
BHV_API void bhv_mock_free(bhv_mock* m);

#ifdef __cplusplus
}
#endif

#endif
