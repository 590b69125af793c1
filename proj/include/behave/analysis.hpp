#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "behave/protocol.hpp"
#include "behave/results.hpp"
#include "behave/transport.hpp"

namespace behave {

enum class Gender { Masculine, Feminine, None, Both };
const char* to_string(Gender g) noexcept;

struct GenderCode {
    Gender value = Gender::None;
    std::optional<std::string> first_pronoun;  // lowercased earliest match
};

struct PronounSets {
    std::vector<std::string> feminine{"she", "her", "hers", "herself"};
    std::vector<std::string> masculine{"he", "him", "his", "himself"};
};

// Case-insensitive whole-word scan of the full response.
GenderCode code_gender(std::string_view response, const PronounSets& sets = {});

struct ConditionSummary {
    std::string condition;
    std::size_t trials = 0;
    std::size_t feminine = 0;
    std::size_t masculine = 0;
    std::size_t both = 0;  // excluded from the denominator
    std::size_t none = 0;
    // feminine / (feminine + masculine); NaN when that denominator is zero.
    double feminine_proportion = 0.0;
};

// One summary per condition, in order of first appearance.
std::vector<ConditionSummary> summarize_conditions(const std::vector<ResultRecord>& records,
                                                   const PronounSets& sets = {});

struct ShareSets {
    std::vector<std::string> feminine{"she", "her"};
    std::vector<std::string> masculine{"he", "his"};
};

struct GenderShare {
    double share = 0.0;  // feminine mass / (feminine + masculine mass)
    double feminine_mass = 0.0;
    double masculine_mass = 0.0;
    bool partial = false;  // one gender had no token among the candidates
};

// Strips surrounding whitespace and leading byte-level/sentencepiece space
// markers, then lowercases.
std::string normalize_token(std::string_view token);

// Throws NoGenderTokens when no candidate belongs to either set. Candidates
// repeating a normalized token contribute once, with their highest logprob.
GenderShare logprob_gender_share(const std::vector<TokenLogprob>& candidates, const ShareSets& sets = {});

// Candidates at output position `position` of a response, including the
// sampled token when the provider omitted it from the top list.
std::vector<TokenLogprob> position_candidates(std::string_view raw_response, EndpointMode mode, int choice = 0,
                                              std::size_t position = 0);

enum class Measure { Completions, Logprobs };

struct LabelPair {
    std::string open = "Open syllable";
    std::string closed = "Closed syllable";
};

struct RecordScore {
    const ResultRecord* record = nullptr;
    std::optional<double> value;  // 1/0 feminine indicator or logprob share; empty when not codable
    bool partial = false;
};

// Completions: Feminine -> 1, Masculine -> 0, Both/None -> empty.
// Logprobs: share at the first output position of the record's choice;
// empty on NoGenderTokens. Throws LogprobsAbsent when a response has no
// logprob block.
std::vector<RecordScore> score_records(const std::vector<ResultRecord>& records, Measure measure,
                                       const PronounSets& pronouns = {}, const ShareSets& shares = {});

struct ConditionShare {
    std::string condition;
    std::size_t records = 0;
    std::size_t scored = 0;
    std::size_t partial = 0;
    double mean_share = 0.0;  // NaN when nothing was scored
};

std::vector<ConditionShare> summarize_shares(const std::vector<ResultRecord>& records, const ShareSets& sets = {});

struct ItemEffect {
    std::int64_t item = 0;
    double open_value = 0.0;
    double closed_value = 0.0;
    double difference = 0.0;  // open - closed; NaN if either side had nothing scorable
    std::size_t open_scored = 0;
    std::size_t closed_scored = 0;
};

// Per-item open-minus-closed difference of feminine proportions or mean
// shares, in order of first appearance of the item. Throws MissingCondition
// when an item lacks records in either condition.
std::vector<ItemEffect> item_effect(const std::vector<ResultRecord>& records, Measure measure,
                                    const LabelPair& labels = {}, const PronounSets& pronouns = {},
                                    const ShareSets& shares = {});

// One row per record with its coding, for external mixed-effects modelling.
std::vector<std::vector<std::string>> tidy_table(const std::vector<ResultRecord>& records, Measure measure,
                                                 const PronounSets& pronouns = {}, const ShareSets& shares = {});

std::string render_condition_summaries(const std::vector<ConditionSummary>& rows);
std::string render_condition_shares(const std::vector<ConditionShare>& rows);
std::string render_item_effects(const std::vector<ItemEffect>& rows);

struct SampledCandidates {
    std::vector<TokenLogprob> candidates;  // one per normalized token, first observation kept
    int requests = 0;
    bool complete = false;  // every target token was observed
};

// For servers that return a single random token per request: repeats
// `query` until every target token (normalized) has been seen at the first
// position or `max_requests` is reached.
SampledCandidates repeat_sample(const std::function<std::vector<PositionLogprobs>()>& query,
                                const std::vector<std::string>& targets, int max_requests);

// repeat_sample against a text-completion endpoint.
SampledCandidates repeat_sample(const EndpointConfig& cfg, std::string_view prompt, const GenerationParams& params,
                                Transport& transport, const std::vector<std::string>& targets, int max_requests,
                                const RetryPolicy& retry = {});

}  // namespace behave
