#include "behave/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "behave/csv.hpp"
#include "text_util.hpp"

namespace behave {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool word_char(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

bool contains(const std::vector<std::string>& set, std::string_view word) {
    return std::any_of(set.begin(), set.end(), [&](const std::string& s) { return detail::iequals(s, word); });
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    std::ostringstream s;
    s.precision(6);
    s << std::fixed << v;
    return s.str();
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

const char* to_string(Gender g) noexcept {
    switch (g) {
        case Gender::Masculine: return "Masculine";
        case Gender::Feminine: return "Feminine";
        case Gender::None: return "None";
        case Gender::Both: return "Both";
    }
    return "None";
}

GenderCode code_gender(std::string_view response, const PronounSets& sets) {
    GenderCode code;
    bool fem = false, masc = false;
    std::size_t i = 0;
    while (i < response.size()) {
        if (!word_char(static_cast<unsigned char>(response[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < response.size() && word_char(static_cast<unsigned char>(response[j]))) ++j;
        const auto word = response.substr(i, j - i);
        const bool f = contains(sets.feminine, word);
        const bool m = contains(sets.masculine, word);
        if ((f || m) && !code.first_pronoun) code.first_pronoun = detail::to_lower(word);
        fem = fem || f;
        masc = masc || m;
        i = j;
    }
    code.value = fem && masc ? Gender::Both : fem ? Gender::Feminine : masc ? Gender::Masculine : Gender::None;
    return code;
}

std::vector<ConditionSummary> summarize_conditions(const std::vector<ResultRecord>& records, const PronounSets& sets) {
    std::vector<ConditionSummary> out;
    std::map<std::string, std::size_t> index;
    for (const auto& r : records) {
        auto [it, inserted] = index.try_emplace(r.condition, out.size());
        if (inserted) out.push_back(ConditionSummary{r.condition});
        auto& s = out[it->second];
        ++s.trials;
        switch (code_gender(r.response, sets).value) {
            case Gender::Feminine: ++s.feminine; break;
            case Gender::Masculine: ++s.masculine; break;
            case Gender::Both: ++s.both; break;
            case Gender::None: ++s.none; break;
        }
    }
    for (auto& s : out) s.feminine_proportion = ratio(s.feminine, s.feminine + s.masculine);
    return out;
}

std::string normalize_token(std::string_view token) {
    for (;;) {
        if (!token.empty() && std::isspace(static_cast<unsigned char>(token.front()))) {
            token.remove_prefix(1);
        } else if (token.starts_with("\xC4\xA0") || token.starts_with("\xC4\x8A")) {  // byte-level space / newline
            token.remove_prefix(2);
        } else if (token.starts_with("\xE2\x96\x81")) {  // sentencepiece word boundary
            token.remove_prefix(3);
        } else {
            break;
        }
    }
    while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
    return detail::to_lower(token);
}

GenderShare logprob_gender_share(const std::vector<TokenLogprob>& candidates, const ShareSets& sets) {
    std::map<std::string, double> best;
    for (const auto& c : candidates) {
        auto norm = normalize_token(c.token);
        auto it = best.find(norm);
        if (it == best.end()) {
            best.emplace(std::move(norm), c.logprob);
        } else {
            it->second = std::max(it->second, c.logprob);
        }
    }
    GenderShare g;
    bool any_f = false, any_m = false;
    for (const auto& [token, lp] : best) {
        if (contains(sets.feminine, token)) {
            g.feminine_mass += std::exp(lp);
            any_f = true;
        } else if (contains(sets.masculine, token)) {
            g.masculine_mass += std::exp(lp);
            any_m = true;
        }
    }
    if (!any_f && !any_m) throw Error(ErrorCode::NoGenderTokens, "no feminine or masculine token among the candidates");
    g.partial = !(any_f && any_m);
    g.share = g.feminine_mass / (g.feminine_mass + g.masculine_mass);
    return g;
}

std::vector<TokenLogprob> position_candidates(std::string_view raw_response, EndpointMode mode, int choice,
                                              std::size_t position) {
    const auto positions = extract_logprobs(raw_response, mode, choice);
    if (position >= positions.size()) {
        throw Error(ErrorCode::LogprobsAbsent, "response has no logprobs at position " + std::to_string(position));
    }
    auto candidates = positions[position].candidates;
    const auto& chosen = positions[position].chosen;
    const bool listed = std::any_of(candidates.begin(), candidates.end(),
                                    [&](const TokenLogprob& t) { return t.token == chosen.token; });
    if (!listed) candidates.push_back(chosen);
    return candidates;
}

std::vector<RecordScore> score_records(const std::vector<ResultRecord>& records, Measure measure,
                                       const PronounSets& pronouns, const ShareSets& shares) {
    std::vector<RecordScore> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        RecordScore s{&r, std::nullopt, false};
        if (measure == Measure::Completions) {
            const auto g = code_gender(r.response, pronouns).value;
            if (g == Gender::Feminine) s.value = 1.0;
            if (g == Gender::Masculine) s.value = 0.0;
        } else {
            const auto mode = detect_payload_mode(r.raw_response);
            if (!mode) throw Error(ErrorCode::MalformedResponse, "rawResponse is not a completion payload");
            const auto candidates = position_candidates(r.raw_response, *mode, r.n - 1, 0);
            try {
                const auto share = logprob_gender_share(candidates, shares);
                s.value = share.share;
                s.partial = share.partial;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoGenderTokens) throw;
            }
        }
        out.push_back(s);
    }
    return out;
}

std::vector<ConditionShare> summarize_shares(const std::vector<ResultRecord>& records, const ShareSets& sets) {
    const auto scores = score_records(records, Measure::Logprobs, {}, sets);
    std::vector<ConditionShare> out;
    std::vector<double> sums;
    std::map<std::string, std::size_t> index;
    for (const auto& s : scores) {
        auto [it, inserted] = index.try_emplace(s.record->condition, out.size());
        if (inserted) {
            out.push_back(ConditionShare{s.record->condition});
            sums.push_back(0.0);
        }
        auto& c = out[it->second];
        ++c.records;
        if (s.value) {
            ++c.scored;
            sums[it->second] += *s.value;
            if (s.partial) ++c.partial;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].mean_share = out[i].scored == 0 ? kNaN : sums[i] / static_cast<double>(out[i].scored);
    }
    return out;
}

std::vector<ItemEffect> item_effect(const std::vector<ResultRecord>& records, Measure measure, const LabelPair& labels,
                                    const PronounSets& pronouns, const ShareSets& shares) {
    struct Acc {
        std::size_t open_records = 0, closed_records = 0;
        std::size_t open_scored = 0, closed_scored = 0;
        double open_sum = 0, closed_sum = 0;
    };
    std::vector<std::int64_t> order;
    std::map<std::int64_t, Acc> acc;
    for (const auto& s : score_records(records, measure, pronouns, shares)) {
        const auto& r = *s.record;
        const bool open = r.condition == labels.open;
        const bool closed = r.condition == labels.closed;
        if (!open && !closed) continue;
        auto [it, inserted] = acc.try_emplace(r.item);
        if (inserted) order.push_back(r.item);
        auto& a = it->second;
        (open ? a.open_records : a.closed_records)++;
        if (s.value) {
            (open ? a.open_scored : a.closed_scored)++;
            (open ? a.open_sum : a.closed_sum) += *s.value;
        }
    }
    std::vector<ItemEffect> out;
    for (auto item : order) {
        const auto& a = acc[item];
        if (a.open_records == 0 || a.closed_records == 0) {
            throw Error(ErrorCode::MissingCondition, "item " + std::to_string(item) + " has no records for condition \"" +
                                                         (a.open_records == 0 ? labels.open : labels.closed) + "\"");
        }
        ItemEffect e;
        e.item = item;
        e.open_scored = a.open_scored;
        e.closed_scored = a.closed_scored;
        e.open_value = a.open_scored ? a.open_sum / static_cast<double>(a.open_scored) : kNaN;
        e.closed_value = a.closed_scored ? a.closed_sum / static_cast<double>(a.closed_scored) : kNaN;
        e.difference = e.open_value - e.closed_value;
        out.push_back(e);
    }
    return out;
}

std::vector<std::vector<std::string>> tidy_table(const std::vector<ResultRecord>& records, Measure measure,
                                                 const PronounSets& pronouns, const ShareSets& shares) {
    std::vector<std::vector<std::string>> rows;
    if (measure == Measure::Completions) {
        rows.push_back({"Session", "Run", "Item", "Trial", "Condition", "N", "Gender", "FirstPronoun", "Feminine"});
        for (const auto& r : records) {
            const auto code = code_gender(r.response, pronouns);
            std::string fem = code.value == Gender::Feminine ? "1" : code.value == Gender::Masculine ? "0" : "NA";
            rows.push_back({std::to_string(r.session), std::to_string(r.run), std::to_string(r.item),
                            std::to_string(r.trial), r.condition, std::to_string(r.n), to_string(code.value),
                            code.first_pronoun.value_or(""), fem});
        }
        return rows;
    }
    rows.push_back({"Session", "Run", "Item", "Trial", "Condition", "N", "Share", "Partial"});
    for (const auto& s : score_records(records, measure, pronouns, shares)) {
        const auto& r = *s.record;
        rows.push_back({std::to_string(r.session), std::to_string(r.run), std::to_string(r.item),
                        std::to_string(r.trial), r.condition, std::to_string(r.n),
                        s.value ? format_double(*s.value) : "NA", s.value ? (s.partial ? "1" : "0") : "NA"});
    }
    return rows;
}

std::string render_condition_summaries(const std::vector<ConditionSummary>& rows) {
    std::string out = csv::format_row(
        {"Condition", "Trials", "Feminine", "Masculine", "Both", "None", "FeminineProportion"});
    for (const auto& s : rows) {
        out += csv::format_row({s.condition, std::to_string(s.trials), std::to_string(s.feminine),
                                std::to_string(s.masculine), std::to_string(s.both), std::to_string(s.none),
                                format_double(s.feminine_proportion)});
    }
    return out;
}

std::string render_condition_shares(const std::vector<ConditionShare>& rows) {
    std::string out = csv::format_row({"Condition", "Records", "Scored", "Partial", "MeanShare"});
    for (const auto& s : rows) {
        out += csv::format_row({s.condition, std::to_string(s.records), std::to_string(s.scored),
                                std::to_string(s.partial), format_double(s.mean_share)});
    }
    return out;
}

std::string render_item_effects(const std::vector<ItemEffect>& rows) {
    std::string out = csv::format_row({"Item", "Open", "Closed", "Difference"});
    for (const auto& e : rows) {
        out += csv::format_row({std::to_string(e.item), format_double(e.open_value), format_double(e.closed_value),
                                format_double(e.difference)});
    }
    return out;
}

SampledCandidates repeat_sample(const std::function<std::vector<PositionLogprobs>()>& query,
                                const std::vector<std::string>& targets, int max_requests) {
    SampledCandidates out;
    std::map<std::string, bool> seen;
    auto all_seen = [&] {
        return std::all_of(targets.begin(), targets.end(),
                           [&](const std::string& t) { return seen.count(normalize_token(t)) > 0; });
    };
    while (out.requests < max_requests && !all_seen()) {
        ++out.requests;
        const auto positions = query();
        if (positions.empty()) continue;
        std::vector<TokenLogprob> observed = positions.front().candidates;
        observed.push_back(positions.front().chosen);
        for (const auto& t : observed) {
            auto norm = normalize_token(t.token);
            if (seen.emplace(norm, true).second) out.candidates.push_back(t);
        }
    }
    out.complete = all_seen();
    return out;
}

SampledCandidates repeat_sample(const EndpointConfig& cfg, std::string_view prompt, const GenerationParams& params,
                                Transport& transport, const std::vector<std::string>& targets, int max_requests,
                                const RetryPolicy& retry) {
    if (cfg.mode != EndpointMode::Text) {
        throw Error(ErrorCode::ModeMismatch, "repeat sampling targets text-completion endpoints");
    }
    GenerationParams p = params;
    if (p.logprobs <= 0) p.logprobs = 1;
    if (p.max_tokens <= 0) p.max_tokens = 1;
    const auto body = build_text_request(cfg, prompt, p).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    return repeat_sample(
        [&] {
            const auto raw = send_request(transport, cfg, body, retry);
            return extract_logprobs(raw.body, EndpointMode::Text);
        },
        targets, max_requests);
}

}  // namespace behave
