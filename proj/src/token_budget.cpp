#include "behave/token_budget.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace behave {

std::size_t TokenReport::peak() const noexcept {
    if (const auto* one = std::get_if<OneTrialReport>(&body)) return one->max_token_numbers;
    std::size_t best = 0;
    for (const auto& r : std::get<MultiTrialReport>(body).per_run) best = std::max(best, r.max_tokens_per_run);
    return best;
}

std::size_t prompt_tokens(const Tokenizer& tok, const std::string& prompt) {
    std::size_t total = 0;
    for (const auto& seg : parse_prompt_segments(prompt)) {
        if (seg.kind == SegmentKind::Text) total += tok.count(seg.payload);
    }
    return total;
}

namespace {

std::size_t system_tokens(const Tokenizer& tok, const GenerationParams& params, const BudgetOptions& options) {
    if (params.system_prompt.empty()) return 0;
    return tok.count(params.system_prompt) + static_cast<std::size_t>(options.message_overhead);
}

}  // namespace

TokenReport token_check_one(const Schedule& schedule, const GenerationParams& params, const Tokenizer& tok,
                            const BudgetOptions& options) {
    const std::size_t sys = system_tokens(tok, params, options);
    const auto overhead = static_cast<std::size_t>(options.message_overhead);
    OneTrialReport report;
    // Prompts repeat across sessions; count each distinct one once.
    std::map<std::string, std::size_t, std::less<>> memo;
    for (const auto& session : schedule.sessions) {
        for (const auto& run : session.runs) {
            for (const auto& trial : run.trials) {
                ++report.item_numbers;
                auto [it, inserted] = memo.try_emplace(trial.prompt, 0);
                if (inserted) it->second = prompt_tokens(tok, trial.prompt);
                report.max_token_numbers = std::max(report.max_token_numbers, sys + it->second + overhead);
            }
        }
    }
    return TokenReport{report, tok.id(), false};
}

TokenReport token_check_run(const Schedule& schedule, const GenerationParams& params, const Tokenizer& tok,
                            const BudgetOptions& options) {
    const std::size_t sys = system_tokens(tok, params, options);
    const auto overhead = static_cast<std::size_t>(options.message_overhead);
    const auto allowance = static_cast<std::size_t>(std::max(params.max_tokens, 0));
    MultiTrialReport report;
    if (!schedule.sessions.empty()) {
        // Trial order does not change the sum, so the first session suffices.
        for (const auto& run : schedule.sessions.front().runs) {
            const std::size_t trials = run.trials.size();
            std::size_t total = sys;
            for (const auto& trial : run.trials) total += prompt_tokens(tok, trial.prompt) + overhead;
            // Earlier replies are resent as assistant messages.
            if (trials > 0) total += (trials - 1) * overhead;
            total += trials * allowance;
            report.per_run.push_back(RunBudget{run.run_index, total});
        }
    }
    return TokenReport{report, tok.id(), false};
}

TokenReport token_check(const Schedule& schedule, const GenerationParams& params, const Tokenizer& tok,
                        const BudgetOptions& options) {
    return schedule.mode == DesignMode::OneTrialPerRun ? token_check_one(schedule, params, tok, options)
                                                       : token_check_run(schedule, params, tok, options);
}

std::string render_report(const TokenReport& report) {
    std::ostringstream out;
    if (const auto* one = std::get_if<OneTrialReport>(&report.body)) {
        out << "One-trial-per-run design\n"
            << "CheckItem Values\n"
            << "1 item numbers " << one->item_numbers << "\n"
            << "2 max_token_numbers " << one->max_token_numbers << "\n";
    } else {
        out << "Multiple-trials-per-run design\n"
            << "Run max_tokens_per_run\n";
        for (const auto& r : std::get<MultiTrialReport>(report.body).per_run) {
            out << r.run_index << " " << r.max_tokens_per_run << "\n";
        }
    }
    return out.str();
}

}  // namespace behave
