#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "behave/design.hpp"
#include "behave/protocol.hpp"
#include "behave/tokenizer.hpp"

namespace behave {

struct BudgetOptions {
    // Tokens charged for the framing of every message (role markers). Zero
    // means prompt text only.
    int message_overhead = 0;
};

inline constexpr int kDefaultMessageOverhead = 4;

struct OneTrialReport {
    std::size_t item_numbers = 0;
    std::size_t max_token_numbers = 0;
};

struct RunBudget {
    std::int64_t run_index = 0;
    std::size_t max_tokens_per_run = 0;
};

struct MultiTrialReport {
    std::vector<RunBudget> per_run;
};

struct TokenReport {
    std::variant<OneTrialReport, MultiTrialReport> body;
    std::string tokenizer_id;
    bool approximate = false;

    // Largest reported figure: max_token_numbers or the largest run budget.
    std::size_t peak() const noexcept;
};

// Token count of a prompt's text segments (images and audio contribute zero).
std::size_t prompt_tokens(const Tokenizer& tok, const std::string& prompt);

// item_numbers = scheduled trials over all sessions; max_token_numbers is the
// largest count(system prompt) + count(prompt) among them.
TokenReport token_check_one(const Schedule& schedule, const GenerationParams& params, const Tokenizer& tok,
                            const BudgetOptions& options = {});

// Per run: count(system) + sum of count(prompt_i) + T * max_tokens, the size of
// the final request when every earlier reply used its full allowance, plus
// the allowance for the final reply.
TokenReport token_check_run(const Schedule& schedule, const GenerationParams& params, const Tokenizer& tok,
                            const BudgetOptions& options = {});

// Dispatches on schedule.mode.
TokenReport token_check(const Schedule& schedule, const GenerationParams& params, const Tokenizer& tok,
                        const BudgetOptions& options = {});

// Two-column report layout:
//   One-trial-per-run design / CheckItem Values / 1 item numbers N / 2 max_token_numbers M
//   Multiple-trials-per-run design / Run max_tokens_per_run / <run> <tokens> ...
std::string render_report(const TokenReport& report);

}  // namespace behave
