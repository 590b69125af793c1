#include <doctest.h>

#include <random>

#include "behave/design.hpp"
#include "behave/token_budget.hpp"
#include "behave/tokenizer.hpp"
#include "support/budget_oracle.hpp"

using namespace behave;

namespace {

const Tokenizer& gpt2() {
    static const auto r = resolve_tokenizer("gpt2", TokenizerRegistry::with_defaults());
    return *r.tokenizer;
}

const char* kPelcra =
    "Please repeat the fragment and complete it into a full sentence: Although Pelcra was sick ...";

StimulusSet from_prompts(const std::vector<std::vector<std::string>>& runs) {
    StimulusSet set;
    for (std::size_t r = 0; r < runs.size(); ++r)
        for (std::size_t t = 0; t < runs[r].size(); ++t)
            set.rows.push_back(StimulusRow{static_cast<std::int64_t>(r + 1), static_cast<std::int64_t>(t + 1), "C",
                                           runs[r][t], {}});
    return set;
}

}  // namespace

TEST_CASE("one-trial report counts scheduled trials and the longest prompt") {
    const auto set = from_prompts({{kPelcra}, {"short"}, {"Hello! How can I assist you today?"}});
    const auto sch = build_schedule(set, 100, false, 0);
    GenerationParams p;
    const auto r = token_check_one(sch, p, gpt2());
    const auto& one = std::get<OneTrialReport>(r.body);
    CHECK(one.item_numbers == 300);
    CHECK(one.max_token_numbers == 19);
    CHECK(r.peak() == 19);

    p.system_prompt = "hello hello hello";
    const auto with_sys = std::get<OneTrialReport>(token_check_one(sch, p, gpt2()).body);
    CHECK(with_sys.max_token_numbers == 22);
    const auto with_overhead =
        std::get<OneTrialReport>(token_check_one(sch, p, gpt2(), BudgetOptions{kDefaultMessageOverhead}).body);
    CHECK(with_overhead.max_token_numbers == 30);
}

TEST_CASE("image segments contribute no tokens") {
    CHECK(prompt_tokens(gpt2(), "<text>hello hello hello</text><img>https://x/y.png</img>") == 3);
}

TEST_CASE("multi-trial budget equals the conversation simulation") {
    std::mt19937 rng(17);
    for (int round = 0; round < 30; ++round) {
        std::vector<std::vector<std::string>> runs(1 + rng() % 3);
        for (auto& run : runs) {
            const int trials = 2 + static_cast<int>(rng() % 7);
            for (int t = 0; t < trials; ++t) run.push_back(testing_support::reply_of_tokens(1 + rng() % 60) + " end.");
        }
        const auto sch = build_schedule(from_prompts(runs), 2, true, rng());
        GenerationParams p;
        p.max_tokens = static_cast<int>(rng() % 501);
        if (round % 2) p.system_prompt = "You are a participant in a psycholinguistic experiment";
        for (int overhead : {0, kDefaultMessageOverhead}) {
            const auto report = token_check_run(sch, p, gpt2(), BudgetOptions{overhead});
            const auto expect = testing_support::simulate_run_budgets(sch, p.system_prompt, p.max_tokens, gpt2(), overhead);
            const auto& per_run = std::get<MultiTrialReport>(report.body).per_run;
            REQUIRE(per_run.size() == expect.size());
            for (std::size_t i = 0; i < expect.size(); ++i) CHECK(per_run[i].max_tokens_per_run == expect[i]);
        }
    }
}

TEST_CASE("multi-trial budget is independent of trial order") {
    const auto set = from_prompts({{"a b c", kPelcra, "hello hello hello", "x"}});
    GenerationParams p;
    p.max_tokens = 50;
    const auto plain = token_check_run(build_schedule(set, 1, false, 0), p, gpt2());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto shuffled = token_check_run(build_schedule(set, 1, true, seed), p, gpt2());
        CHECK(shuffled.peak() == plain.peak());
    }
}

TEST_CASE("reports render in the two-column layout") {
    TokenReport one{OneTrialReport{4000, 137}, "gpt2", false};
    CHECK(render_report(one) ==
          "One-trial-per-run design\nCheckItem Values\n1 item numbers 4000\n2 max_token_numbers 137\n");
    TokenReport multi{MultiTrialReport{{RunBudget{1, 9120}, RunBudget{2, 9133}}}, "gpt2", false};
    CHECK(render_report(multi) == "Multiple-trials-per-run design\nRun max_tokens_per_run\n1 9120\n2 9133\n");
}

TEST_CASE("token_check dispatches on design mode") {
    GenerationParams p;
    CHECK(std::holds_alternative<OneTrialReport>(
        token_check(build_schedule(from_prompts({{"a"}, {"b"}}), 1, false, 0), p, gpt2()).body));
    CHECK(std::holds_alternative<MultiTrialReport>(
        token_check(build_schedule(from_prompts({{"a", "b"}}), 1, false, 0), p, gpt2()).body));
}
