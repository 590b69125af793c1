#include <doctest.h>

#include <algorithm>
#include <map>

#include "behave/design.hpp"
#include "behave/error.hpp"
#include "behave/stimuli.hpp"

using namespace behave;

namespace {

StimulusSet multi_set(int runs, int trials) {
    StimulusSet set;
    for (int r = 1; r <= runs; ++r)
        for (int t = 1; t <= trials; ++t)
            set.rows.push_back(StimulusRow{r, t, t % 2 ? "Open syllable" : "Closed syllable",
                                           "prompt " + std::to_string(r) + "-" + std::to_string(t), {}});
    return set;
}

std::vector<std::int64_t> items(const RunPlan& run) {
    std::vector<std::int64_t> out;
    for (const auto& t : run.trials) out.push_back(t.item);
    return out;
}

}  // namespace

TEST_CASE("design mode follows run sizes") {
    CHECK(schedule_mode(multi_set(2, 16)) == DesignMode::MultipleTrialsPerRun);
    CHECK(schedule_mode(multi_set(8, 1)) == DesignMode::OneTrialPerRun);
    CHECK_THROWS_AS(schedule_mode(StimulusSet{}), Error);
}

TEST_CASE("schedule replicates the design per session in file order") {
    const auto sch = build_schedule(multi_set(2, 4), 3, false, 0);
    REQUIRE(sch.sessions.size() == 3);
    CHECK(sch.trial_count() == 24);
    for (const auto& s : sch.sessions) {
        REQUIRE(s.runs.size() == 2);
        CHECK(items(s.runs[0]) == std::vector<std::int64_t>{1, 2, 3, 4});
    }
    CHECK(sch.sessions[2].session_index == 3);
    CHECK_THROWS_AS(build_schedule(multi_set(1, 2), 0, false, 0), Error);
}

TEST_CASE("runs keep first-appearance order even when interleaved") {
    StimulusSet set;
    set.rows = {{2, 1, "A", "a", {}}, {1, 1, "A", "b", {}}, {2, 2, "B", "c", {}}};
    const auto sch = build_schedule(set, 1, false, 0);
    REQUIRE(sch.sessions[0].runs.size() == 2);
    CHECK(sch.sessions[0].runs[0].run_index == 2);
    CHECK(items(sch.sessions[0].runs[0]) == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("randomization permutes within runs and is seed-deterministic") {
    const auto set = multi_set(3, 10);
    const auto a = build_schedule(set, 4, true, 42);
    const auto b = build_schedule(set, 4, true, 42);
    const auto c = build_schedule(set, 4, true, 43);
    CHECK(a.random_item);
    bool any_diff_seed = false, any_diff_session = false;
    for (std::size_t s = 0; s < a.sessions.size(); ++s) {
        for (std::size_t r = 0; r < a.sessions[s].runs.size(); ++r) {
            auto got = items(a.sessions[s].runs[r]);
            CHECK(got == items(b.sessions[s].runs[r]));
            if (got != items(c.sessions[s].runs[r])) any_diff_seed = true;
            if (s > 0 && got != items(a.sessions[0].runs[r])) any_diff_session = true;
            std::sort(got.begin(), got.end());
            CHECK(got == std::vector<std::int64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
            for (const auto& t : a.sessions[s].runs[r].trials) CHECK(t.run == a.sessions[s].runs[r].run_index);
        }
    }
    CHECK(any_diff_seed);
    CHECK(any_diff_session);
}

TEST_CASE("one-trial designs ignore random_item") {
    const auto sch = build_schedule(multi_set(5, 1), 2, true, 9);
    CHECK_FALSE(sch.random_item);
    CHECK(sch.mode == DesignMode::OneTrialPerRun);
}

TEST_CASE("shuffle is close to uniform over permutations of three") {
    const auto set = multi_set(1, 3);
    std::map<std::vector<std::int64_t>, int> counts;
    const int draws = 6000;
    for (int seed = 0; seed < draws; ++seed) {
        counts[items(build_schedule(set, 1, true, static_cast<std::uint64_t>(seed)).sessions[0].runs[0])]++;
    }
    REQUIRE(counts.size() == 6);
    double chi2 = 0;
    for (const auto& [perm, n] : counts) chi2 += (n - 1000.0) * (n - 1000.0) / 1000.0;
    // 5 degrees of freedom; 20.5 is the 0.999 quantile.
    CHECK(chi2 < 20.5);
}

TEST_CASE("CounterRng below stays in range and uniform is in [0,1)") {
    CounterRng rng(CounterRng::derive_key(1, {2, 3}));
    for (int i = 0; i < 10000; ++i) {
        CHECK(rng.below(7) < 7);
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(CounterRng::derive_key(1, {2, 3}) != CounterRng::derive_key(1, {3, 2}));
}
