#include "behave/design.hpp"

#include <algorithm>
#include <map>

#include "behave/error.hpp"
#include "text_util.hpp"

namespace behave {

const char* to_string(DesignMode mode) noexcept {
    return mode == DesignMode::OneTrialPerRun ? "one-trial-per-run" : "multiple-trials-per-run";
}

std::uint64_t CounterRng::derive_key(std::uint64_t seed,
                                     std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t key = detail::splitmix64(seed);
    for (auto c : coords) key = detail::splitmix64(key ^ detail::splitmix64(c + 0x632BE59BD9B4E019ULL));
    return key;
}

std::uint64_t CounterRng::next() noexcept {
    return detail::splitmix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++);
}

std::uint64_t CounterRng::below(std::uint64_t bound) noexcept {
    // Reject the top partial block so every residue is equally likely.
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
}

double CounterRng::uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::size_t Schedule::trial_count() const noexcept {
    std::size_t total = 0;
    for (const auto& s : sessions)
        for (const auto& r : s.runs) total += r.trials.size();
    return total;
}

DesignMode schedule_mode(const StimulusSet& set) {
    if (set.rows.empty()) throw Error(ErrorCode::EmptyTable, "stimulus set is empty");
    std::map<std::int64_t, std::size_t> sizes;
    for (const auto& row : set.rows) {
        if (++sizes[row.run] > 1) return DesignMode::MultipleTrialsPerRun;
    }
    return DesignMode::OneTrialPerRun;
}

Schedule build_schedule(const StimulusSet& set, int sessions, bool random_item, std::uint64_t seed) {
    if (sessions < 1) throw Error(ErrorCode::InvalidArgument, "sessions must be >= 1");
    Schedule schedule;
    schedule.mode = schedule_mode(set);
    schedule.seed = seed;
    schedule.random_item = random_item && schedule.mode == DesignMode::MultipleTrialsPerRun;
    schedule.extra_columns = set.extra_columns;

    std::vector<RunPlan> base;
    std::map<std::int64_t, std::size_t> position;
    for (const auto& row : set.rows) {
        auto [it, inserted] = position.try_emplace(row.run, base.size());
        if (inserted) base.push_back(RunPlan{row.run, {}});
        base[it->second].trials.push_back(row);
    }

    schedule.sessions.reserve(static_cast<std::size_t>(sessions));
    for (int s = 1; s <= sessions; ++s) {
        SessionPlan plan{s, base};
        if (schedule.random_item) {
            for (auto& run : plan.runs) {
                CounterRng rng(CounterRng::derive_key(
                    seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(run.run_index)}));
                auto& t = run.trials;
                for (std::size_t i = t.size(); i > 1; --i) {
                    std::swap(t[i - 1], t[rng.below(i)]);
                }
            }
        }
        schedule.sessions.push_back(std::move(plan));
    }
    return schedule;
}

}  // namespace behave
