#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "behave/stimuli.hpp"

namespace behave {

enum class DesignMode { OneTrialPerRun, MultipleTrialsPerRun };

const char* to_string(DesignMode mode) noexcept;

// Counter-based generator: the i-th draw is a pure function of (key, i), so
// independent streams are obtained by deriving distinct keys.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    // Key derived from a seed and any number of stream coordinates.
    static std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> coords) noexcept;

    std::uint64_t next() noexcept;
    // Uniform integer in [0, bound), bound > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t bound) noexcept;
    // Uniform double in [0, 1).
    double uniform() noexcept;

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

struct RunPlan {
    std::int64_t run_index = 0;
    std::vector<StimulusRow> trials;  // presentation order; Trial = position + 1
};

struct SessionPlan {
    int session_index = 0;
    std::vector<RunPlan> runs;
};

struct Schedule {
    std::vector<SessionPlan> sessions;
    DesignMode mode = DesignMode::OneTrialPerRun;
    std::uint64_t seed = 0;
    bool random_item = false;  // effective value after the one-trial override
    std::vector<std::string> extra_columns;

    std::size_t trial_count() const noexcept;
};

DesignMode schedule_mode(const StimulusSet& set);

// Groups rows by Run (first-appearance order) and replicates the design for
// each session. With random_item, every (session, run) gets its own
// Fisher-Yates permutation keyed by (seed, session, run). Randomization is
// always off for one-trial-per-run designs.
Schedule build_schedule(const StimulusSet& set, int sessions, bool random_item, std::uint64_t seed);

}  // namespace behave
