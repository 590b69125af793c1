#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "behave/design.hpp"
#include "behave/protocol.hpp"
#include "behave/results.hpp"
#include "behave/transport.hpp"

namespace behave {

struct TrialEvent {
    int session = 0;
    std::int64_t run = 0;
    int trial = 0;
    bool ok = false;
    int attempts = 0;
    std::size_t records = 0;
    std::string detail;
};

struct RunOptions {
    int parallelism = 1;  // runs executed concurrently; trials within a run are sequential
    RetryPolicy retry;
    std::chrono::milliseconds pacing{0};  // minimum gap between requests of one worker
    // Adds a "seed" field derived from (schedule seed, session, run, trial) to
    // every request, making sampling reproducible on servers that honour it.
    bool per_trial_seed = false;
    std::ostream* progress = nullptr;  // one line per completed trial
    Transport* transport = nullptr;    // defaults to HttpTransport
    std::function<void(const TrialEvent&)> on_trial;  // called after the trial's records are on disk
};

struct AbortedRun {
    int session = 0;
    std::int64_t run = 0;
    int completed_trials = 0;
    int status = 0;  // HTTP status when the abort came from the provider
    std::string reason;
};

struct RunSummary {
    std::size_t records_written = 0;
    std::size_t runs_total = 0;
    std::size_t runs_aborted = 0;
    std::vector<AbortedRun> aborted;
    std::size_t truncated_cells = 0;  // xlsx only
};

// Seed sent with a trial when RunOptions::per_trial_seed is set.
std::int64_t trial_seed(std::uint64_t schedule_seed, int session, std::int64_t run, int trial) noexcept;

// Executes every scheduled trial. Chat runs open with the system prompt (when
// non-empty), then alternate user prompts and the first returned completion.
// Records are flushed after every trial; the final file is ordered by
// (session, run, trial, N). A provider or response error aborts only its run;
// an output I/O error aborts the experiment with Error{Io}.
RunSummary run_experiment(const Schedule& schedule, const EndpointConfig& cfg, const GenerationParams& params,
                          const std::string& save_path, const RunOptions& options = {});

// Replaces local-file image locators with base64 data URLs. Throws
// InvalidSegment when a referenced file does not exist.
std::vector<ContentSegment> resolve_local_images(std::vector<ContentSegment> segments);

}  // namespace behave
