#include "behave/runner.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <openssl/evp.h>
#include <sstream>
#include <thread>
#include <tuple>

#include "behave/csv.hpp"
#include "text_util.hpp"

namespace behave {

std::int64_t trial_seed(std::uint64_t schedule_seed, int session, std::int64_t run, int trial) noexcept {
    const auto key = CounterRng::derive_key(
        schedule_seed, {static_cast<std::uint64_t>(session), static_cast<std::uint64_t>(run),
                        static_cast<std::uint64_t>(trial)});
    return static_cast<std::int64_t>(key & 0x7FFFFFFF);
}

namespace {

std::string mime_for(const std::filesystem::path& p) {
    const auto ext = detail::to_lower(p.extension().string());
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    return "application/octet-stream";
}

std::string base64(const std::string& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::string dump(const OrderedJson& j) { return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace); }

// Owns the output file. Rows are appended and flushed per trial; finish()
// rewrites the file in schedule order.
class ResultSink {
public:
    ResultSink(std::string path, std::vector<std::string> extra_columns)
        : path_(std::move(path)), format_(output_format_for(path_)), extra_(std::move(extra_columns)) {
        stream_path_ = format_ == OutputFormat::Csv ? path_ : path_ + ".partial.csv";
        out_.open(stream_path_, std::ios::binary | std::ios::trunc);
        if (!out_) throw Error(ErrorCode::Io, "cannot open " + stream_path_ + " for writing");
        out_ << csv::format_row(result_header(extra_));
        out_.flush();
        if (!out_) throw Error(ErrorCode::Io, "write to " + stream_path_ + " failed");
    }

    void append(const std::vector<ResultRecord>& records, const TrialEvent& event, std::ostream* progress) {
        std::lock_guard lock(mu_);
        for (const auto& r : records) out_ << csv::format_row(record_fields(r));
        out_.flush();
        if (!out_) throw Error(ErrorCode::Io, "write to " + stream_path_ + " failed");
        all_.insert(all_.end(), records.begin(), records.end());
        report(event, progress);
    }

    void report(const TrialEvent& e, std::ostream* progress) {
        if (!progress) return;
        *progress << "session " << e.session << " run " << e.run << " trial " << e.trial << ": "
                  << (e.ok ? "ok" : "failed");
        if (e.ok) *progress << " (" << e.records << (e.records == 1 ? " record" : " records") << ")";
        if (!e.detail.empty()) *progress << " " << e.detail;
        *progress << "\n";
        progress->flush();
    }

    void report_locked(const TrialEvent& e, std::ostream* progress) {
        std::lock_guard lock(mu_);
        report(e, progress);
    }

    std::size_t finish(const std::map<std::int64_t, std::size_t>& run_order) {
        out_.close();
        auto ordinal = [&](std::int64_t run) {
            auto it = run_order.find(run);
            return it == run_order.end() ? run_order.size() : it->second;
        };
        std::stable_sort(all_.begin(), all_.end(), [&](const ResultRecord& a, const ResultRecord& b) {
            return std::tuple(a.session, ordinal(a.run), a.trial, a.n) <
                   std::tuple(b.session, ordinal(b.run), b.trial, b.n);
        });
        if (format_ == OutputFormat::Xlsx) {
            std::vector<std::vector<std::string>> rows{result_header(extra_)};
            for (const auto& r : all_) rows.push_back(record_fields(r));
            std::vector<bool> numeric(rows.front().size(), false);
            for (std::size_t c : {0, 1, 2, 3, 7}) numeric[c] = true;
            const auto truncated = write_xlsx(path_, rows, numeric);
            std::error_code ec;
            std::filesystem::remove(stream_path_, ec);
            return truncated;
        }
        const auto tmp = path_ + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp + " for writing");
            out << csv::format_row(result_header(extra_));
            for (const auto& r : all_) out << csv::format_row(record_fields(r));
            out.flush();
            if (!out) throw Error(ErrorCode::Io, "write to " + tmp + " failed");
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path_, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot replace " + path_ + ": " + ec.message());
        return 0;
    }

    std::size_t size() const { return all_.size(); }

private:
    std::string path_;
    OutputFormat format_;
    std::vector<std::string> extra_;
    std::string stream_path_;
    std::ofstream out_;
    std::mutex mu_;
    std::vector<ResultRecord> all_;
};

struct RunOutcome {
    bool aborted = false;
    AbortedRun info;
};

class RunExecutor {
public:
    RunExecutor(const Schedule& schedule, const EndpointConfig& cfg, const GenerationParams& params,
                const RunOptions& options, Transport& transport, ResultSink& sink)
        : schedule_(schedule), cfg_(cfg), params_(params), options_(options), transport_(transport), sink_(sink) {}

    RunOutcome execute(int session, const RunPlan& run, bool& first_request) {
        Conversation conv;
        if (cfg_.mode == EndpointMode::Chat && !params_.system_prompt.empty()) {
            conv = add_message(conv, Role::System, params_.system_prompt);
        }
        int completed = 0;
        for (std::size_t t = 0; t < run.trials.size(); ++t) {
            const auto& stim = run.trials[t];
            const int trial = static_cast<int>(t) + 1;
            TrialEvent event{session, run.run_index, trial, false, 0, 0, {}};
            int status = 0;
            std::vector<ResultRecord> records;
            Conversation next_conv;
            try {
                auto segments = resolve_local_images(parse_prompt_segments(stim.prompt));
                GenerationParams p = params_;
                if (options_.per_trial_seed) p.seed = trial_seed(schedule_.seed, session, run.run_index, trial);

                OrderedJson body;
                std::string message;
                if (cfg_.mode == EndpointMode::Chat) {
                    next_conv = add_message(conv, Role::User, std::move(segments));
                    body = build_chat_request(cfg_, next_conv, p);
                    message = dump(body["messages"]);
                } else {
                    if (has_non_text(segments)) {
                        throw Error(ErrorCode::UnsupportedModality, "text completion accepts text prompts only");
                    }
                    message = text_of(segments);
                    body = build_text_request(cfg_, message, p);
                }

                if (!first_request && options_.pacing.count() > 0) std::this_thread::sleep_for(options_.pacing);
                first_request = false;
                auto raw = send_request(transport_, cfg_, dump(body), options_.retry);
                event.attempts = raw.attempts;
                auto completions = extract_completions(raw.body, cfg_.mode);
                if (completions.empty()) throw Error(ErrorCode::MalformedResponse, "response has no choices");

                for (const auto& c : completions) {
                    records.push_back(ResultRecord{session, run.run_index, stim.item, trial, stim.condition, stim.prompt,
                                                   c.text, c.index + 1, message, raw.body, stim.extra});
                }
                if (cfg_.mode == EndpointMode::Chat) {
                    conv = add_message(next_conv, Role::Assistant, completions.front().text);
                }
            } catch (const ProviderFailure& e) {
                status = e.error().status;
                return abort(event, completed, status, e.what());
            } catch (const Error& e) {
                return abort(event, completed, status, std::string(to_string(e.code())) + ": " + e.what());
            }
            event.ok = true;
            event.records = records.size();
            sink_.append(records, event, options_.progress);
            ++completed;
            if (options_.on_trial) options_.on_trial(event);
        }
        return {};
    }

private:
    RunOutcome abort(TrialEvent& event, int completed, int status, const std::string& reason) {
        event.detail = reason;
        sink_.report_locked(event, options_.progress);
        if (options_.on_trial) options_.on_trial(event);
        return RunOutcome{true, AbortedRun{event.session, event.run, completed, status, reason}};
    }

    const Schedule& schedule_;
    const EndpointConfig& cfg_;
    const GenerationParams& params_;
    const RunOptions& options_;
    Transport& transport_;
    ResultSink& sink_;
};

}  // namespace

std::vector<ContentSegment> resolve_local_images(std::vector<ContentSegment> segments) {
    for (auto& seg : segments) {
        if (seg.kind != SegmentKind::Image || looks_like_url(seg.payload)) continue;
        const std::filesystem::path path(std::string(detail::trim(seg.payload)));
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::InvalidSegment, "image file not found: " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        seg.payload = "data:" + mime_for(path) + ";base64," + base64(buf.str());
    }
    return segments;
}

RunSummary run_experiment(const Schedule& schedule, const EndpointConfig& cfg, const GenerationParams& params,
                          const std::string& save_path, const RunOptions& options) {
    if (cfg.mode == EndpointMode::Text && schedule.mode == DesignMode::MultipleTrialsPerRun) {
        throw Error(ErrorCode::ModeMismatch,
                    "text completion has no conversation state; multiple-trials-per-run designs need a chat endpoint");
    }
    if (cfg.mode == EndpointMode::Text && !params.system_prompt.empty()) {
        throw Error(ErrorCode::InvalidParams, "text completion has no system role; leave the system prompt empty");
    }
    const GenerationParams effective = effective_params(params, schedule.mode);
    validate(effective, cfg.mode);

    ResultSink sink(save_path, schedule.extra_columns);
    HttpTransport default_transport;
    Transport& transport = options.transport ? *options.transport : default_transport;
    RunExecutor executor(schedule, cfg, effective, options, transport, sink);

    RunSummary summary;
    std::map<std::int64_t, std::size_t> run_order;
    std::mutex summary_mu;
    std::exception_ptr fatal;
    std::atomic<bool> stop{false};

    for (const auto& session : schedule.sessions) {
        for (const auto& run : session.runs) run_order.try_emplace(run.run_index, run_order.size());
        summary.runs_total += session.runs.size();

        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            bool first_request = true;
            for (;;) {
                if (stop.load()) return;
                const std::size_t i = next.fetch_add(1);
                if (i >= session.runs.size()) return;
                try {
                    auto outcome = executor.execute(session.session_index, session.runs[i], first_request);
                    if (outcome.aborted) {
                        std::lock_guard lock(summary_mu);
                        summary.aborted.push_back(std::move(outcome.info));
                    }
                } catch (...) {
                    std::lock_guard lock(summary_mu);
                    if (!fatal) fatal = std::current_exception();
                    stop.store(true);
                    return;
                }
            }
        };
        const auto workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(options.parallelism, 1)), 1,
                                                     std::max<std::size_t>(session.runs.size(), 1));
        if (workers == 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        }
        if (fatal) std::rethrow_exception(fatal);
    }

    std::sort(summary.aborted.begin(), summary.aborted.end(), [&](const AbortedRun& a, const AbortedRun& b) {
        return std::tuple(a.session, run_order[a.run]) < std::tuple(b.session, run_order[b.run]);
    });
    summary.truncated_cells = sink.finish(run_order);
    summary.records_written = sink.size();
    summary.runs_aborted = summary.aborted.size();
    return summary;
}

}  // namespace behave
