#pragma once

#include "kforge/agents.hpp"
#include "kforge/executor.hpp"
#include "kforge/log.hpp"

#include <json.hpp>

#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kforge {

// --- run configuration -----------------------------------------------------------

enum class AgentBackendKind { scripted, llm };

std::string_view to_string(AgentBackendKind k);
AgentBackendKind parse_agent_backend_kind(std::string_view name);

struct AgentBackendConfig {
    AgentBackendKind kind = AgentBackendKind::scripted;
    std::filesystem::path script;     // scripted transcript
    std::filesystem::path prompt_dir; // empty: the templates shipped with the source tree
    LlmConfig llm;
};

struct RunConfig {
    int rounds = 5;
    AgentMode mode = AgentMode::multi;
    ExecBackendConfig exec;
    /// Files `exec.simulated_registry` was loaded from (kept for the log's config snapshot).
    std::vector<std::filesystem::path> sim_registries;
    AgentBackendConfig agents;
    TimingProtocol protocol;
    double epsilon = -1.0; // < 0: default for the task's output dtype
    DiscrepancyMetric metric;
    std::vector<std::uint64_t> seeds{0};
    std::int64_t element_budget = std::int64_t{1} << 24;
    int coding_attempts = 3;
    std::filesystem::path log_path;     // empty: the log is not written
    std::filesystem::path summary_path; // empty: no summary file

    /// Throws ConfigError (rounds < 1, empty seeds, bad protocol, ...).
    void validate() const;
};

/// JSON config file; relative paths resolve against `base_dir`. Keys:
/// rounds, mode, seeds, epsilon, metric, rel_floor, element_budget,
/// coding_attempts, timing{warmup_runs, timed_runs},
/// executor{backend, registries[], work_dir, compile_timeout_s, run_timeout_s,
///          toolchain{compiler, flags[], arch, harness, template}},
/// agents{backend, script, prompts, llm{endpoint, model, credential_env,
///        temperature, max_tokens, timeout_s, retries}},
/// output{log, summary}.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Everything that shapes the run's results. Output paths and credentials are
/// left out, so identical runs written to different places compare equal.
nlohmann::json config_snapshot(const RunConfig& cfg);

std::unique_ptr<ChatBackend> make_chat_backend(const AgentBackendConfig& cfg);

// --- optimization loop -----------------------------------------------------------

struct RunResult {
    OptimizationLog log;
    /// Set when the run stopped early; the log then carries an error marker.
    std::exception_ptr error;

    bool completed() const { return !error; }
};

/// The round loop: build the suite and profile the baseline, then R rounds of
/// plan -> rewrite -> validate -> profile. The log is written to
/// cfg.log_path after every round. Planning and coding failures are recorded
/// as failed rounds and the previous candidate carries forward; scripting,
/// configuration, backend and executor errors end the run.
RunResult run_optimization(const KernelTask& task, const RunConfig& cfg, ChatBackend& backend,
                           Executor& executor);

/// As run_optimization with backends built from `cfg`; rethrows the error
/// that stopped the run (after the partial log has been written).
OptimizationLog optimize(const KernelTask& task, const RunConfig& cfg);
OptimizationLog optimize(const KernelTask& task, const RunConfig& cfg, ChatBackend& backend,
                         Executor& executor);

/// The correct record with the highest geo-mean speedup, earliest on ties.
/// Throws AggregationError when no record is correct.
const RoundRecord& select_best(const OptimizationLog& log);

// --- summaries -------------------------------------------------------------------

/// Non-blank source lines.
std::size_t count_loc(std::string_view source);

struct RunSummary {
    std::string task_name;
    std::vector<RoundRecord> records;
    std::optional<RoundRecord> best;
    std::size_t loc_base = 0;
    std::size_t loc_best = 0;
    double loc_delta_pct = 0.0;
    double time_base_us = 0.0; // mean over shapes
    double time_best_us = 0.0;
    double speedup = 1.0;
    bool correct = false;
    std::optional<LogError> error;
};

RunSummary summarize(const OptimizationLog& log);

enum class ReportFormat { text, md, csv };

ReportFormat parse_report_format(std::string_view name);

/// Per-round and per-shape tables for every log, then one overview row per
/// kernel and an Average row (arithmetic for sizes and times, geometric for
/// speedups). CSV has one row per (log, round, shape).
std::string render_report(const std::vector<OptimizationLog>& logs, ReportFormat format);

} // namespace kforge
