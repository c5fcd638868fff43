#pragma once

#include "kforge/error.hpp"
#include "kforge/log.hpp"
#include "kforge/metrics.hpp"
#include "kforge/suite.hpp"
#include "kforge/task.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace kforge {

struct TimingProtocol {
    int warmup_runs = 20;
    int timed_runs = 100;

    /// Throws ConfigError unless warmup_runs >= 0 and timed_runs >= 1.
    void validate() const;

    friend bool operator==(const TimingProtocol&, const TimingProtocol&) = default;
};

/// Lowercase hex SHA-256 of the exact source bytes.
std::string hash_source(std::string_view source);

// --- simulated backend -------------------------------------------------------

enum class SimBehavior { oracle, perturb, nan, crash, hang };

std::string_view to_string(SimBehavior b);
SimBehavior parse_sim_behavior(std::string_view name);

struct SimEntry {
    std::string name;
    SimBehavior behavior = SimBehavior::oracle;
    /// perturb: add eps_multiple * suite.epsilon to element `index` of `output` in every case.
    std::string perturb_output;
    std::size_t perturb_index = 0;
    double perturb_eps_multiple = 0.0;
    /// Declared mean latency per shape label; "default" applies to unlisted labels.
    std::map<std::string, double> latency_us;
    /// Uniform +-noise_pct percent per repetition, from a generator seeded by noise_seed.
    double noise_pct = 0.0;
    std::uint64_t noise_seed = 0;
};

class SimRegistry {
public:
    void add(std::string digest, SimEntry entry);
    void add_source(std::string_view source, SimEntry entry) { add(hash_source(source), std::move(entry)); }
    /// Entries of `other` replace ours on equal digests.
    void merge(const SimRegistry& other);
    const SimEntry* find(std::string_view digest) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, SimEntry, std::less<>> entries_;
};

/// Registry file: {"entries": [{"source": <path relative to the file> | "digest": <hex>,
/// "name", "behavior", "perturb": {"output", "index", "eps_multiple"},
/// "latency_us": {label: us, "default": us}, "noise_pct", "seed"}]}.
SimRegistry load_sim_registry(const std::filesystem::path& path);
/// Merges several registry files; later files win on duplicate digests.
SimRegistry load_sim_registries(const std::vector<std::filesystem::path>& paths);

// --- backend configuration ---------------------------------------------------

enum class BackendKind { simulated, subprocess };

std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view name);

struct Toolchain {
    std::string compiler;
    std::vector<std::string> flags;
    std::string arch;
    /// Host harness compiled together with every candidate.
    std::filesystem::path harness_source;
    /// Whitespace-separated argv template; {flags} expands to every flag.
    std::string compile_template = "{compiler} {flags} {arch_flag} -o {out} {harness} {source}";
};

struct ExecBackendConfig {
    BackendKind kind = BackendKind::simulated;
    Toolchain toolchain;
    std::filesystem::path work_dir;
    std::chrono::milliseconds compile_timeout{std::chrono::minutes(5)};
    std::chrono::milliseconds run_timeout{std::chrono::minutes(2)};
    SimRegistry simulated_registry;

    /// Throws ConfigError when the configuration is inconsistent with its kind.
    void validate() const;
};

// --- outcomes ----------------------------------------------------------------

enum class RunStatus { ok, compile_error, runtime_error, timeout };

std::string_view to_string(RunStatus s);

struct RunOutcome {
    RunStatus status = RunStatus::runtime_error;
    CaseOutputs outputs;              // every case when ok
    std::vector<ShapeSamples> timings; // every shape label when ok, suite order
    std::string diagnostics;

    bool ok() const { return status == RunStatus::ok; }
    /// The failure kind a correctness report should carry for a non-ok outcome.
    FailureKind failure_kind() const;

    friend bool operator==(const RunOutcome&, const RunOutcome&) = default;
};

class ProfilingError : public MeasurementError {
public:
    ProfilingError(const std::string& what, RunOutcome outcome)
        : MeasurementError(what), outcome_(std::move(outcome)) {}
    const RunOutcome& outcome() const { return outcome_; }

private:
    RunOutcome outcome_;
};

// --- executors ---------------------------------------------------------------

class Executor {
public:
    virtual ~Executor() = default;
    /// Runs every case for correctness outputs (untimed), then the timing
    /// protocol once per shape label.
    virtual RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite,
                                     const KernelTask& task, const TimingProtocol& protocol) = 0;
};

class SimulatedExecutor : public Executor {
public:
    explicit SimulatedExecutor(SimRegistry registry) : registry_(std::move(registry)) {}
    RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite,
                             const KernelTask& task, const TimingProtocol& protocol) override;

private:
    SimRegistry registry_;
};

class SubprocessExecutor : public Executor {
public:
    explicit SubprocessExecutor(ExecBackendConfig cfg);
    RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite,
                             const KernelTask& task, const TimingProtocol& protocol) override;

private:
    ExecBackendConfig cfg_;
};

/// Memoizes outcomes by (source digest, suite identity, protocol) so a
/// candidate validated and then profiled in the same round runs once, and the
/// baseline is measured once per run.
class CachingExecutor : public Executor {
public:
    explicit CachingExecutor(std::unique_ptr<Executor> inner) : inner_(std::move(inner)) {}
    RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite,
                             const KernelTask& task, const TimingProtocol& protocol) override;
    std::size_t executions() const { return executions_; }

private:
    std::unique_ptr<Executor> inner_;
    std::mutex mu_;
    std::map<std::string, RunOutcome> cache_;
    std::size_t executions_ = 0;
};

std::unique_ptr<Executor> make_executor(const ExecBackendConfig& cfg);

/// One-shot convenience over make_executor.
RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite, const KernelTask& task,
                         const ExecBackendConfig& cfg, const TimingProtocol& protocol);

/// Runs baseline then candidate back-to-back under the same protocol and
/// derives per-shape speedups. Throws ProfilingError on any non-ok outcome.
PerfReport profile_pair(const Candidate& baseline, const Candidate& candidate,
                        const TestSuite& suite, const KernelTask& task, Executor& executor,
                        const TimingProtocol& protocol);

// --- host harness interface ---------------------------------------------------

/// Timing file written by the host harness: "# key: value" header lines
/// (shape_label, warmup_runs, timed_runs), then one microsecond value per line.
struct TimingFile {
    std::string shape_label;
    int warmup_runs = 0;
    int timed_runs = 0;
    std::vector<double> samples_us;
};

/// Throws FormatError on malformed headers, non-positive or non-finite
/// samples, or a sample count differing from timed_runs.
TimingFile parse_timing_file(std::string_view text);
std::string format_timing_file(const TimingFile& t);

/// Manifest handed to the host harness for one shape family. Parameter
/// bindings follow the task signature order exactly.
nlohmann::json make_harness_manifest(const KernelTask& task, const TestSuite& suite,
                                     std::string_view shape_label,
                                     const TimingProtocol& protocol,
                                     const std::filesystem::path& dir);

} // namespace kforge
