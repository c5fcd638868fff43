#pragma once

#include "kforge/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kforge {

struct Candidate {
    int round = 0;
    std::string source;
    std::string provenance;
};

struct RoundRecord {
    int round = 0;
    std::string code;
    bool correctness = false;
    std::optional<PerfReport> performance; // absent when the candidate never ran
    FailureKind failure_kind = FailureKind::none;
    std::string note;

    double geo_mean_or(double fallback) const {
        return performance ? performance->geo_mean : fallback;
    }

    friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct AgentTranscript {
    std::string role;
    int round = 0;
    std::string prompt;
    std::string response;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    double latency_ms = 0.0;
    int retries = 0;

    friend bool operator==(const AgentTranscript&, const AgentTranscript&) = default;
};

struct LogError {
    int round = 0;
    std::string message;

    friend bool operator==(const LogError&, const LogError&) = default;
};

struct OptimizationLog {
    std::string task_name;
    std::vector<RoundRecord> records;
    nlohmann::json config_snapshot = nlohmann::json::object();
    std::vector<AgentTranscript> agent_transcripts;
    /// Wall-clock fields only; excluded from determinism comparisons.
    std::map<std::string, std::string> metadata;
    std::optional<LogError> error;

    friend bool operator==(const OptimizationLog&, const OptimizationLog&) = default;
};

/// Line-delimited JSON: header, metadata, one line per record, one per
/// transcript, then an optional error marker. Throws ConfigError when the log
/// breaks its invariants (no records, non-consecutive rounds, record 0 failing).
std::string serialize_log(const OptimizationLog& log);
/// Throws ParseError naming the first malformed line.
OptimizationLog parse_log(std::string_view text);

void save_log(const OptimizationLog& log, std::ostream& out);
OptimizationLog load_log(std::istream& in);

/// Atomic write-then-rename.
void save_log_file(const OptimizationLog& log, const std::filesystem::path& path);
OptimizationLog load_log_file(const std::filesystem::path& path);

nlohmann::json perf_to_json(const PerfReport& perf);
PerfReport perf_from_json(const nlohmann::json& j);

} // namespace kforge
