#include "kforge/log.hpp"

#include "kforge/error.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace kforge {

using json = nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void check_invariants(const OptimizationLog& log) {
    if (log.records.empty()) {
        throw ConfigError("optimization log has no records");
    }
    if (log.records.front().round != 0 || !log.records.front().correctness) {
        throw ConfigError("record 0 must be the correct baseline");
    }
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        if (log.records[i].round != static_cast<int>(i)) {
            throw ConfigError("record rounds must be consecutive from 0");
        }
    }
}

json record_to_json(const RoundRecord& r) {
    json j;
    j["type"] = "record";
    j["round"] = r.round;
    j["code"] = r.code;
    j["correctness"] = r.correctness;
    j["performance"] = r.performance ? perf_to_json(*r.performance) : json(nullptr);
    j["failure_kind"] = std::string(to_string(r.failure_kind));
    j["note"] = r.note;
    return j;
}

RoundRecord record_from_json(const json& j) {
    RoundRecord r;
    r.round = j.at("round").get<int>();
    r.code = j.at("code").get<std::string>();
    r.correctness = j.at("correctness").get<bool>();
    if (!j.at("performance").is_null()) {
        r.performance = perf_from_json(j.at("performance"));
    }
    r.failure_kind = parse_failure_kind(j.at("failure_kind").get<std::string>());
    r.note = j.at("note").get<std::string>();
    return r;
}

json transcript_to_json(const AgentTranscript& t) {
    json j;
    j["type"] = "transcript";
    j["role"] = t.role;
    j["round"] = t.round;
    j["prompt"] = t.prompt;
    j["response"] = t.response;
    j["prompt_tokens"] = t.prompt_tokens;
    j["completion_tokens"] = t.completion_tokens;
    j["latency_ms"] = t.latency_ms;
    j["retries"] = t.retries;
    return j;
}

AgentTranscript transcript_from_json(const json& j) {
    AgentTranscript t;
    t.role = j.at("role").get<std::string>();
    t.round = j.at("round").get<int>();
    t.prompt = j.at("prompt").get<std::string>();
    t.response = j.at("response").get<std::string>();
    t.prompt_tokens = j.at("prompt_tokens").get<int>();
    t.completion_tokens = j.at("completion_tokens").get<int>();
    t.latency_ms = j.at("latency_ms").get<double>();
    t.retries = j.at("retries").get<int>();
    return t;
}

} // namespace

json perf_to_json(const PerfReport& perf) {
    json shapes = json::array();
    for (const auto& s : perf.shapes) {
        shapes.push_back({{"label", s.label},
                          {"baseline_us", s.baseline_us},
                          {"candidate_us", s.candidate_us},
                          {"speedup", s.speedup},
                          {"baseline_samples", s.baseline_samples},
                          {"candidate_samples", s.candidate_samples}});
    }
    return {{"shapes", shapes}, {"geo_mean", perf.geo_mean}};
}

PerfReport perf_from_json(const json& j) {
    PerfReport p;
    p.geo_mean = j.at("geo_mean").get<double>();
    for (const auto& sj : j.at("shapes")) {
        ShapePerf s;
        s.label = sj.at("label").get<std::string>();
        s.baseline_us = sj.at("baseline_us").get<double>();
        s.candidate_us = sj.at("candidate_us").get<double>();
        s.speedup = sj.at("speedup").get<double>();
        s.baseline_samples = sj.at("baseline_samples").get<std::vector<double>>();
        s.candidate_samples = sj.at("candidate_samples").get<std::vector<double>>();
        p.shapes.push_back(std::move(s));
    }
    return p;
}

std::string serialize_log(const OptimizationLog& log) {
    check_invariants(log);
    std::string out;
    auto emit = [&out](const json& j) {
        // Invalid UTF-8 in sources or agent text becomes U+FFFD rather than aborting the save.
        out += j.dump(-1, ' ', false, json::error_handler_t::replace);
        out += '\n';
    };
    emit({{"type", "header"},
          {"version", kFormatVersion},
          {"task", log.task_name},
          {"config", log.config_snapshot}});
    emit({{"type", "metadata"}, {"fields", log.metadata}});
    for (const auto& r : log.records) {
        emit(record_to_json(r));
    }
    for (const auto& t : log.agent_transcripts) {
        emit(transcript_to_json(t));
    }
    if (log.error) {
        emit({{"type", "error"}, {"round", log.error->round}, {"message", log.error->message}});
    }
    return out;
}

OptimizationLog parse_log(std::string_view text) {
    OptimizationLog log;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        const bool terminated = end != std::string_view::npos;
        if (!terminated) {
            end = text.size();
        }
        const auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (!terminated) {
            throw ParseError(line_no, "unterminated line (truncated log?)");
        }

        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
        }

        try {
            const auto type = j.at("type").get<std::string>();
            if (!have_header && type != "header") {
                throw ParseError(line_no, "expected header line");
            }
            if (type == "header") {
                if (have_header) {
                    throw ParseError(line_no, "duplicate header");
                }
                if (j.at("version").get<int>() != kFormatVersion) {
                    throw ParseError(line_no, "unsupported log version");
                }
                log.task_name = j.at("task").get<std::string>();
                log.config_snapshot = j.at("config");
                have_header = true;
            } else if (type == "metadata") {
                log.metadata = j.at("fields").get<std::map<std::string, std::string>>();
            } else if (type == "record") {
                auto r = record_from_json(j);
                if (r.round != static_cast<int>(log.records.size())) {
                    throw ParseError(line_no, "record round " + std::to_string(r.round) +
                                                  " out of sequence");
                }
                log.records.push_back(std::move(r));
            } else if (type == "transcript") {
                log.agent_transcripts.push_back(transcript_from_json(j));
            } else if (type == "error") {
                log.error = LogError{j.at("round").get<int>(), j.at("message").get<std::string>()};
            } else {
                throw ParseError(line_no, "unknown line type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError(line_no, std::string("bad field: ") + e.what());
        } catch (const FormatError& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (!have_header) {
        throw ParseError(line_no == 0 ? 1 : line_no, "log has no header");
    }
    if (log.records.empty() || !log.records.front().correctness) {
        throw ParseError(line_no, "log has no correct round-0 record");
    }
    return log;
}

void save_log(const OptimizationLog& log, std::ostream& out) {
    out << serialize_log(log);
    if (!out) {
        throw ConfigError("failed to write log");
    }
}

OptimizationLog load_log(std::istream& in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_log(ss.str());
}

void save_log_file(const OptimizationLog& log, const std::filesystem::path& path) {
    const auto text = serialize_log(log);
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ConfigError("cannot write log " + tmp.string());
        }
        out << text;
        out.flush();
        if (!out) {
            throw ConfigError("failed writing log " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

OptimizationLog load_log_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open log " + path.string());
    }
    return load_log(in);
}

} // namespace kforge
