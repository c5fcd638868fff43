#include "kforge/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

namespace kforge {

using json = nlohmann::json;

namespace {

std::string now_utc() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) {
        return {};
    }
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::chrono::milliseconds seconds_ms(double s) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(s * 1000.0)));
}

std::string first_line(const std::string& s, std::size_t cap = 200) {
    auto line = s.substr(0, s.find('\n'));
    if (line.size() > cap) {
        line.resize(cap);
    }
    return line;
}

// Forwards to an executor owned elsewhere so it can sit behind a CachingExecutor.
class BorrowedExecutor : public Executor {
public:
    explicit BorrowedExecutor(Executor& inner) : inner_(inner) {}
    RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite, const KernelTask& task,
                             const TimingProtocol& protocol) override {
        return inner_.execute_suite(candidate, suite, task, protocol);
    }

private:
    Executor& inner_;
};

} // namespace

// --- configuration ---------------------------------------------------------------

std::string_view to_string(AgentBackendKind k) { return k == AgentBackendKind::scripted ? "scripted" : "llm"; }

AgentBackendKind parse_agent_backend_kind(std::string_view name) {
    if (name == "scripted") {
        return AgentBackendKind::scripted;
    }
    if (name == "llm") {
        return AgentBackendKind::llm;
    }
    throw ConfigError("unknown agent backend '" + std::string(name) + "'");
}

void RunConfig::validate() const {
    if (rounds < 1) {
        throw ConfigError("rounds must be >= 1 (got " + std::to_string(rounds) + ")");
    }
    if (seeds.empty()) {
        throw ConfigError("at least one seed is required");
    }
    if (element_budget < 1) {
        throw ConfigError("element_budget must be >= 1");
    }
    if (coding_attempts < 1) {
        throw ConfigError("coding_attempts must be >= 1");
    }
    if (metric.rel_floor <= 0) {
        throw ConfigError("rel_floor must be > 0");
    }
    if (std::isnan(epsilon)) {
        throw ConfigError("epsilon must be a number");
    }
    protocol.validate();
    exec.validate();
    if (agents.kind == AgentBackendKind::scripted && agents.script.empty()) {
        throw ConfigError("scripted agents need a transcript (--script)");
    }
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    try {
        cfg.rounds = j.value("rounds", cfg.rounds);
        cfg.mode = parse_agent_mode(j.value("mode", std::string("multi")));
        if (j.contains("seeds")) {
            cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        }
        if (j.contains("epsilon") && !j.at("epsilon").is_null()) {
            cfg.epsilon = j.at("epsilon").get<double>();
            if (cfg.epsilon < 0) {
                throw ConfigError("epsilon must be >= 0");
            }
        }
        cfg.metric.kind = parse_metric(j.value("metric", std::string("max-abs")));
        cfg.metric.rel_floor = j.value("rel_floor", cfg.metric.rel_floor);
        cfg.element_budget = j.value("element_budget", cfg.element_budget);
        cfg.coding_attempts = j.value("coding_attempts", cfg.coding_attempts);

        if (j.contains("timing")) {
            const auto& t = j.at("timing");
            cfg.protocol.warmup_runs = t.value("warmup_runs", cfg.protocol.warmup_runs);
            cfg.protocol.timed_runs = t.value("timed_runs", cfg.protocol.timed_runs);
        }

        if (j.contains("executor")) {
            const auto& e = j.at("executor");
            cfg.exec.kind = parse_backend_kind(e.value("backend", std::string("sim")));
            for (const auto& r : e.value("registries", std::vector<std::string>{})) {
                cfg.sim_registries.push_back(resolve(base_dir, r));
            }
            cfg.exec.work_dir = resolve(base_dir, e.value("work_dir", std::string()));
            if (e.contains("compile_timeout_s")) {
                cfg.exec.compile_timeout = seconds_ms(e.at("compile_timeout_s").get<double>());
            }
            if (e.contains("run_timeout_s")) {
                cfg.exec.run_timeout = seconds_ms(e.at("run_timeout_s").get<double>());
            }
            if (e.contains("toolchain")) {
                const auto& tc = e.at("toolchain");
                cfg.exec.toolchain.compiler = tc.value("compiler", std::string());
                cfg.exec.toolchain.flags = tc.value("flags", std::vector<std::string>{});
                cfg.exec.toolchain.arch = tc.value("arch", std::string());
                cfg.exec.toolchain.harness_source = resolve(base_dir, tc.value("harness", std::string()));
                cfg.exec.toolchain.compile_template =
                    tc.value("template", cfg.exec.toolchain.compile_template);
            }
            cfg.exec.simulated_registry = load_sim_registries(cfg.sim_registries);
        }

        if (j.contains("agents")) {
            const auto& a = j.at("agents");
            cfg.agents.kind = parse_agent_backend_kind(a.value("backend", std::string("scripted")));
            cfg.agents.script = resolve(base_dir, a.value("script", std::string()));
            cfg.agents.prompt_dir = resolve(base_dir, a.value("prompts", std::string()));
            if (a.contains("llm")) {
                const auto& l = a.at("llm");
                auto& llm = cfg.agents.llm;
                llm.endpoint = l.value("endpoint", llm.endpoint);
                llm.model = l.value("model", llm.model);
                llm.credential_env = l.value("credential_env", llm.credential_env);
                llm.temperature = l.value("temperature", llm.temperature);
                llm.max_tokens = l.value("max_tokens", llm.max_tokens);
                if (l.contains("timeout_s")) {
                    llm.request_timeout = seconds_ms(l.at("timeout_s").get<double>());
                }
                llm.retry.attempts = l.value("retries", llm.retry.attempts);
            }
        }

        if (j.contains("output")) {
            const auto& o = j.at("output");
            cfg.log_path = resolve(base_dir, o.value("log", std::string()));
            cfg.summary_path = resolve(base_dir, o.value("summary", std::string()));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("run config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

json config_snapshot(const RunConfig& cfg) {
    json regs = json::array();
    for (const auto& r : cfg.sim_registries) {
        regs.push_back(r.lexically_normal().generic_string());
    }
    json j{{"rounds", cfg.rounds},
           {"mode", std::string(to_string(cfg.mode))},
           {"seeds", cfg.seeds},
           {"epsilon", cfg.epsilon < 0 ? json(nullptr) : json(cfg.epsilon)},
           {"metric", std::string(to_string(cfg.metric.kind))},
           {"rel_floor", cfg.metric.rel_floor},
           {"element_budget", cfg.element_budget},
           {"coding_attempts", cfg.coding_attempts},
           {"timing", {{"warmup_runs", cfg.protocol.warmup_runs}, {"timed_runs", cfg.protocol.timed_runs}}},
           {"executor",
            {{"backend", std::string(to_string(cfg.exec.kind))},
             {"registries", regs},
             {"compiler", cfg.exec.toolchain.compiler},
             {"flags", cfg.exec.toolchain.flags},
             {"arch", cfg.exec.toolchain.arch}}},
           {"agents", {{"backend", std::string(to_string(cfg.agents.kind))}}}};
    if (cfg.agents.kind == AgentBackendKind::scripted) {
        j["agents"]["script"] = cfg.agents.script.lexically_normal().generic_string();
    } else {
        j["agents"]["model"] = cfg.agents.llm.model;
        j["agents"]["endpoint"] = cfg.agents.llm.endpoint;
        j["agents"]["temperature"] = cfg.agents.llm.temperature;
        j["agents"]["credential_env"] = cfg.agents.llm.credential_env;
    }
    return j;
}

std::unique_ptr<ChatBackend> make_chat_backend(const AgentBackendConfig& cfg) {
    if (cfg.kind == AgentBackendKind::scripted) {
        if (!std::filesystem::exists(cfg.script)) {
            throw ConfigError("transcript not found: " + cfg.script.string());
        }
        return std::make_unique<ScriptedBackend>(load_script(cfg.script));
    }
    return std::make_unique<LlmBackend>(cfg.llm);
}

// --- optimization loop -----------------------------------------------------------

RunResult run_optimization(const KernelTask& task, const RunConfig& cfg, ChatBackend& backend,
                           Executor& executor) {
    RunResult result;
    auto& log = result.log;
    log.task_name = task.name;
    log.config_snapshot = config_snapshot(cfg);
    log.metadata["started_at"] = now_utc();

    CachingExecutor exec(std::make_unique<BorrowedExecutor>(executor));
    std::optional<AgentSession> session;

    auto flush = [&] {
        if (session) {
            log.agent_transcripts = session->transcripts();
        }
        if (!cfg.log_path.empty()) {
            save_log_file(log, cfg.log_path);
        }
    };

    int round = 0;
    try {
        cfg.validate();
        validate_task(task);
        session.emplace(backend, cfg.mode,
                        cfg.agents.prompt_dir.empty() ? PromptLibrary::builtin()
                                                      : PromptLibrary::load(cfg.agents.prompt_dir));

        // initialization: suite from the baseline, then the baseline profile
        const Candidate baseline{0, task.baseline_source, "baseline"};
        TestingOptions topt;
        topt.default_seeds = cfg.seeds;
        topt.element_budget = cfg.element_budget;
        topt.epsilon = cfg.epsilon;
        topt.metric = cfg.metric;
        const auto generated = testing_generate_tests(baseline, task, *session, topt);
        const auto& suite = generated.suite;

        const auto base_check = testing_validate(baseline, suite, task, exec, cfg.protocol);
        if (!base_check.passed) {
            throw ExecutorError("baseline fails its own test suite (" +
                                std::string(to_string(base_check.report.failure_kind)) + "): " +
                                (base_check.report.detail.empty()
                                     ? "max discrepancy " + std::to_string(base_check.report.max_discrepancy) +
                                           " on " + base_check.report.worst_case
                                     : first_line(base_check.report.detail, 2000)));
        }
        const auto perf0 = profiling_profile(baseline, baseline, suite, task, exec, cfg.protocol);

        RoundRecord r0;
        r0.round = 0;
        r0.code = baseline.source;
        r0.correctness = true;
        r0.performance = perf0;
        r0.note = generated.note;
        log.records.push_back(r0);
        flush();

        Candidate prev = baseline;
        bool pass_prev = true;
        std::optional<PerfReport> perf_prev = perf0;
        CorrectnessReport report_prev = base_check.report;

        for (round = 1; round <= cfg.rounds; ++round) {
            RoundRecord rec;
            rec.round = round;
            try {
                const PlanningInput in{prev, pass_prev, perf_prev ? &*perf_prev : nullptr, &report_prev, log, round};
                const auto suggestion = planning_suggest(task, in, *session);
                const auto cand = coding_apply(task, prev, suggestion, *session, round, cfg.coding_attempts);

                const auto v = testing_validate(cand, suite, task, exec, cfg.protocol);
                std::optional<PerfReport> perf;
                if (v.report.failure_kind == FailureKind::none || v.report.failure_kind == FailureKind::mismatch) {
                    try {
                        perf = profiling_profile(cand, baseline, suite, task, exec, cfg.protocol);
                    } catch (const ProfilingError&) {
                        perf.reset();
                    }
                }
                rec.code = cand.source;
                rec.correctness = v.passed;
                rec.performance = perf;
                rec.failure_kind = v.report.failure_kind;
                rec.note = cand.provenance;
                if (!v.passed) {
                    const auto why = v.report.failure_kind == FailureKind::mismatch
                                         ? "max discrepancy " + std::to_string(v.report.max_discrepancy) +
                                               " on " + v.report.worst_case
                                         : first_line(v.report.detail);
                    rec.note += (rec.note.empty() ? "" : "; ") + why;
                }
                log.records.push_back(rec);

                prev = cand;
                pass_prev = v.passed;
                perf_prev = perf;
                report_prev = v.report;
            } catch (const PlanningError& e) {
                rec.code = prev.source;
                rec.note = std::string("planning failed: ") + e.what();
                log.records.push_back(rec);
            } catch (const CodingError& e) {
                rec.code = prev.source;
                rec.note = std::string("coding failed: ") + e.what();
                log.records.push_back(rec);
            }
            flush();
        }
        round = cfg.rounds;
    } catch (const std::exception& e) {
        log.error = LogError{round, e.what()};
        result.error = std::current_exception();
    }

    log.metadata["finished_at"] = now_utc();
    try {
        flush();
        if (!cfg.summary_path.empty()) {
            std::ofstream out(cfg.summary_path, std::ios::binary | std::ios::trunc);
            out << render_report({log}, ReportFormat::text);
            if (!out) {
                throw ConfigError("cannot write summary " + cfg.summary_path.string());
            }
        }
    } catch (...) {
        if (!result.error) {
            result.error = std::current_exception();
        }
    }
    return result;
}

OptimizationLog optimize(const KernelTask& task, const RunConfig& cfg, ChatBackend& backend, Executor& executor) {
    auto result = run_optimization(task, cfg, backend, executor);
    if (result.error) {
        std::rethrow_exception(result.error);
    }
    return std::move(result.log);
}

OptimizationLog optimize(const KernelTask& task, const RunConfig& cfg) {
    cfg.validate();
    auto backend = make_chat_backend(cfg.agents);
    auto executor = make_executor(cfg.exec);
    return optimize(task, cfg, *backend, *executor);
}

const RoundRecord& select_best(const OptimizationLog& log) {
    const RoundRecord* best = nullptr;
    for (const auto& r : log.records) {
        if (!r.correctness || !r.performance) {
            continue;
        }
        if (!best || r.performance->geo_mean > best->performance->geo_mean) {
            best = &r;
        }
    }
    if (!best) {
        throw AggregationError("log for '" + log.task_name + "' has no correct record");
    }
    return *best;
}

} // namespace kforge
