#include "kforge/cli.hpp"

#include "kforge/orchestrator.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <ostream>

namespace kforge {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Flags shared by evaluate and bench.
struct EvalFlags {
    std::string task;
    std::string config;
    std::string baseline;
    std::string candidate;
    std::vector<std::string> shapes;
    std::vector<std::uint64_t> seeds;
    std::optional<double> epsilon;
    std::string metric;
    std::string backend;
    std::vector<std::string> registries;
    std::optional<int> warmup;
    std::optional<int> timed;
    bool unsafe_skip_correctness = false;
};

struct OptimizeFlags {
    std::string task;
    std::string config;
    std::optional<int> rounds;
    std::string backend;
    std::vector<std::string> registries;
    std::string agents;
    std::string script;
    std::string mode;
    std::string prompts;
    std::string endpoint;
    std::string model;
    std::string credential_env;
    std::optional<std::uint64_t> seed;
    std::optional<double> epsilon;
    std::string metric;
    std::optional<int> warmup;
    std::optional<int> timed;
    std::string log;
    std::string summary;
};

void add_exec_flags(CLI::App* cmd, EvalFlags& f) {
    cmd->add_option("--task", f.task, "task manifest (JSON)")->required();
    cmd->add_option("--config", f.config, "run config supplying executor settings");
    cmd->add_option("--baseline", f.baseline, "baseline source (default: the task's)");
    cmd->add_option("--shape", f.shapes, "shape family label or extents like \"[16, 4096]\" (repeatable)");
    cmd->add_option("--seed", f.seeds, "input seed (repeatable)");
    cmd->add_option("--backend", f.backend, "executor backend: sim | gpu");
    cmd->add_option("--registry", f.registries, "simulated-latency registry file (repeatable)");
    cmd->add_option("--warmup", f.warmup, "untimed launches per shape");
    cmd->add_option("--timed", f.timed, "timed launches per shape");
}

RunConfig base_config(const std::string& path) {
    if (path.empty()) {
        return {};
    }
    return load_run_config(path);
}

void apply_exec_overrides(RunConfig& cfg, const std::string& backend, const std::vector<std::string>& registries,
                          const std::optional<int>& warmup, const std::optional<int>& timed) {
    if (!backend.empty()) {
        cfg.exec.kind = parse_backend_kind(backend);
    }
    if (!registries.empty()) {
        std::vector<std::filesystem::path> paths(registries.begin(), registries.end());
        cfg.sim_registries.insert(cfg.sim_registries.end(), paths.begin(), paths.end());
        cfg.exec.simulated_registry = load_sim_registries(cfg.sim_registries);
    }
    if (warmup) {
        cfg.protocol.warmup_runs = *warmup;
    }
    if (timed) {
        cfg.protocol.timed_runs = *timed;
    }
}

std::vector<ShapeFamily> select_families(const KernelTask& task, const std::vector<std::string>& shapes) {
    if (shapes.empty()) {
        return task.shape_families;
    }
    std::vector<ShapeFamily> out;
    for (const auto& s : shapes) {
        if (task.has_family(s)) {
            out.push_back(task.family(s));
            continue;
        }
        const auto parsed = parse_shape_proposal("shape " + (s.find('[') == std::string::npos ? "[" + s + "]" : s),
                                                 task, std::numeric_limits<std::int64_t>::max());
        if (parsed.families.size() != 1) {
            throw ConfigError("bad --shape '" + s + "' (need one extent per symbol: " +
                              std::to_string(task.symbols.size()) + ")");
        }
        out.push_back(parsed.families[0]);
    }
    return out;
}

void print_perf(std::ostream& out, const PerfReport& perf) {
    out << "performance:\n";
    for (const auto& s : perf.shapes) {
        out << "  " << s.label << "  baseline " << fixed(s.baseline_us, 2) << " us  candidate "
            << fixed(s.candidate_us, 2) << " us  speedup " << fixed(s.speedup, 3) << "x\n";
    }
    out << "geo-mean speedup: " << fixed(perf.geo_mean, 3) << "x\n";
}

int cmd_evaluate(const EvalFlags& f, bool bench, std::ostream& out, std::ostream& err) {
    if (bench && !f.unsafe_skip_correctness) {
        err << "bench skips the correctness check; pass --unsafe-skip-correctness to confirm\n";
        return kExitConfig;
    }
    const auto task = load_task_manifest(f.task);
    auto cfg = base_config(f.config);
    apply_exec_overrides(cfg, f.backend, f.registries, f.warmup, f.timed);
    if (!f.seeds.empty()) {
        cfg.seeds = f.seeds;
    }
    if (f.epsilon) {
        if (!(*f.epsilon >= 0)) {
            throw ConfigError("--epsilon must be >= 0");
        }
        cfg.epsilon = *f.epsilon;
    }
    if (!f.metric.empty()) {
        cfg.metric.kind = parse_metric(f.metric);
    }
    cfg.protocol.validate();
    cfg.exec.validate();

    const Candidate baseline{0, f.baseline.empty() ? task.baseline_source : read_text_file(f.baseline), "baseline"};
    const Candidate candidate{1, read_text_file(f.candidate), f.candidate};
    const double eps = cfg.epsilon < 0 ? default_epsilon(task.widest_output_dtype()) : cfg.epsilon;
    const auto suite = build_suite(task, select_families(task, f.shapes), cfg.seeds, eps, cfg.metric);
    CachingExecutor exec(make_executor(cfg.exec));

    if (!bench) {
        const auto v = testing_validate(candidate, suite, task, exec, cfg.protocol);
        const auto& r = v.report;
        out << "correctness: " << (v.passed ? "PASS" : "FAIL");
        if (r.failure_kind == FailureKind::none || r.failure_kind == FailureKind::mismatch) {
            out << " (max discrepancy " << general(r.max_discrepancy) << ", epsilon " << general(suite.epsilon)
                << ", metric " << to_string(suite.metric.kind) << ")\n";
            for (const auto& [id, d] : r.per_case) {
                out << "  " << id << "  " << general(d) << (d > suite.epsilon ? "  FAIL" : "") << "\n";
            }
            if (!v.passed) {
                out << "worst case: " << r.worst_case << "\n";
            }
        } else {
            out << " (" << to_string(r.failure_kind) << ")\n" << r.detail << "\n";
            return kExitExecutor;
        }
        if (!v.passed) {
            return kExitIncorrect;
        }
    }
    try {
        print_perf(out, profiling_profile(candidate, baseline, suite, task, exec, cfg.protocol));
    } catch (const ProfilingError& e) {
        err << e.what() << "\n" << e.outcome().diagnostics << "\n";
        return kExitExecutor;
    }
    return kExitOk;
}

int cmd_optimize(const OptimizeFlags& f, std::ostream& out) {
    const auto task = load_task_manifest(f.task);
    auto cfg = base_config(f.config);
    if (f.rounds) {
        cfg.rounds = *f.rounds;
    }
    apply_exec_overrides(cfg, f.backend, f.registries, f.warmup, f.timed);
    if (!f.agents.empty()) {
        cfg.agents.kind = parse_agent_backend_kind(f.agents);
    }
    if (!f.script.empty()) {
        cfg.agents.script = f.script;
    }
    if (!f.mode.empty()) {
        cfg.mode = parse_agent_mode(f.mode);
    }
    if (!f.prompts.empty()) {
        cfg.agents.prompt_dir = f.prompts;
    }
    if (!f.endpoint.empty()) {
        cfg.agents.llm.endpoint = f.endpoint;
    }
    if (!f.model.empty()) {
        cfg.agents.llm.model = f.model;
    }
    if (!f.credential_env.empty()) {
        cfg.agents.llm.credential_env = f.credential_env;
    }
    if (f.seed) {
        cfg.seeds = {*f.seed};
    }
    if (f.epsilon) {
        if (!(*f.epsilon >= 0)) {
            throw ConfigError("--epsilon must be >= 0");
        }
        cfg.epsilon = *f.epsilon;
    }
    if (!f.metric.empty()) {
        cfg.metric.kind = parse_metric(f.metric);
    }
    if (!f.log.empty()) {
        cfg.log_path = f.log;
    }
    if (cfg.log_path.empty()) {
        cfg.log_path = task.name + ".log.jsonl";
    }
    if (!f.summary.empty()) {
        cfg.summary_path = f.summary;
    }
    if (cfg.summary_path.empty()) {
        auto p = cfg.log_path;
        cfg.summary_path = p.replace_extension(".summary.txt");
    }

    const auto log = optimize(task, cfg);
    out << render_report({log}, ReportFormat::text);
    out << "log: " << cfg.log_path.string() << "\n";
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& format, std::ostream& out) {
    const auto fmt = parse_report_format(format);
    std::vector<OptimizationLog> logs;
    for (const auto& p : paths) {
        try {
            logs.push_back(load_log_file(p));
        } catch (const Error& e) {
            throw ConfigError(p + ": " + e.what());
        }
    }
    out << render_report(logs, fmt);
    return kExitOk;
}

} // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const ParseError*>(&e) || dynamic_cast<const SignatureError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const ScriptingError*>(&e) || dynamic_cast<const BackendError*>(&e) ||
        dynamic_cast<const PlanningError*>(&e) || dynamic_cast<const CodingError*>(&e)) {
        return kExitBackend;
    }
    return kExitExecutor;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-agent GPU kernel optimization harness"};
    app.require_subcommand(1);
    app.fallthrough(false);

    OptimizeFlags of;
    auto* opt = app.add_subcommand("optimize", "run the plan/rewrite/validate/profile loop on one task");
    opt->add_option("--task", of.task, "task manifest (JSON)")->required();
    opt->add_option("--config", of.config, "run config (JSON)");
    opt->add_option("--rounds", of.rounds, "optimization rounds R (>= 1)");
    opt->add_option("--backend", of.backend, "executor backend: sim | gpu");
    opt->add_option("--registry", of.registries, "simulated-latency registry file (repeatable)");
    opt->add_option("--agents", of.agents, "agent backend: scripted | llm");
    opt->add_option("--script", of.script, "scripted transcript");
    opt->add_option("--mode", of.mode, "multi | single");
    opt->add_option("--prompts", of.prompts, "prompt template directory");
    opt->add_option("--endpoint", of.endpoint, "chat-completions URL (llm agents)");
    opt->add_option("--model", of.model, "model name (llm agents)");
    opt->add_option("--credential-env", of.credential_env, "environment variable holding the API credential");
    opt->add_option("--seed", of.seed, "input seed");
    opt->add_option("--epsilon", of.epsilon, "correctness tolerance");
    opt->add_option("--metric", of.metric, "max-abs | max-rel-abs");
    opt->add_option("--warmup", of.warmup, "untimed launches per shape");
    opt->add_option("--timed", of.timed, "timed launches per shape");
    opt->add_option("--log", of.log, "log output path");
    opt->add_option("--summary", of.summary, "summary output path");

    EvalFlags ef;
    auto* eval = app.add_subcommand("evaluate", "check one candidate against the oracle and time it");
    add_exec_flags(eval, ef);
    eval->add_option("--candidate", ef.candidate, "candidate source")->required();
    eval->add_option("--epsilon", ef.epsilon, "correctness tolerance");
    eval->add_option("--metric", ef.metric, "max-abs | max-rel-abs");

    EvalFlags bf;
    auto* bench = app.add_subcommand("bench", "time one candidate against the baseline without checking it");
    add_exec_flags(bench, bf);
    bench->add_option("--candidate", bf.candidate, "candidate source")->required();
    bench->add_flag("--unsafe-skip-correctness", bf.unsafe_skip_correctness,
                    "acknowledge that results are not checked");

    std::vector<std::string> logs;
    std::string format = "text";
    auto* report = app.add_subcommand("report", "render tables from one or more logs");
    report->add_option("logs", logs, "log files")->required();
    report->add_option("--format", format, "text | md | csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*opt) {
            return cmd_optimize(of, out);
        }
        if (*eval) {
            return cmd_evaluate(ef, false, out, err);
        }
        if (*bench) {
            return cmd_evaluate(bf, true, out, err);
        }
        return cmd_report(logs, format, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

} // namespace kforge
