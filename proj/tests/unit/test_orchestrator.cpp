#include "kforge/orchestrator.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>

using namespace kforge;

namespace {

const std::filesystem::path kFixtures = KFORGE_FIXTURES_DIR;

KernelTask small_silu() {
    auto task = builtin_task("silu_and_mul");
    task.baseline_source = "// baseline\n";
    task.shape_families = {{"A", {2, 8}}, {"B", {3, 6}}};
    return task;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("kforge_orch_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string fenced(const std::string& code) { return "```cuda\n" + code + "```\n"; }

SimEntry latency(double us, SimBehavior b = SimBehavior::oracle) {
    SimEntry e;
    e.behavior = b;
    e.latency_us["default"] = us;
    if (b == SimBehavior::perturb) {
        e.perturb_output = "out";
        e.perturb_eps_multiple = 10;
    }
    return e;
}

// A scripted run over `sources` (round r rewrites to sources[r-1]) with the
// given latencies; the baseline runs at 10 us.
struct Scenario {
    KernelTask task = small_silu();
    ScriptedBackend backend;
    SimRegistry registry;
    RunConfig cfg;

    Scenario(const std::vector<std::pair<std::string, SimEntry>>& rounds) {
        registry.add_source(task.baseline_source, latency(10));
        backend.add("testing", 0, "no new shapes");
        for (std::size_t i = 0; i < rounds.size(); ++i) {
            const int r = static_cast<int>(i) + 1;
            backend.add("planning", r, "[other] step " + std::to_string(r) + " @ body");
            backend.add("coding", r, fenced(rounds[i].first));
            if (rounds[i].second.latency_us.count("default")) {
                registry.add_source(rounds[i].first, rounds[i].second);
            }
        }
        cfg.rounds = static_cast<int>(rounds.size());
        cfg.agents.script = "inline";
    }

    RunResult run() {
        SimulatedExecutor exec(registry);
        return run_optimization(task, cfg, backend, exec);
    }
};

RoundRecord rec(int round, bool correct, std::optional<double> geo) {
    RoundRecord r;
    r.round = round;
    r.correctness = correct;
    r.code = "k" + std::to_string(round);
    if (geo) {
        r.performance = PerfReport{{ShapePerf{"A", 10.0, 10.0 / *geo, *geo, {}, {}}}, *geo};
    }
    return r;
}

OptimizationLog log_of(std::vector<RoundRecord> records) {
    OptimizationLog log;
    log.task_name = "t";
    log.records = std::move(records);
    return log;
}

} // namespace

// --- configuration ---------------------------------------------------------------

TEST(RunConfig, DefaultsMatchProtocol) {
    RunConfig cfg;
    EXPECT_EQ(cfg.rounds, 5);
    EXPECT_EQ(cfg.protocol.warmup_runs, 20);
    EXPECT_EQ(cfg.protocol.timed_runs, 100);
    EXPECT_EQ(cfg.agents.llm.credential_env, "KERNELFORGE_API_KEY");
}

TEST(RunConfig, RoundsMustBePositive) {
    RunConfig cfg;
    cfg.agents.script = "x";
    cfg.rounds = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.rounds = 1;
    EXPECT_NO_THROW(cfg.validate());
    cfg.seeds.clear();
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(RunConfig, ParsesFileAndResolvesRelativePaths) {
    const auto cfg = load_run_config(kFixtures / "configs" / "silu_and_mul.json");
    EXPECT_EQ(cfg.rounds, 5);
    EXPECT_EQ(cfg.exec.kind, BackendKind::simulated);
    EXPECT_EQ(cfg.agents.kind, AgentBackendKind::scripted);
    EXPECT_TRUE(std::filesystem::exists(cfg.agents.script));
    ASSERT_EQ(cfg.sim_registries.size(), 1u);
    EXPECT_EQ(cfg.exec.simulated_registry.size(), 5u);
}

TEST(RunConfig, BadValuesAreConfigErrors) {
    EXPECT_THROW(parse_run_config(nlohmann::json{{"mode", "swarm"}}, "."), ConfigError);
    EXPECT_THROW(parse_run_config(nlohmann::json{{"epsilon", -1}}, "."), ConfigError);
    EXPECT_THROW(parse_run_config(nlohmann::json{{"rounds", "five"}}, "."), ConfigError);
    EXPECT_THROW(parse_run_config(nlohmann::json{{"executor", {{"registries", {"/nonexistent.json"}}}}}, "."),
                 ConfigError);
}

TEST(RunConfig, SnapshotOmitsOutputsAndCredentials) {
    RunConfig cfg;
    cfg.log_path = "/tmp/somewhere.jsonl";
    cfg.agents.kind = AgentBackendKind::llm;
    cfg.agents.llm.model = "m";
    const auto dump = config_snapshot(cfg).dump();
    EXPECT_EQ(dump.find("somewhere"), std::string::npos);
    EXPECT_NE(dump.find("KERNELFORGE_API_KEY"), std::string::npos); // the variable name only
    RunConfig other = cfg;
    other.log_path = "/elsewhere.jsonl";
    EXPECT_EQ(config_snapshot(cfg), config_snapshot(other));
}

// --- optimization loop -----------------------------------------------------------

TEST(Optimize, FiveRoundsGiveSixRecords) {
    Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8)}, {"v3\n", latency(7)}, {"v4\n", latency(6)},
                {"v5\n", latency(5)}});
    const auto result = s.run();
    ASSERT_TRUE(result.completed());
    const auto& log = result.log;
    ASSERT_EQ(log.records.size(), 6u);
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        EXPECT_EQ(log.records[i].round, static_cast<int>(i));
        EXPECT_TRUE(log.records[i].correctness);
    }
    const auto& r0 = log.records[0];
    EXPECT_EQ(r0.code, s.task.baseline_source);
    ASSERT_TRUE(r0.performance);
    for (const auto& sh : r0.performance->shapes) {
        EXPECT_EQ(sh.speedup, 1.0);
    }
    EXPECT_NEAR(log.records[5].performance->geo_mean, 2.0, 1e-12);
    EXPECT_FALSE(log.error);
    EXPECT_EQ(log.task_name, "silu_and_mul");
}

TEST(Optimize, FailedCandidateCarriesForwardAndPlannerSeesIt) {
    Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8)}, {"v3 wrong\n", latency(5, SimBehavior::perturb)},
                {"v4\n", latency(7)}});
    const auto log = s.run().log;
    ASSERT_EQ(log.records.size(), 5u);
    EXPECT_FALSE(log.records[3].correctness);
    EXPECT_EQ(log.records[3].failure_kind, FailureKind::mismatch);
    EXPECT_TRUE(log.records[3].performance); // it ran, so it was timed

    const AgentTranscript* plan4 = nullptr;
    const AgentTranscript* code4 = nullptr;
    for (const auto& t : log.agent_transcripts) {
        if (t.round == 4 && t.role == "planning") {
            plan4 = &t;
        }
        if (t.round == 4 && t.role == "coding") {
            code4 = &t;
        }
    }
    ASSERT_TRUE(plan4 && code4);
    EXPECT_NE(plan4->prompt.find("Restore correctness first"), std::string::npos);
    EXPECT_NE(plan4->prompt.find("v3 wrong"), std::string::npos);
    EXPECT_NE(code4->prompt.find("v3 wrong"), std::string::npos); // S_prev is the failed candidate
    EXPECT_EQ(select_best(log).round, 4); // round 3 was fastest but wrong
}

TEST(Optimize, CompileFailureHasNoPerformance) {
    Scenario s({{"does not compile\n", SimEntry{}}});
    const auto log = s.run().log;
    ASSERT_EQ(log.records.size(), 2u);
    EXPECT_FALSE(log.records[1].correctness);
    EXPECT_EQ(log.records[1].failure_kind, FailureKind::compile);
    EXPECT_FALSE(log.records[1].performance);
}

TEST(Optimize, IdentityRewriteIsCorrectAtSpeedupOne) {
    Scenario s({{"// baseline, reformatted\n", latency(10)}});
    const auto log = s.run().log;
    ASSERT_EQ(log.records.size(), 2u);
    EXPECT_TRUE(log.records[1].correctness);
    EXPECT_NE(log.records[1].code, log.records[0].code);
    EXPECT_DOUBLE_EQ(log.records[1].performance->geo_mean, 1.0);
}

namespace {

// Fails planning at one round with a backend error; delegates otherwise.
class FlakyPlanner : public ChatBackend {
public:
    FlakyPlanner(ScriptedBackend& inner, int fail_round) : inner_(inner), fail_round_(fail_round) {}
    ChatReply complete(std::string_view agent, int round, const std::vector<ChatMessage>& m) override {
        if (agent == "planning" && round == fail_round_) {
            throw BackendError("HTTP 503 after 3 attempts");
        }
        return inner_.complete(agent, round, m);
    }
    bool measures_latency() const override { return false; }

private:
    ScriptedBackend& inner_;
    int fail_round_;
};

} // namespace

TEST(Optimize, PlanningFailureRecordsFailedRoundAndKeepsPrevious) {
    Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8)}, {"v3\n", latency(7)}});
    FlakyPlanner flaky(s.backend, 2);
    SimulatedExecutor exec(s.registry);
    const auto result = run_optimization(s.task, s.cfg, flaky, exec);
    ASSERT_TRUE(result.completed());
    const auto& log = result.log;
    ASSERT_EQ(log.records.size(), 4u);
    EXPECT_FALSE(log.records[2].correctness);
    EXPECT_FALSE(log.records[2].performance);
    EXPECT_EQ(log.records[2].code, "v1\n");
    EXPECT_NE(log.records[2].note.find("planning failed"), std::string::npos);
    const auto& last = log.agent_transcripts.back();
    EXPECT_EQ(last.role, "coding");
    EXPECT_NE(last.prompt.find("v1"), std::string::npos);
    EXPECT_TRUE(log.records[3].correctness);
}

TEST(Optimize, CodingWithoutCodeBlockRecordsFailedRound) {
    Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8)}});
    s.backend = ScriptedBackend();
    s.backend.add("testing", 0, "");
    s.backend.add("planning", 1, "[other] a");
    s.backend.add("coding", 1, "I would rather not.");
    s.backend.add("planning", 2, "[other] b");
    s.backend.add("coding", 2, fenced("v2\n"));
    const auto log = s.run().log;
    ASSERT_EQ(log.records.size(), 3u);
    EXPECT_FALSE(log.records[1].correctness);
    EXPECT_NE(log.records[1].note.find("coding failed"), std::string::npos);
    EXPECT_TRUE(log.records[2].correctness);
}

TEST(Optimize, MissingScriptEntryStopsWithErrorMarker) {
    const auto dir = scratch("missing");
    Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8)}, {"v3\n", latency(7)}, {"v4\n", latency(6)}});
    s.backend = ScriptedBackend();
    s.backend.add("testing", 0, "");
    for (int r = 1; r <= 4; ++r) {
        s.backend.add("planning", r, "[other] x");
        if (r != 3) {
            s.backend.add("coding", r, fenced("v" + std::to_string(r) + "\n"));
        }
    }
    s.cfg.log_path = dir / "run.jsonl";
    const auto result = s.run();
    ASSERT_FALSE(result.completed());
    EXPECT_THROW(std::rethrow_exception(result.error), ScriptingError);
    ASSERT_EQ(result.log.records.size(), 3u);
    ASSERT_TRUE(result.log.error);
    EXPECT_EQ(result.log.error->round, 3);

    const auto loaded = load_log_file(s.cfg.log_path);
    EXPECT_EQ(loaded, result.log);
}

TEST(Optimize, BaselineFailingItsSuiteIsExecutorError) {
    Scenario s({{"v1\n", latency(9)}});
    s.registry = SimRegistry();
    s.registry.add_source(s.task.baseline_source, latency(10, SimBehavior::nan));
    const auto result = s.run();
    ASSERT_FALSE(result.completed());
    EXPECT_THROW(std::rethrow_exception(result.error), ExecutorError);
    EXPECT_TRUE(result.log.records.empty());
    EXPECT_EQ(result.log.error->round, 0);
}

namespace {

// Checks, before every planning request, that the log on disk holds every
// round completed so far.
class FlushWatcher : public ChatBackend {
public:
    FlushWatcher(ScriptedBackend& inner, std::filesystem::path path) : inner_(inner), path_(std::move(path)) {}
    ChatReply complete(std::string_view agent, int round, const std::vector<ChatMessage>& m) override {
        if (agent == "planning") {
            seen.push_back(load_log_file(path_).records.size());
        }
        return inner_.complete(agent, round, m);
    }
    bool measures_latency() const override { return false; }
    std::vector<std::size_t> seen;

private:
    ScriptedBackend& inner_;
    std::filesystem::path path_;
};

} // namespace

TEST(Optimize, LogIsFlushedAfterEveryRound) {
    const auto dir = scratch("flush");
    Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8)}, {"v3\n", latency(7)}});
    s.cfg.log_path = dir / "run.jsonl";
    FlushWatcher watcher(s.backend, s.cfg.log_path);
    SimulatedExecutor exec(s.registry);
    ASSERT_TRUE(run_optimization(s.task, s.cfg, watcher, exec).completed());
    EXPECT_EQ(watcher.seen, (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(load_log_file(s.cfg.log_path).records.size(), 4u);
}

TEST(Optimize, RerunIsIdenticalApartFromTimestamps) {
    auto once = [] {
        Scenario s({{"v1\n", latency(9)}, {"v2\n", latency(8, SimBehavior::perturb)}, {"v3\n", latency(7)}});
        s.registry.add_source("v1\n", [] {
            auto e = latency(9);
            e.noise_pct = 5;
            e.noise_seed = 11;
            return e;
        }());
        return s.run().log;
    };
    auto a = once();
    auto b = once();
    a.metadata.clear();
    b.metadata.clear();
    EXPECT_EQ(serialize_log(a), serialize_log(b));
}

TEST(Optimize, SingleAgentModeSharesOneContext) {
    Scenario s({{"v1\n", latency(9)}});
    s.backend = ScriptedBackend();
    s.backend.add("testing", 0, "shape [4, 4]");
    s.backend.add("planning", 1, "[other] x");
    s.backend.add("coding", 1, fenced("v1\n"));
    s.cfg.mode = AgentMode::single;
    const auto log = s.run().log;
    ASSERT_EQ(log.records.size(), 2u);
    EXPECT_EQ(log.records[1].performance->shapes.size(), 1u); // only the agent's shape
    EXPECT_EQ(log.config_snapshot["mode"], "single");
}

// --- selection ---------------------------------------------------------------------

TEST(SelectBest, PicksFastestCorrect) {
    const auto log = log_of({rec(0, true, 1.0), rec(1, true, 1.26), rec(2, true, 0.9)});
    EXPECT_EQ(select_best(log).round, 1);
}

TEST(SelectBest, BaselineFallback) {
    const auto log = log_of({rec(0, true, 1.0), rec(1, false, 1.5), rec(2, false, std::nullopt)});
    EXPECT_EQ(select_best(log).round, 0);
}

TEST(SelectBest, TiesGoToEarliest) {
    const auto log = log_of({rec(0, true, 1.0), rec(1, true, 1.25), rec(2, true, 1.25)});
    EXPECT_EQ(select_best(log).round, 1);
}

TEST(SelectBest, NoCorrectRecordIsAggregationError) {
    EXPECT_THROW(select_best(log_of({rec(0, false, 1.0)})), AggregationError);
    EXPECT_THROW(select_best(log_of({})), AggregationError);
}

TEST(SelectBest, PropertyCorrectAndMaximal) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> speed(0.5, 2.0);
    for (int i = 0; i < 500; ++i) {
        std::vector<RoundRecord> records{rec(0, true, 1.0)};
        const int rounds = 1 + static_cast<int>(rng() % 8);
        for (int r = 1; r <= rounds; ++r) {
            const bool ran = rng() % 5 != 0;
            records.push_back(rec(r, ran && rng() % 2 == 0, ran ? std::optional<double>(speed(rng)) : std::nullopt));
        }
        const auto log = log_of(records);
        const auto& best = select_best(log);
        EXPECT_TRUE(best.correctness);
        for (const auto& r : log.records) {
            if (r.correctness) {
                EXPECT_GE(best.performance->geo_mean, r.performance->geo_mean);
                if (r.performance->geo_mean == best.performance->geo_mean) {
                    EXPECT_LE(best.round, r.round);
                }
            }
        }
    }
}

// --- summaries ---------------------------------------------------------------------

TEST(Summary, CountLocSkipsBlankLines) {
    EXPECT_EQ(count_loc(""), 0u);
    EXPECT_EQ(count_loc("a\n\n  \nb"), 2u);
    EXPECT_EQ(count_loc("a\r\n\t\r\nb\n"), 2u);
}

TEST(Summary, LocDeltaMatchesTableRow) {
    std::string base, opt;
    for (int i = 0; i < 124; ++i) {
        base += "line;\n\n";
    }
    for (int i = 0; i < 232; ++i) {
        opt += "line;\n";
    }
    auto r0 = rec(0, true, 1.0);
    r0.code = base;
    auto r1 = rec(1, true, 1.26);
    r1.code = opt;
    const auto s = summarize(log_of({r0, r1}));
    EXPECT_EQ(s.loc_base, 124u);
    EXPECT_EQ(s.loc_best, 232u);
    EXPECT_EQ(std::lround(s.loc_delta_pct), 87);
    EXPECT_NE(render_report({log_of({r0, r1})}, ReportFormat::text).find("+87%"), std::string::npos);
}

TEST(Summary, OnlyBaselineCorrect) {
    const auto log = log_of({rec(0, true, 1.0), rec(1, false, 2.0)});
    const auto s = summarize(log);
    ASSERT_TRUE(s.best);
    EXPECT_EQ(s.best->round, 0);
    EXPECT_DOUBLE_EQ(s.speedup, 1.0);
    EXPECT_TRUE(s.correct);
    const auto text = render_report({log}, ReportFormat::text);
    EXPECT_NE(text.find("1.00×    ✓"), std::string::npos) << text;
}

TEST(Summary, TablePerShapeSpeedupsForSilu) {
    const auto task = load_task_manifest(kFixtures / "tasks" / "silu_and_mul.json");
    const auto cfg = load_run_config(kFixtures / "configs" / "per_shape_silu_and_mul.json");
    const auto log = optimize(task, cfg);
    const auto s = summarize(log);
    ASSERT_TRUE(s.best);
    EXPECT_EQ(s.best->round, 1);
    const auto& perf = *s.best->performance;
    EXPECT_NEAR(perf.at("[16, 4096]").speedup, 1.47, 0.01);
    EXPECT_NEAR(perf.at("[32, 5120]").speedup, 1.49, 0.01);
    EXPECT_NEAR(perf.at("[64, 8192]").speedup, 1.50, 0.01);
    EXPECT_NEAR(perf.at("[16, 12288]").speedup, 1.50, 0.01);
}

TEST(Report, CsvHasOneRowPerRoundAndShape) {
    const auto log = log_of({rec(0, true, 1.0), rec(1, false, std::nullopt), rec(2, true, 1.2)});
    const auto csv = render_report({log}, ReportFormat::csv);
    std::istringstream in(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "task,round,correct,failure,shape,baseline_us,candidate_us,speedup");
    EXPECT_EQ(lines[2], "t,1,false,none,,,,");
    for (const auto& l : lines) {
        EXPECT_EQ(std::count(l.begin(), l.end(), ','), 7) << l;
    }
}

TEST(Report, AverageRowIsGeometricForSpeedups) {
    std::vector<OptimizationLog> logs;
    for (double g : {31.4 / 24.9, 41.3 / 33.1, 20.1 / 13.8}) {
        logs.push_back(log_of({rec(0, true, 1.0), rec(1, true, g)}));
    }
    const auto text = render_report(logs, ReportFormat::text);
    const auto pos = text.find("\nAverage");
    ASSERT_NE(pos, std::string::npos);
    EXPECT_NE(text.substr(pos).find("1.32×"), std::string::npos) << text;
    const auto md = render_report(logs, ReportFormat::md);
    EXPECT_NE(md.find("| Average |"), std::string::npos);
    EXPECT_THROW(parse_report_format("pdf"), ConfigError);
}

TEST(Report, StoppedRunIsReported) {
    auto log = log_of({rec(0, true, 1.0)});
    log.error = LogError{1, "transcript has no response"};
    const auto text = render_report({log}, ReportFormat::text);
    EXPECT_NE(text.find("Run stopped at round 1"), std::string::npos);
}
