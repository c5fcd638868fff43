#include "kforge/executor.hpp"

#include "kforge/oracles.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace kforge {

using json = nlohmann::json;

void TimingProtocol::validate() const {
    if (warmup_runs < 0) {
        throw ConfigError("warmup_runs must be >= 0");
    }
    if (timed_runs < 1) {
        throw ConfigError("timed_runs must be >= 1");
    }
}

std::string hash_source(std::string_view source) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(source.data(), source.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw ExecutorError("SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

std::string_view to_string(SimBehavior b) {
    switch (b) {
    case SimBehavior::oracle: return "oracle";
    case SimBehavior::perturb: return "perturb";
    case SimBehavior::nan: return "nan";
    case SimBehavior::crash: return "crash";
    case SimBehavior::hang: return "hang";
    }
    return "?";
}

SimBehavior parse_sim_behavior(std::string_view name) {
    for (auto b : {SimBehavior::oracle, SimBehavior::perturb, SimBehavior::nan, SimBehavior::crash,
                   SimBehavior::hang}) {
        if (to_string(b) == name) {
            return b;
        }
    }
    throw ConfigError("unknown simulated behavior '" + std::string(name) + "'");
}

void SimRegistry::add(std::string digest, SimEntry entry) {
    entries_.insert_or_assign(std::move(digest), std::move(entry));
}

void SimRegistry::merge(const SimRegistry& other) {
    for (const auto& [digest, entry] : other.entries_) {
        entries_.insert_or_assign(digest, entry);
    }
}

const SimEntry* SimRegistry::find(std::string_view digest) const {
    const auto it = entries_.find(digest);
    return it == entries_.end() ? nullptr : &it->second;
}

namespace {

SimEntry entry_from_json(const json& j) {
    SimEntry e;
    e.name = j.value("name", "");
    e.behavior = parse_sim_behavior(j.value("behavior", "oracle"));
    if (e.behavior == SimBehavior::perturb) {
        const auto& p = j.at("perturb");
        e.perturb_output = p.at("output").get<std::string>();
        e.perturb_index = p.value("index", std::size_t{0});
        e.perturb_eps_multiple = p.at("eps_multiple").get<double>();
    }
    if (j.contains("latency_us")) {
        const auto& lat = j.at("latency_us");
        if (lat.is_number()) {
            e.latency_us["default"] = lat.get<double>();
        } else {
            e.latency_us = lat.get<std::map<std::string, double>>();
        }
    }
    for (const auto& [label, us] : e.latency_us) {
        if (!(us > 0.0) || !std::isfinite(us)) {
            throw ConfigError("latency for '" + label + "' must be positive");
        }
    }
    e.noise_pct = j.value("noise_pct", 0.0);
    if (e.noise_pct < 0.0 || e.noise_pct >= 100.0) {
        throw ConfigError("noise_pct must be in [0, 100)");
    }
    e.noise_seed = j.value("seed", std::uint64_t{0});
    return e;
}

} // namespace

SimRegistry load_sim_registry(const std::filesystem::path& path) {
    SimRegistry reg;
    try {
        const auto j = json::parse(read_text_file(path));
        for (const auto& ej : j.at("entries")) {
            std::string digest;
            if (ej.contains("source")) {
                digest = hash_source(read_text_file(path.parent_path() / ej.at("source").get<std::string>()));
            } else {
                digest = ej.at("digest").get<std::string>();
            }
            reg.add(std::move(digest), entry_from_json(ej));
        }
    } catch (const json::exception& e) {
        throw ConfigError("simulated registry " + path.string() + ": " + e.what());
    }
    return reg;
}

SimRegistry load_sim_registries(const std::vector<std::filesystem::path>& paths) {
    SimRegistry merged;
    for (const auto& p : paths) {
        merged.merge(load_sim_registry(p));
    }
    return merged;
}

std::string_view to_string(BackendKind k) {
    return k == BackendKind::simulated ? "simulated" : "subprocess";
}

BackendKind parse_backend_kind(std::string_view name) {
    if (name == "simulated" || name == "sim") {
        return BackendKind::simulated;
    }
    if (name == "subprocess" || name == "gpu") {
        return BackendKind::subprocess;
    }
    throw ConfigError("unknown executor backend '" + std::string(name) + "'");
}

void ExecBackendConfig::validate() const {
    if (compile_timeout.count() <= 0 || run_timeout.count() <= 0) {
        throw ConfigError("executor timeouts must be positive");
    }
    if (kind == BackendKind::subprocess) {
        if (toolchain.compiler.empty()) {
            throw ConfigError("subprocess executor needs a compiler");
        }
        if (toolchain.harness_source.empty()) {
            throw ConfigError("subprocess executor needs a host harness source");
        }
        if (work_dir.empty()) {
            throw ConfigError("subprocess executor needs a work_dir");
        }
    }
}

std::string_view to_string(RunStatus s) {
    switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::compile_error: return "compile_error";
    case RunStatus::runtime_error: return "runtime_error";
    case RunStatus::timeout: return "timeout";
    }
    return "?";
}

FailureKind RunOutcome::failure_kind() const {
    switch (status) {
    case RunStatus::ok: return FailureKind::none;
    case RunStatus::compile_error: return FailureKind::compile;
    case RunStatus::runtime_error:
    case RunStatus::timeout: return FailureKind::runtime;
    }
    return FailureKind::runtime;
}

// --- simulated ---------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

RunOutcome failed(RunStatus status, std::string diagnostics) {
    RunOutcome o;
    o.status = status;
    o.diagnostics = std::move(diagnostics);
    return o;
}

} // namespace

RunOutcome SimulatedExecutor::execute_suite(const Candidate& candidate, const TestSuite& suite,
                                            const KernelTask& task, const TimingProtocol& protocol) {
    protocol.validate();
    validate_suite(suite);
    const auto digest = hash_source(candidate.source);
    const SimEntry* entry = registry_.find(digest);
    if (entry == nullptr) {
        return failed(RunStatus::compile_error,
                      "simulated compile: no registered behavior for source digest " + digest);
    }
    const std::string who = "simulated '" + (entry->name.empty() ? digest.substr(0, 12) : entry->name) + "': ";
    if (entry->behavior == SimBehavior::crash) {
        return failed(RunStatus::runtime_error, who + "kernel crashed (illegal memory access)");
    }
    if (entry->behavior == SimBehavior::hang) {
        return failed(RunStatus::timeout, who + "kernel exceeded the run timeout");
    }

    RunOutcome out;
    out.status = RunStatus::ok;
    const auto& oracles = OracleRegistry::builtin();
    for (const auto& tc : suite.cases) {
        auto produced = oracles.evaluate(task, tc.inputs, tc.scalars);
        if (entry->behavior == SimBehavior::perturb) {
            const auto it = produced.find(entry->perturb_output);
            if (it == produced.end() || entry->perturb_index >= it->second.size()) {
                return failed(RunStatus::runtime_error,
                              who + "perturbation target out of range: " + entry->perturb_output);
            }
            auto& t = it->second;
            const auto delta = static_cast<float>(entry->perturb_eps_multiple * suite.epsilon);
            t.set(entry->perturb_index, t.get(entry->perturb_index) + delta);
        } else if (entry->behavior == SimBehavior::nan) {
            for (auto& [name, t] : produced) {
                for (std::size_t i = 0; i < t.size(); ++i) {
                    t.set(i, std::numeric_limits<float>::quiet_NaN());
                }
            }
        }
        out.outputs.emplace(tc.case_id, std::move(produced));
    }

    for (const auto& label : suite.shape_labels()) {
        auto lat = entry->latency_us.find(label);
        if (lat == entry->latency_us.end()) {
            lat = entry->latency_us.find("default");
        }
        if (lat == entry->latency_us.end()) {
            return failed(RunStatus::runtime_error, who + "no declared latency for shape " + label);
        }
        std::mt19937_64 rng(entry->noise_seed ^ fnv1a(label));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        auto draw = [&] {
            return entry->noise_pct == 0.0 ? lat->second
                                           : lat->second * (1.0 + u(rng) * entry->noise_pct / 100.0);
        };
        for (int w = 0; w < protocol.warmup_runs; ++w) {
            draw(); // discarded, as on a device
        }
        ShapeSamples s{label, {}};
        s.samples_us.reserve(static_cast<std::size_t>(protocol.timed_runs));
        for (int r = 0; r < protocol.timed_runs; ++r) {
            s.samples_us.push_back(draw());
        }
        out.timings.push_back(std::move(s));
    }
    out.diagnostics = who + "behavior " + std::string(to_string(entry->behavior));
    return out;
}

// --- caching -----------------------------------------------------------------

RunOutcome CachingExecutor::execute_suite(const Candidate& candidate, const TestSuite& suite,
                                          const KernelTask& task, const TimingProtocol& protocol) {
    std::string key = hash_source(candidate.source) + "|" + task.name + "|" +
                      std::to_string(protocol.warmup_runs) + "/" + std::to_string(protocol.timed_runs) +
                      "|" + std::to_string(suite.epsilon);
    for (const auto& tc : suite.cases) {
        key += "|" + tc.case_id;
    }
    {
        std::lock_guard lock(mu_);
        if (const auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
    }
    auto outcome = inner_->execute_suite(candidate, suite, task, protocol);
    std::lock_guard lock(mu_);
    ++executions_;
    cache_.emplace(key, outcome);
    return outcome;
}

std::unique_ptr<Executor> make_executor(const ExecBackendConfig& cfg) {
    cfg.validate();
    if (cfg.kind == BackendKind::simulated) {
        return std::make_unique<SimulatedExecutor>(cfg.simulated_registry);
    }
    return std::make_unique<SubprocessExecutor>(cfg);
}

RunOutcome execute_suite(const Candidate& candidate, const TestSuite& suite, const KernelTask& task,
                         const ExecBackendConfig& cfg, const TimingProtocol& protocol) {
    return make_executor(cfg)->execute_suite(candidate, suite, task, protocol);
}

PerfReport profile_pair(const Candidate& baseline, const Candidate& candidate,
                        const TestSuite& suite, const KernelTask& task, Executor& executor,
                        const TimingProtocol& protocol) {
    auto base = executor.execute_suite(baseline, suite, task, protocol);
    if (!base.ok()) {
        throw ProfilingError("baseline failed to run: " + std::string(to_string(base.status)),
                             std::move(base));
    }
    auto cand = executor.execute_suite(candidate, suite, task, protocol);
    if (!cand.ok()) {
        throw ProfilingError("candidate failed to run: " + std::string(to_string(cand.status)),
                             std::move(cand));
    }
    return make_perf_report(base.timings, cand.timings);
}

// --- host harness interface ----------------------------------------------------

TimingFile parse_timing_file(std::string_view text) {
    TimingFile t;
    bool have_label = false, have_warmup = false, have_timed = false;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        const auto where = "timing file line " + std::to_string(line_no) + ": ";
        if (line.front() == '#') {
            line.remove_prefix(1);
            const auto colon = line.find(':');
            if (colon == std::string_view::npos) {
                continue; // free comment
            }
            auto trim = [](std::string_view s) {
                while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
                while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
                return s;
            };
            const auto key = trim(line.substr(0, colon));
            const auto value = trim(line.substr(colon + 1));
            auto as_int = [&](std::string_view v) {
                int n = 0;
                const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
                if (ec != std::errc() || p != v.data() + v.size()) {
                    throw FormatError(where + "bad integer '" + std::string(v) + "'");
                }
                return n;
            };
            if (key == "shape_label") {
                t.shape_label = std::string(value);
                have_label = true;
            } else if (key == "warmup_runs") {
                t.warmup_runs = as_int(value);
                have_warmup = true;
            } else if (key == "timed_runs") {
                t.timed_runs = as_int(value);
                have_timed = true;
            }
            continue;
        }
        double v = 0.0;
        const auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc() || p != line.data() + line.size()) {
            throw FormatError(where + "bad sample '" + std::string(line) + "'");
        }
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw FormatError(where + "sample must be positive and finite");
        }
        t.samples_us.push_back(v);
    }
    if (!have_label || !have_warmup || !have_timed) {
        throw FormatError("timing file missing shape_label/warmup_runs/timed_runs header");
    }
    if (t.timed_runs < 1 || static_cast<std::size_t>(t.timed_runs) != t.samples_us.size()) {
        throw FormatError("timing file declares " + std::to_string(t.timed_runs) + " runs but has " +
                          std::to_string(t.samples_us.size()) + " samples");
    }
    return t;
}

std::string format_timing_file(const TimingFile& t) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << "# shape_label: " << t.shape_label << "\n";
    os << "# warmup_runs: " << t.warmup_runs << "\n";
    os << "# timed_runs: " << t.timed_runs << "\n";
    for (double s : t.samples_us) {
        os << s << "\n";
    }
    return os.str();
}

namespace {

std::string role_name(ParamRole r) {
    switch (r) {
    case ParamRole::input: return "input";
    case ParamRole::output: return "output";
    case ParamRole::scalar: return "scalar";
    }
    return "?";
}

} // namespace

json make_harness_manifest(const KernelTask& task, const TestSuite& suite,
                           std::string_view shape_label, const TimingProtocol& protocol,
                           const std::filesystem::path& dir) {
    const auto cases = suite.cases_for(shape_label);
    if (cases.empty()) {
        throw ConfigError("no cases for shape " + std::string(shape_label));
    }
    json jcases = json::array();
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const auto& tc = *cases[k];
        json params = json::array();
        for (const auto& p : task.signature) {
            json jp{{"name", p.name}, {"role", role_name(p.role)}, {"dtype", std::string(to_string(p.dtype))}};
            const auto file = (dir / ("case" + std::to_string(k) + "_" + p.name + ".kft")).string();
            if (p.role == ParamRole::scalar) {
                jp["value"] = tc.scalars.at(p.name);
            } else if (p.role == ParamRole::input) {
                jp["file"] = file;
                jp["shape"] = tc.inputs.at(p.name).shape();
            } else {
                jp["file"] = file;
                jp["shape"] = tc.expected.at(p.name).shape();
            }
            params.push_back(std::move(jp));
        }
        jcases.push_back({{"case_id", tc.case_id}, {"params", std::move(params)}});
    }
    return {{"version", 1},
            {"task", task.name},
            {"oracle", task.oracle_id},
            {"entry", task.entry},
            {"shape_label", std::string(shape_label)},
            {"warmup_runs", protocol.warmup_runs},
            {"timed_runs", protocol.timed_runs},
            {"timed_case", 0},
            {"launch", "kernel-declared"},
            {"timing_file", (dir / "timing.txt").string()},
            {"cases", std::move(jcases)}};
}

} // namespace kforge
