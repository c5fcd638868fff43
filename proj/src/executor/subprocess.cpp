#include "kforge/executor.hpp"
#include "kforge/process.hpp"

#include <fstream>
#include <sstream>

namespace kforge {

namespace {

// Timed runs on the device are exclusive; compiles are not.
std::mutex& device_lease() {
    static std::mutex mu;
    return mu;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
        s.replace(pos, from.size(), to);
    }
}

std::vector<std::string> compile_argv(const Toolchain& tc, const std::filesystem::path& out,
                                      const std::filesystem::path& source) {
    std::vector<std::string> argv;
    std::istringstream in(tc.compile_template);
    for (std::string tok; in >> tok;) {
        if (tok == "{flags}") {
            argv.insert(argv.end(), tc.flags.begin(), tc.flags.end());
            continue;
        }
        if (tok == "{arch_flag}") {
            if (!tc.arch.empty()) {
                argv.push_back("-arch=" + tc.arch);
            }
            continue;
        }
        replace_all(tok, "{compiler}", tc.compiler);
        replace_all(tok, "{arch}", tc.arch);
        replace_all(tok, "{out}", out.string());
        replace_all(tok, "{harness}", tc.harness_source.string());
        replace_all(tok, "{source}", source.string());
        argv.push_back(std::move(tok));
    }
    return argv;
}

RunOutcome failed(RunStatus status, std::string diagnostics) {
    RunOutcome o;
    o.status = status;
    o.diagnostics = std::move(diagnostics);
    return o;
}

std::string transcript(const std::vector<std::string>& argv, const ProcessResult& r) {
    return "$ " + join_command(argv) + "\n" + r.output + (r.output.empty() || r.output.back() == '\n' ? "" : "\n") +
           "[" + r.describe() + "]\n";
}

} // namespace

SubprocessExecutor::SubprocessExecutor(ExecBackendConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
}

RunOutcome SubprocessExecutor::execute_suite(const Candidate& candidate, const TestSuite& suite,
                                             const KernelTask& task, const TimingProtocol& protocol) {
    protocol.validate();
    validate_suite(suite);
    const auto digest = hash_source(candidate.source);
    const auto dir = std::filesystem::absolute(cfg_.work_dir) / digest.substr(0, 16);
    std::filesystem::create_directories(dir);

    const auto source = dir / "candidate.cu";
    {
        std::ofstream out(source, std::ios::binary | std::ios::trunc);
        out << candidate.source;
        if (!out) {
            throw ExecutorError("cannot write " + source.string());
        }
    }
    const auto binary = dir / "candidate.bin";
    std::filesystem::remove(binary);

    std::string diag;
    const auto cc = compile_argv(cfg_.toolchain, binary, source);
    const auto compiled = run_process(cc, dir, cfg_.compile_timeout);
    diag += transcript(cc, compiled);
    if (compiled.timed_out) {
        return failed(RunStatus::timeout, diag + "compile timed out\n");
    }
    if (!compiled.succeeded() || !std::filesystem::exists(binary)) {
        return failed(RunStatus::compile_error, diag);
    }

    RunOutcome out;
    const auto labels = suite.shape_labels();
    for (std::size_t s = 0; s < labels.size(); ++s) {
        const auto& label = labels[s];
        const auto shape_dir = dir / ("shape" + std::to_string(s));
        std::filesystem::remove_all(shape_dir);
        std::filesystem::create_directories(shape_dir);

        const auto manifest = make_harness_manifest(task, suite, label, protocol, shape_dir);
        const auto cases = suite.cases_for(label);
        for (std::size_t k = 0; k < cases.size(); ++k) {
            for (const auto& [name, t] : cases[k]->inputs) {
                write_tensor_file(t, shape_dir / ("case" + std::to_string(k) + "_" + name + ".kft"));
            }
        }
        const auto manifest_path = shape_dir / "manifest.json";
        {
            std::ofstream mf(manifest_path, std::ios::trunc);
            mf << manifest.dump(2) << "\n";
        }

        const std::vector<std::string> run{binary.string(), manifest_path.string()};
        ProcessResult ran;
        {
            std::lock_guard lease(device_lease());
            ran = run_process(run, shape_dir, cfg_.run_timeout);
        }
        diag += transcript(run, ran);
        if (ran.timed_out) {
            return failed(RunStatus::timeout, diag);
        }
        if (!ran.succeeded()) {
            return failed(RunStatus::runtime_error, diag);
        }

        for (std::size_t k = 0; k < cases.size(); ++k) {
            TensorMap produced;
            for (const auto& p : task.params_with(ParamRole::output)) {
                const auto file = shape_dir / ("case" + std::to_string(k) + "_" + p->name + ".kft");
                try {
                    auto t = read_tensor_file(file);
                    const auto& want = cases[k]->expected.at(p->name);
                    if (t.dtype() != want.dtype() || t.shape() != want.shape()) {
                        return failed(RunStatus::runtime_error,
                                      diag + "output " + file.string() + " has shape " +
                                          format_shape(t.shape()) + " " + std::string(to_string(t.dtype())) +
                                          ", expected " + format_shape(want.shape()) + " " +
                                          std::string(to_string(want.dtype())) + "\n");
                    }
                    produced.emplace(p->name, std::move(t));
                } catch (const Error& e) {
                    return failed(RunStatus::runtime_error,
                                  diag + "missing or malformed output " + file.string() + ": " + e.what() + "\n");
                }
            }
            out.outputs.emplace(cases[k]->case_id, std::move(produced));
        }

        try {
            const auto timing = parse_timing_file(read_text_file(shape_dir / "timing.txt"));
            if (timing.shape_label != label || timing.timed_runs != protocol.timed_runs ||
                timing.warmup_runs != protocol.warmup_runs) {
                return failed(RunStatus::runtime_error,
                              diag + "timing file does not match the requested protocol for " + label + "\n");
            }
            out.timings.push_back({label, timing.samples_us});
        } catch (const Error& e) {
            return failed(RunStatus::runtime_error, diag + "bad timing file: " + e.what() + "\n");
        }
        std::filesystem::remove_all(shape_dir);
    }
    out.status = RunStatus::ok;
    out.diagnostics = std::move(diag);
    return out;
}

} // namespace kforge
