#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace kforge {

struct ProcessResult {
    int exit_code = -1;   // valid when !signaled && !timed_out
    int signal = 0;       // terminating signal, if any
    bool timed_out = false;
    std::string output;   // interleaved stdout + stderr, capped

    bool succeeded() const { return !timed_out && signal == 0 && exit_code == 0; }
    std::string describe() const;
};

/// Runs argv[0] (PATH lookup) in `cwd` with stdout and stderr captured. On
/// timeout the whole process group is killed. Throws ExecutorError if the
/// process cannot be started at all.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout,
                          std::size_t output_cap = 1 << 20);

/// Shell-style rendering for diagnostics.
std::string join_command(const std::vector<std::string>& argv);

} // namespace kforge
