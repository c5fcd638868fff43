#include "kforge/process.hpp"

#include "kforge/error.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace kforge {

std::string ProcessResult::describe() const {
    if (timed_out) {
        return "timed out";
    }
    if (signal != 0) {
        return std::string("killed by signal ") + std::to_string(signal) + " (" + strsignal(signal) + ")";
    }
    return "exit code " + std::to_string(exit_code);
}

std::string join_command(const std::vector<std::string>& argv) {
    std::string out;
    for (const auto& a : argv) {
        if (!out.empty()) {
            out += ' ';
        }
        const bool plain = !a.empty() && a.find_first_of(" \t\n'\"\\$`") == std::string::npos;
        if (plain) {
            out += a;
        } else {
            out += '\'';
            for (char c : a) {
                if (c == '\'') {
                    out += "'\\''";
                } else {
                    out += c;
                }
            }
            out += '\'';
        }
    }
    return out;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                          std::chrono::milliseconds timeout, std::size_t output_cap) {
    if (argv.empty()) {
        throw ExecutorError("empty command");
    }
    int pipefd[2];
    if (pipe2(pipefd, O_CLOEXEC) != 0) {
        throw ExecutorError(std::string("pipe: ") + std::strerror(errno));
    }
    // Separate channel so exec failure is reported, not mistaken for exit 127.
    int errpipe[2];
    if (pipe2(errpipe, O_CLOEXEC) != 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        throw ExecutorError(std::string("pipe: ") + std::strerror(errno));
    }

    std::vector<char*> cargv;
    for (const auto& a : argv) {
        cargv.push_back(const_cast<char*>(a.c_str()));
    }
    cargv.push_back(nullptr);
    const std::string dir = cwd.empty() ? std::string(".") : cwd.string();

    const pid_t pid = fork();
    if (pid < 0) {
        throw ExecutorError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        const int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) {
            dup2(devnull, STDIN_FILENO);
        }
        if (chdir(dir.c_str()) == 0) {
            execvp(cargv[0], cargv.data());
        }
        const int err = errno;
        [[maybe_unused]] auto n = write(errpipe[1], &err, sizeof err);
        _exit(127);
    }
    setpgid(pid, pid);
    close(pipefd[1]);
    close(errpipe[1]);

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buf[8192];
    bool open_pipe = true;
    while (open_pipe) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            result.timed_out = true;
            break;
        }
        pollfd p{pipefd[0], POLLIN, 0};
        const int rc = poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (rc < 0) {
            if (errno == EINTR) {
                continue;
            }
            break;
        }
        if (rc == 0) {
            continue;
        }
        const ssize_t n = read(pipefd[0], buf, sizeof buf);
        if (n <= 0) {
            open_pipe = false;
        } else if (result.output.size() < output_cap) {
            result.output.append(buf, static_cast<std::size_t>(std::min<ssize_t>(
                                          n, static_cast<ssize_t>(output_cap - result.output.size()))));
        }
    }

    int status = 0;
    if (result.timed_out) {
        kill(-pid, SIGKILL);
        waitpid(pid, &status, 0);
    } else {
        // Output closed; the child may still be exiting (or a grandchild holds no pipe).
        for (;;) {
            const pid_t w = waitpid(pid, &status, WNOHANG);
            if (w == pid) {
                break;
            }
            if (std::chrono::steady_clock::now() >= deadline) {
                result.timed_out = true;
                kill(-pid, SIGKILL);
                waitpid(pid, &status, 0);
                break;
            }
            usleep(1000);
        }
    }
    // Reap nothing else, but make sure stragglers in the group do not outlive us.
    kill(-pid, SIGKILL);
    close(pipefd[0]);

    int exec_errno = 0;
    const ssize_t got = read(errpipe[0], &exec_errno, sizeof exec_errno);
    close(errpipe[0]);
    if (got == static_cast<ssize_t>(sizeof exec_errno)) {
        throw ExecutorError("cannot execute '" + argv[0] + "': " + std::strerror(exec_errno));
    }

    if (!result.timed_out) {
        if (WIFEXITED(status)) {
            result.exit_code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            result.signal = WTERMSIG(status);
        }
    }
    return result;
}

} // namespace kforge
