#pragma once

#include "kforge/executor.hpp"
#include "kforge/log.hpp"
#include "kforge/metrics.hpp"
#include "kforge/oracles.hpp"
#include "kforge/suite.hpp"
#include "kforge/task.hpp"

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace kforge {

// --- conversation backends ---------------------------------------------------

struct ChatMessage {
    std::string role; // "system" | "user" | "assistant"
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatReply {
    std::string text;
    int prompt_tokens = 0;
    int completion_tokens = 0;
    int retries = 0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// `agent` and `round` identify the request; remote backends ignore them.
    virtual ChatReply complete(std::string_view agent, int round,
                               const std::vector<ChatMessage>& messages) = 0;
    /// Whether latency should be recorded (scripted replies record 0 so logs stay deterministic).
    virtual bool measures_latency() const { return true; }
};

/// Canned responses keyed by (role, round). Several entries for the same key
/// are consumed in order; once they run out the last one repeats. A key with
/// no entry at all is a ScriptingError.
class ScriptedBackend : public ChatBackend {
public:
    void add(std::string role, int round, std::string response);
    bool has(std::string_view role, int round) const;

    ChatReply complete(std::string_view agent, int round,
                       const std::vector<ChatMessage>& messages) override;
    bool measures_latency() const override { return false; }

private:
    struct Slot {
        std::vector<std::string> responses;
        std::size_t next = 0;
    };
    std::map<std::pair<std::string, int>, Slot, std::less<>> slots_;
};

/// Transcript file: "=== <role> <round>" headers, each followed by the
/// verbatim response text. A body line "!include <path>" is replaced by that
/// file's contents (path relative to the transcript). Lines before the first
/// header and a trailing newline before the next header are not part of a body.
ScriptedBackend load_script(const std::filesystem::path& path);
ScriptedBackend parse_script(std::string_view text, const std::filesystem::path& base_dir);

struct RetryPolicy {
    int attempts = 3;
    /// Wait before retry k (1-based) is backoff[min(k, size) - 1].
    std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(4),
                                                   std::chrono::seconds(16)};
};

struct LlmConfig {
    std::string endpoint; // full URL of the chat-completions resource
    std::string model;
    std::string credential_env = "KERNELFORGE_API_KEY";
    double temperature = 1.0;
    int max_tokens = 8192;
    std::chrono::milliseconds request_timeout{std::chrono::seconds(120)};
    RetryPolicy retry;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Minimal POST transport; throws BackendError on connection failure or timeout.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body, std::chrono::milliseconds timeout) = 0;
};

std::unique_ptr<HttpTransport> make_https_transport();

/// Remote chat-completion client (messages in, choices out). The credential
/// is read from the configured environment variable at construction; a
/// missing credential is a ConfigError before any request is made.
class LlmBackend : public ChatBackend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    LlmBackend(LlmConfig cfg, std::unique_ptr<HttpTransport> transport = make_https_transport(),
               Sleeper sleep = {});

    ChatReply complete(std::string_view agent, int round,
                       const std::vector<ChatMessage>& messages) override;

    /// The request body sent for `messages` (exposed for inspection in tests).
    std::string request_body(const std::vector<ChatMessage>& messages) const;

private:
    LlmConfig cfg_;
    std::string credential_;
    std::unique_ptr<HttpTransport> transport_;
    Sleeper sleep_;
};

// --- prompts -------------------------------------------------------------------

/// Prompt templates, one file per role ("<role>.txt"), with {{name}} placeholders.
class PromptLibrary {
public:
    static PromptLibrary load(const std::filesystem::path& dir);
    /// The templates shipped with the source tree.
    static PromptLibrary builtin();

    void set(std::string role, std::string text) { templates_[std::move(role)] = std::move(text); }
    /// Throws ConfigError for an unknown role or a placeholder missing from `vars`.
    std::string render(std::string_view role, const std::map<std::string, std::string>& vars) const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

std::filesystem::path default_prompt_dir();

// --- agent session -------------------------------------------------------------

enum class AgentMode { multi, single };

std::string_view to_string(AgentMode m);
AgentMode parse_agent_mode(std::string_view name);

/// Conversation state for the four roles. Multi-agent mode keeps one context
/// per role; single-agent mode threads every role through one shared context.
/// Every exchange is recorded exactly once in transcripts().
class AgentSession {
public:
    AgentSession(ChatBackend& backend, AgentMode mode, PromptLibrary prompts = PromptLibrary::builtin());

    std::string chat(std::string_view role, int round, std::string prompt);

    AgentMode mode() const { return mode_; }
    const PromptLibrary& prompts() const { return prompts_; }
    const std::vector<AgentTranscript>& transcripts() const { return transcripts_; }
    /// Messages currently held for `role` (the shared context in single-agent mode).
    const std::vector<ChatMessage>& context(std::string_view role) const;

    /// Older exchanges beyond this many are dropped from each context (the
    /// system message is always kept).
    std::size_t max_exchanges = 6;

private:
    std::vector<ChatMessage>& context_for(std::string_view role);

    ChatBackend& backend_;
    AgentMode mode_;
    PromptLibrary prompts_;
    std::map<std::string, std::vector<ChatMessage>, std::less<>> contexts_;
    std::vector<AgentTranscript> transcripts_;
};

// --- testing agent ---------------------------------------------------------------

struct TestingOptions {
    std::vector<std::uint64_t> default_seeds{0};
    /// Largest element count any single tensor of a proposed shape may have.
    std::int64_t element_budget = std::int64_t{1} << 24;
    double epsilon = -1.0; // < 0: default for the task's output dtype
    DiscrepancyMetric metric;
};

struct ShapeProposal {
    std::vector<ShapeFamily> families;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> notes; // dropped or adjusted entries, human-readable
};

/// Parses "shape [a, b, ...]" and "seeds n n ..." lines, validating each
/// shape against the task's symbols and shrinking the leading extent of
/// shapes whose largest tensor exceeds `element_budget`.
ShapeProposal parse_shape_proposal(std::string_view text, const KernelTask& task,
                                   std::int64_t element_budget);

struct GeneratedSuite {
    TestSuite suite;
    std::string note; // how the shapes were chosen, for the log
    bool fallback = false;
};

GeneratedSuite testing_generate_tests(const Candidate& baseline, const KernelTask& task,
                                      AgentSession& session, const TestingOptions& options = {});

struct Validation {
    bool passed = false;
    CorrectnessReport report;
};

Validation testing_validate(const Candidate& candidate, const TestSuite& suite,
                            const KernelTask& task, Executor& executor,
                            const TimingProtocol& protocol);

// --- profiling agent -------------------------------------------------------------

PerfReport profiling_profile(const Candidate& candidate, const Candidate& baseline,
                             const TestSuite& suite, const KernelTask& task, Executor& executor,
                             const TimingProtocol& protocol);

/// Per-shape timing table rendered through the profiling template.
std::string render_profile(const PromptLibrary& prompts, const PerfReport& perf);

// --- planning agent --------------------------------------------------------------

inline constexpr std::string_view kStrategyTags[] = {
    "loop-invariant-hoisting", "warp-shuffle-reduction", "vectorized-load",
    "fast-math-intrinsics", "other"};

struct SuggestionItem {
    std::string strategy_tag;
    std::string rationale;
    std::string region;

    friend bool operator==(const SuggestionItem&, const SuggestionItem&) = default;
};

struct Suggestion {
    std::vector<SuggestionItem> items;
    std::string raw_text;
};

/// Lines of the form "[tag] rationale @ region" (leading bullets allowed,
/// region optional). Unknown tags map to "other". With no parseable line the
/// result is one {other, raw text} item.
Suggestion parse_suggestion(std::string_view text);

struct PlanningInput {
    const Candidate& prev;
    bool pass_prev = true;
    const PerfReport* perf_prev = nullptr; // absent when the candidate never ran
    const CorrectnessReport* report_prev = nullptr;
    const OptimizationLog& history;
    int round = 1;
};

/// Prompt the planner would receive for `in` (exposed so tests can inspect it).
std::string planning_prompt(const PromptLibrary& prompts, const KernelTask& task,
                            const PlanningInput& in);

/// Throws PlanningError when the backend fails after its retries.
Suggestion planning_suggest(const KernelTask& task, const PlanningInput& in, AgentSession& session);

// --- coding agent ----------------------------------------------------------------

struct CodeExtraction {
    std::optional<std::string> code;
    std::size_t blocks = 0;
    std::size_t chosen = 0; // index of the chosen block
};

/// Largest fenced block wins; ties go to the earliest.
CodeExtraction extract_code(std::string_view response);

std::string coding_prompt(const PromptLibrary& prompts, const KernelTask& task, const Candidate& prev,
                          const Suggestion& suggestion);

/// Asks for a rewrite of `prev` applying `suggestion`, re-asking up to
/// `attempts` times when no code block comes back. Throws CodingError when
/// attempts are exhausted or the backend fails after its retries.
Candidate coding_apply(const KernelTask& task, const Candidate& prev, const Suggestion& suggestion,
                       AgentSession& session, int round, int attempts = 3);

} // namespace kforge
