#include "kforge/agents.hpp"

namespace kforge {

namespace {

const char* role_description(std::string_view role, AgentMode mode) {
    if (mode == AgentMode::single) {
        return "You handle every step yourself: choosing test inputs, reading timing results, planning "
               "modifications and rewriting the kernel.";
    }
    if (role == "testing") {
        return "You are the testing agent. You choose the inputs on which every candidate kernel is "
               "checked against the reference implementation and timed.";
    }
    if (role == "profiling") {
        return "You are the profiling agent. You report how fast each candidate runs on every input shape.";
    }
    if (role == "planning") {
        return "You are the planning agent. You read the current kernel, whether it is correct, and its "
               "timings, and propose targeted modifications.";
    }
    if (role == "coding") {
        return "You are the coding agent. You apply the proposed modifications and return a complete, "
               "compilable kernel.";
    }
    return "You are an assistant.";
}

} // namespace

std::filesystem::path default_prompt_dir() { return KFORGE_PROMPT_DIR; }

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
    PromptLibrary lib;
    for (const auto* role : {"system", "testing", "profiling", "planning", "coding"}) {
        const auto path = dir / (std::string(role) + ".txt");
        if (!std::filesystem::exists(path)) {
            throw ConfigError("prompt template missing: " + path.string());
        }
        lib.set(role, read_text_file(path));
    }
    return lib;
}

PromptLibrary PromptLibrary::builtin() {
    static const PromptLibrary lib = load(default_prompt_dir());
    return lib;
}

std::string PromptLibrary::render(std::string_view role,
                                  const std::map<std::string, std::string>& vars) const {
    const auto it = templates_.find(role);
    if (it == templates_.end()) {
        throw ConfigError("no prompt template for role '" + std::string(role) + "'");
    }
    const auto& t = it->second;
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = t.find("{{", pos);
        if (open == std::string::npos) {
            out.append(t, pos, std::string::npos);
            break;
        }
        const auto close = t.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(t, pos, std::string::npos);
            break;
        }
        out.append(t, pos, open - pos);
        const auto name = t.substr(open + 2, close - open - 2);
        const auto v = vars.find(name);
        if (v == vars.end()) {
            throw ConfigError("prompt template '" + std::string(role) + "' needs '" + name + "'");
        }
        out += v->second;
        pos = close + 2;
    }
    return out;
}

std::string_view to_string(AgentMode m) { return m == AgentMode::multi ? "multi" : "single"; }

AgentMode parse_agent_mode(std::string_view name) {
    if (name == "multi" || name == "multi-agent") {
        return AgentMode::multi;
    }
    if (name == "single" || name == "single-agent") {
        return AgentMode::single;
    }
    throw ConfigError("unknown agent mode '" + std::string(name) + "'");
}

AgentSession::AgentSession(ChatBackend& backend, AgentMode mode, PromptLibrary prompts)
    : backend_(backend), mode_(mode), prompts_(std::move(prompts)) {}

std::vector<ChatMessage>& AgentSession::context_for(std::string_view role) {
    const std::string key = mode_ == AgentMode::single ? std::string("shared") : std::string(role);
    auto& ctx = contexts_[key];
    if (ctx.empty()) {
        ctx.push_back({"system", prompts_.render("system", {{"role_description", role_description(role, mode_)}})});
    }
    return ctx;
}

const std::vector<ChatMessage>& AgentSession::context(std::string_view role) const {
    static const std::vector<ChatMessage> empty;
    const auto it = contexts_.find(mode_ == AgentMode::single ? std::string_view("shared") : role);
    return it == contexts_.end() ? empty : it->second;
}

std::string AgentSession::chat(std::string_view role, int round, std::string prompt) {
    auto& ctx = context_for(role);
    while (ctx.size() > 1 + 2 * max_exchanges) {
        ctx.erase(ctx.begin() + 1, ctx.begin() + 3);
    }
    ctx.push_back({"user", prompt});
    const auto start = std::chrono::steady_clock::now();
    ChatReply reply;
    try {
        reply = backend_.complete(role, round, ctx);
    } catch (...) {
        ctx.pop_back();
        throw;
    }
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start);
    ctx.push_back({"assistant", reply.text});

    AgentTranscript t;
    t.role = std::string(role);
    t.round = round;
    t.prompt = std::move(prompt);
    t.response = reply.text;
    t.prompt_tokens = reply.prompt_tokens;
    t.completion_tokens = reply.completion_tokens;
    t.latency_ms = backend_.measures_latency() ? elapsed.count() : 0.0;
    t.retries = reply.retries;
    transcripts_.push_back(std::move(t));
    return reply.text;
}

} // namespace kforge
