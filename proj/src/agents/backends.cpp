#include "kforge/agents.hpp"

#include <json.hpp>

#include <cstdlib>
#include <sstream>
#include <thread>

namespace kforge {

using json = nlohmann::json;

namespace {

int count_words(std::string_view s) {
    int n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
        if (!space && !in_word) {
            ++n;
        }
        in_word = !space;
    }
    return n;
}

} // namespace

// --- scripted ------------------------------------------------------------------

void ScriptedBackend::add(std::string role, int round, std::string response) {
    slots_[{std::move(role), round}].responses.push_back(std::move(response));
}

bool ScriptedBackend::has(std::string_view role, int round) const {
    return slots_.find(std::pair<std::string, int>{std::string(role), round}) != slots_.end();
}

ChatReply ScriptedBackend::complete(std::string_view agent, int round,
                                    const std::vector<ChatMessage>& messages) {
    const auto it = slots_.find(std::pair<std::string, int>{std::string(agent), round});
    if (it == slots_.end()) {
        throw ScriptingError("transcript has no response for role '" + std::string(agent) +
                             "' at round " + std::to_string(round));
    }
    auto& slot = it->second;
    const auto& text = slot.responses[std::min(slot.next, slot.responses.size() - 1)];
    ++slot.next;
    ChatReply reply;
    reply.text = text;
    for (const auto& m : messages) {
        reply.prompt_tokens += count_words(m.content);
    }
    reply.completion_tokens = count_words(text);
    return reply;
}

ScriptedBackend parse_script(std::string_view text, const std::filesystem::path& base_dir) {
    ScriptedBackend backend;
    std::optional<std::pair<std::string, int>> current;
    std::string body;
    auto flush = [&] {
        if (current) {
            while (!body.empty() && body.back() == '\n') {
                body.pop_back();
            }
            backend.add(current->first, current->second, body);
        }
        body.clear();
    };

    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const auto line = text.substr(pos, end - pos);
        ++line_no;
        if (line.rfind("=== ", 0) == 0) {
            flush();
            std::istringstream hdr{std::string(line.substr(4))};
            std::string role;
            int round = -1;
            std::string extra;
            if (!(hdr >> role >> round) || (hdr >> extra) || round < 0) {
                throw ConfigError("transcript line " + std::to_string(line_no) +
                                  ": expected '=== <role> <round>'");
            }
            current = std::pair{role, round};
        } else if (current) {
            if (line.rfind("!include ", 0) == 0) {
                auto rel = std::string(line.substr(9));
                while (!rel.empty() && (rel.back() == ' ' || rel.back() == '\r')) {
                    rel.pop_back();
                }
                body += read_text_file(base_dir / rel);
                if (!body.empty() && body.back() != '\n') {
                    body += '\n';
                }
            } else {
                body += line;
                body += '\n';
            }
        }
        if (end == text.size()) {
            break;
        }
        pos = end + 1;
    }
    flush();
    return backend;
}

ScriptedBackend load_script(const std::filesystem::path& path) {
    return parse_script(read_text_file(path), path.parent_path());
}

// --- remote ------------------------------------------------------------------

LlmBackend::LlmBackend(LlmConfig cfg, std::unique_ptr<HttpTransport> transport, Sleeper sleep)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
    if (cfg_.retry.attempts < 1) {
        throw ConfigError("retry attempts must be >= 1");
    }
    if (cfg_.request_timeout.count() <= 0) {
        throw ConfigError("request timeout must be positive");
    }
    const char* key = std::getenv(cfg_.credential_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw ConfigError("credential environment variable " + cfg_.credential_env + " is not set");
    }
    credential_ = key;
    if (cfg_.endpoint.empty() || cfg_.model.empty()) {
        throw ConfigError("llm backend needs an endpoint and a model");
    }
    if (!sleep_) {
        sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

std::string LlmBackend::request_body(const std::vector<ChatMessage>& messages) const {
    json msgs = json::array();
    for (const auto& m : messages) {
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
    return json{{"model", cfg_.model},
                {"messages", msgs},
                {"temperature", cfg_.temperature},
                {"max_tokens", cfg_.max_tokens}}
        .dump(-1, ' ', false, json::error_handler_t::replace);
}

ChatReply LlmBackend::complete(std::string_view, int, const std::vector<ChatMessage>& messages) {
    const auto body = request_body(messages);
    const std::vector<std::pair<std::string, std::string>> headers{
        {"Authorization", "Bearer " + credential_}, {"Content-Type", "application/json"}};
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.retry.attempts; ++attempt) {
        if (attempt > 1 && !cfg_.retry.backoff.empty()) {
            const auto k = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1), cfg_.retry.backoff.size());
            sleep_(cfg_.retry.backoff[k - 1]);
        }
        HttpResponse res;
        try {
            res = transport_->post(cfg_.endpoint, headers, body, cfg_.request_timeout);
        } catch (const BackendError& e) {
            last_error = e.what();
            continue;
        }
        if (res.status == 429 || res.status >= 500) {
            last_error = "HTTP " + std::to_string(res.status);
            continue;
        }
        if (res.status != 200) {
            throw BackendError("chat endpoint returned HTTP " + std::to_string(res.status) + ": " +
                               res.body.substr(0, 500));
        }
        try {
            const auto j = json::parse(res.body);
            ChatReply reply;
            const auto& content = j.at("choices").at(0).at("message").at("content");
            reply.text = content.is_null() ? std::string() : content.get<std::string>();
            if (j.contains("usage")) {
                reply.prompt_tokens = j["usage"].value("prompt_tokens", 0);
                reply.completion_tokens = j["usage"].value("completion_tokens", 0);
            }
            reply.retries = attempt - 1;
            return reply;
        } catch (const json::exception& e) {
            last_error = std::string("malformed response: ") + e.what();
        }
    }
    throw BackendError("chat request failed after " + std::to_string(cfg_.retry.attempts) +
                       " attempts: " + last_error);
}

} // namespace kforge
