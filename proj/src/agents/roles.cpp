#include "kforge/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

namespace kforge {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        if (end == text.size()) {
            break;
        }
        pos = end + 1;
    }
    return lines;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string describe_dims(const ParamSpec& p) {
    std::string s = "[";
    for (std::size_t i = 0; i < p.shape.size(); ++i) {
        if (i) {
            s += ", ";
        }
        s += p.shape[i].is_symbol() ? p.shape[i].symbol : std::to_string(p.shape[i].extent);
    }
    return s + "]";
}

std::string describe_signature(const KernelTask& task) {
    std::string s;
    for (const auto& p : task.signature) {
        s += "  " + p.name + ": " + std::string(to_string(p.role)) + " " + std::string(to_string(p.dtype));
        if (p.role != ParamRole::scalar) {
            s += " " + describe_dims(p);
        }
        s += '\n';
    }
    if (!s.empty()) {
        s.pop_back();
    }
    return s;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

// Largest element count among the task's tensors when bound to `extents`.
std::int64_t largest_tensor(const KernelTask& task, const std::vector<std::int64_t>& extents) {
    std::int64_t largest = 0;
    for (const auto& p : task.signature) {
        if (p.role == ParamRole::scalar) {
            continue;
        }
        std::int64_t n = 1;
        for (const auto& d : p.shape) {
            std::int64_t e = d.extent;
            if (d.is_symbol()) {
                const auto it = std::find(task.symbols.begin(), task.symbols.end(), d.symbol);
                e = it == task.symbols.end() ? 1 : extents[static_cast<std::size_t>(it - task.symbols.begin())];
            }
            if (e > 0 && n > (std::int64_t{1} << 62) / e) {
                return std::int64_t{1} << 62;
            }
            n *= e;
        }
        largest = std::max(largest, n);
    }
    return largest;
}

bool parse_int_list(std::string_view body, std::vector<std::int64_t>& out) {
    std::string cleaned(body);
    std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
    std::istringstream in(cleaned);
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(tok, &used);
            if (used != tok.size()) {
                return false;
            }
            out.push_back(v);
        } catch (const std::exception&) {
            return false;
        }
    }
    return true;
}

const char* strategy_hint(std::string_view tag) {
    if (tag == "loop-invariant-hoisting") {
        return "move computations and loads that do not change across iterations out of loops";
    }
    if (tag == "warp-shuffle-reduction") {
        return "reduce within a warp with shuffle intrinsics instead of shared memory";
    }
    if (tag == "vectorized-load") {
        return "load and store several elements per instruction";
    }
    if (tag == "fast-math-intrinsics") {
        return "use hardware intrinsics for exp, reciprocal and square root where accuracy allows";
    }
    return "anything else that makes the kernel faster";
}

std::string clip(std::string s, std::size_t cap) {
    if (s.size() > cap) {
        s.resize(cap);
        s += "\n[... truncated]";
    }
    return s;
}

} // namespace

// --- testing -------------------------------------------------------------------

ShapeProposal parse_shape_proposal(std::string_view text, const KernelTask& task,
                                   std::int64_t element_budget) {
    ShapeProposal out;
    std::set<std::vector<std::int64_t>> seen;
    std::set<std::uint64_t> seen_seeds;
    for (auto raw : split_lines(text)) {
        auto line = trim(raw);
        while (!line.empty() && (line.front() == '-' || line.front() == '*')) {
            line = trim(line.substr(1));
        }
        const auto low = lower(line);
        if (low.rfind("shape", 0) == 0) {
            const auto open = line.find('[');
            const auto close = line.find(']', open == std::string_view::npos ? 0 : open);
            std::vector<std::int64_t> extents;
            if (open == std::string_view::npos || close == std::string_view::npos ||
                !parse_int_list(line.substr(open + 1, close - open - 1), extents)) {
                out.notes.push_back("unparseable: " + std::string(line));
                continue;
            }
            if (extents.size() != task.symbols.size()) {
                out.notes.push_back("wrong rank (" + std::to_string(extents.size()) + ", expected " +
                                    std::to_string(task.symbols.size()) + "): " + std::string(line));
                continue;
            }
            if (std::any_of(extents.begin(), extents.end(), [](std::int64_t e) { return e < 1; })) {
                out.notes.push_back("non-positive extent: " + std::string(line));
                continue;
            }
            auto largest = largest_tensor(task, extents);
            if (largest > element_budget && !extents.empty()) {
                const auto before = default_family_label(extents);
                const auto scaled = static_cast<long double>(extents[0]) * element_budget / largest;
                extents[0] = std::max<std::int64_t>(1, static_cast<std::int64_t>(scaled));
                largest = largest_tensor(task, extents);
                if (largest > element_budget) {
                    out.notes.push_back("over element budget: " + before);
                    continue;
                }
                out.notes.push_back("shrunk " + before + " to " + default_family_label(extents));
            }
            if (!seen.insert(extents).second) {
                continue;
            }
            out.families.push_back({default_family_label(extents), extents});
        } else if (low.rfind("seeds", 0) == 0) {
            std::vector<std::int64_t> seeds;
            if (!parse_int_list(line.substr(5), seeds) ||
                std::any_of(seeds.begin(), seeds.end(), [](std::int64_t s) { return s < 0; })) {
                out.notes.push_back("unparseable: " + std::string(line));
                continue;
            }
            for (auto s : seeds) {
                if (seen_seeds.insert(static_cast<std::uint64_t>(s)).second) {
                    out.seeds.push_back(static_cast<std::uint64_t>(s));
                }
            }
        }
    }
    return out;
}

GeneratedSuite testing_generate_tests(const Candidate& baseline, const KernelTask& task,
                                      AgentSession& session, const TestingOptions& options) {
    std::vector<std::string> defaults;
    for (const auto& f : task.shape_families) {
        defaults.push_back("  " + f.label);
    }
    const auto prompt = session.prompts().render(
        "testing", {{"task_name", task.name},
                    {"symbols", join(task.symbols, ", ")},
                    {"signature", describe_signature(task)},
                    {"default_shapes", defaults.empty() ? "  (none)" : join(defaults, "\n")},
                    {"element_budget", std::to_string(options.element_budget)},
                    {"source", baseline.source}});
    const auto reply = session.chat("testing", 0, prompt);
    auto proposal = parse_shape_proposal(reply, task, options.element_budget);

    GeneratedSuite out;
    std::vector<ShapeFamily> families;
    if (session.mode() == AgentMode::multi) {
        families = task.shape_families;
    }
    for (const auto& f : proposal.families) {
        const auto dup = std::find_if(families.begin(), families.end(),
                                      [&](const ShapeFamily& g) { return g.extents == f.extents; });
        if (dup == families.end()) {
            families.push_back(f);
        }
    }
    if (proposal.families.empty()) {
        out.fallback = true;
        families = task.shape_families;
    }
    if (families.empty()) {
        throw ConfigError("task '" + task.name + "' has no shape families and the agent proposed none");
    }
    const auto& seeds = proposal.seeds.empty() ? options.default_seeds : proposal.seeds;
    const double eps = options.epsilon < 0 ? default_epsilon(task.widest_output_dtype()) : options.epsilon;
    out.suite = build_suite(task, families, seeds, eps, options.metric);

    std::vector<std::string> labels;
    for (const auto& f : families) {
        labels.push_back(f.label);
    }
    out.note = (out.fallback ? "no usable proposal, using task shapes: " : "shapes: ") + join(labels, " ");
    if (!proposal.notes.empty()) {
        out.note += "; " + join(proposal.notes, "; ");
    }
    return out;
}

Validation testing_validate(const Candidate& candidate, const TestSuite& suite, const KernelTask& task,
                            Executor& executor, const TimingProtocol& protocol) {
    const auto outcome = executor.execute_suite(candidate, suite, task, protocol);
    Validation v;
    if (!outcome.ok()) {
        v.report = CorrectnessReport::failure(outcome.failure_kind(), clip(outcome.diagnostics, 4000));
    } else {
        v.report = correctness_pass(suite, outcome.outputs);
    }
    v.passed = v.report.passed;
    return v;
}

// --- profiling -----------------------------------------------------------------

PerfReport profiling_profile(const Candidate& candidate, const Candidate& baseline, const TestSuite& suite,
                             const KernelTask& task, Executor& executor, const TimingProtocol& protocol) {
    return profile_pair(baseline, candidate, suite, task, executor, protocol);
}

std::string render_profile(const PromptLibrary& prompts, const PerfReport& perf) {
    std::vector<std::string> rows;
    for (const auto& s : perf.shapes) {
        rows.push_back("  " + s.label + ": baseline " + fixed(s.baseline_us, 2) + " us, candidate " +
                       fixed(s.candidate_us, 2) + " us, speedup " + fixed(s.speedup, 3) + "x");
    }
    return prompts.render("profiling", {{"table", join(rows, "\n")}, {"geo_mean", fixed(perf.geo_mean, 3)}});
}

// --- planning ------------------------------------------------------------------

Suggestion parse_suggestion(std::string_view text) {
    Suggestion out;
    out.raw_text = std::string(text);
    for (auto raw : split_lines(text)) {
        auto line = trim(raw);
        while (!line.empty() && (line.front() == '-' || line.front() == '*')) {
            line = trim(line.substr(1));
        }
        // numbered lists: "1." / "2)"
        std::size_t digits = 0;
        while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) {
            ++digits;
        }
        if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
            line = trim(line.substr(digits + 1));
        }
        if (line.empty() || line.front() != '[') {
            continue;
        }
        const auto close = line.find(']');
        if (close == std::string_view::npos) {
            continue;
        }
        SuggestionItem item;
        const auto tag = lower(trim(line.substr(1, close - 1)));
        const bool known = std::find(std::begin(kStrategyTags), std::end(kStrategyTags), tag) !=
                           std::end(kStrategyTags);
        item.strategy_tag = known ? tag : "other";
        auto rest = trim(line.substr(close + 1));
        const auto at = rest.rfind(" @ ");
        if (at != std::string_view::npos) {
            item.region = std::string(trim(rest.substr(at + 3)));
            rest = trim(rest.substr(0, at));
        }
        item.rationale = std::string(rest);
        if (item.rationale.empty()) {
            continue;
        }
        out.items.push_back(std::move(item));
    }
    if (out.items.empty()) {
        out.items.push_back({"other", std::string(trim(text)), ""});
    }
    return out;
}

std::string planning_prompt(const PromptLibrary& prompts, const KernelTask& task, const PlanningInput& in) {
    std::string directive;
    std::string status;
    std::string diagnostics;
    if (in.pass_prev) {
        directive = "The current kernel is correct. Make it faster while keeping every result within tolerance.";
        status = "pass";
    } else {
        directive = "The current kernel FAILS the correctness check. Restore correctness first: do not pursue "
                    "speed until every test case matches the reference again.";
        status = "FAIL";
        if (in.report_prev) {
            const auto& r = *in.report_prev;
            status += " (" + std::string(to_string(r.failure_kind));
            if (r.failure_kind == FailureKind::mismatch) {
                status += ", max discrepancy " + std::to_string(r.max_discrepancy) + " on case " + r.worst_case;
            }
            status += ")";
            if (!r.detail.empty()) {
                diagnostics = "Diagnostics:\n" + clip(r.detail, 4000);
            }
        }
    }
    const auto profile = in.perf_prev ? render_profile(prompts, *in.perf_prev)
                                      : std::string("No timings: the current kernel did not run to completion.");

    std::vector<std::string> history;
    for (const auto& rec : in.history.records) {
        std::string line = "  round " + std::to_string(rec.round) + ": ";
        if (rec.correctness) {
            line += "correct";
        } else {
            line += "incorrect";
            if (rec.failure_kind != FailureKind::none) {
                line += " (" + std::string(to_string(rec.failure_kind)) + ")";
            }
        }
        line += ", speedup " + (rec.performance ? fixed(rec.performance->geo_mean, 3) + "x" : std::string("n/a"));
        if (!rec.note.empty()) {
            line += " - " + rec.note;
        }
        history.push_back(std::move(line));
    }

    std::vector<std::string> strategies;
    for (auto tag : kStrategyTags) {
        strategies.push_back("  [" + std::string(tag) + "] " + strategy_hint(tag));
    }

    return prompts.render("planning", {{"task_name", task.name},
                                       {"round", std::to_string(in.round)},
                                       {"directive", directive},
                                       {"source", in.prev.source},
                                       {"status", status},
                                       {"diagnostics", diagnostics},
                                       {"profile", profile},
                                       {"history", history.empty() ? "  (none)" : join(history, "\n")},
                                       {"strategies", join(strategies, "\n")}});
}

Suggestion planning_suggest(const KernelTask& task, const PlanningInput& in, AgentSession& session) {
    const auto prompt = planning_prompt(session.prompts(), task, in);
    try {
        return parse_suggestion(session.chat("planning", in.round, prompt));
    } catch (const BackendError& e) {
        throw PlanningError(std::string("planning request failed: ") + e.what());
    }
}

// --- coding --------------------------------------------------------------------

CodeExtraction extract_code(std::string_view response) {
    CodeExtraction out;
    std::vector<std::string> blocks;
    std::optional<std::string> open;
    for (auto raw : split_lines(response)) {
        const auto line = trim(raw);
        if (!open) {
            if (line.rfind("```", 0) == 0) {
                open = std::string();
            }
        } else if (line == "```") {
            blocks.push_back(std::move(*open));
            open.reset();
        } else {
            *open += raw;
            *open += '\n';
        }
    }
    out.blocks = blocks.size();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (!out.code || blocks[i].size() > out.code->size()) {
            out.code = blocks[i];
            out.chosen = i;
        }
    }
    return out;
}

std::string coding_prompt(const PromptLibrary& prompts, const KernelTask& task, const Candidate& prev,
                          const Suggestion& suggestion) {
    std::vector<std::string> items;
    for (const auto& it : suggestion.items) {
        std::string line = "  [" + it.strategy_tag + "] " + it.rationale;
        if (!it.region.empty()) {
            line += " @ " + it.region;
        }
        items.push_back(std::move(line));
    }
    return prompts.render("coding", {{"task_name", task.name},
                                     {"suggestions", join(items, "\n")},
                                     {"entry", task.entry},
                                     {"signature", describe_signature(task)},
                                     {"source", prev.source}});
}

Candidate coding_apply(const KernelTask& task, const Candidate& prev, const Suggestion& suggestion,
                       AgentSession& session, int round, int attempts) {
    const auto prompt = coding_prompt(session.prompts(), task, prev, suggestion);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        std::string reply;
        try {
            reply = session.chat("coding", round,
                                 attempt == 1 ? prompt
                                              : std::string("Your previous reply contained no fenced code block. "
                                                            "Reply with the complete kernel source in one fenced "
                                                            "code block."));
        } catch (const BackendError& e) {
            throw CodingError(std::string("coding request failed: ") + e.what());
        }
        const auto ex = extract_code(reply);
        if (!ex.code) {
            continue;
        }
        std::vector<std::string> tags;
        for (const auto& it : suggestion.items) {
            tags.push_back("[" + it.strategy_tag + "] " + it.rationale);
        }
        Candidate c;
        c.round = round;
        c.source = *ex.code;
        c.provenance = join(tags, "; ");
        if (ex.blocks > 1) {
            c.provenance += " (block " + std::to_string(ex.chosen + 1) + " of " + std::to_string(ex.blocks) + ")";
        }
        return c;
    }
    throw CodingError("no code block in the coding agent's reply after " + std::to_string(attempts) + " attempts");
}

} // namespace kforge
