#include "kforge/orchestrator.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace kforge {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string signed_pct(double pct) {
    const auto r = std::lround(pct);
    return (r >= 0 ? "+" : "") + std::to_string(r) + "%";
}

// Display width in code points, so multibyte marks still line up.
std::size_t width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        n += (c & 0xC0) != 0x80;
    }
    return n;
}

using Table = std::vector<std::vector<std::string>>;

void emit_table(std::ostream& out, const Table& t, ReportFormat fmt) {
    if (t.empty()) {
        return;
    }
    if (fmt == ReportFormat::md) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            out << '|';
            for (const auto& cell : t[i]) {
                out << ' ' << cell << " |";
            }
            out << '\n';
            if (i == 0) {
                out << '|';
                for (std::size_t c = 0; c < t[0].size(); ++c) {
                    out << " --- |";
                }
                out << '\n';
            }
        }
        return;
    }
    std::vector<std::size_t> w(t[0].size(), 0);
    for (const auto& row : t) {
        for (std::size_t c = 0; c < row.size() && c < w.size(); ++c) {
            w[c] = std::max(w[c], width(row[c]));
        }
    }
    for (const auto& row : t) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            line += row[c];
            if (c + 1 < row.size()) {
                line += std::string(w[c] - width(row[c]) + 2, ' ');
            }
        }
        out << line << '\n';
    }
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

std::string first_line(const std::string& s) {
    auto line = s.substr(0, s.find('\n'));
    if (line.size() > 100) {
        line.resize(100);
        line += "...";
    }
    return line;
}

std::string mark(bool ok) { return ok ? "✓" : "✗"; }

} // namespace

std::size_t count_loc(std::string_view source) {
    std::size_t n = 0;
    bool blank = true;
    for (char c : source) {
        if (c == '\n') {
            n += !blank;
            blank = true;
        } else if (c != ' ' && c != '\t' && c != '\r' && c != '\f' && c != '\v') {
            blank = false;
        }
    }
    return n + !blank;
}

RunSummary summarize(const OptimizationLog& log) {
    RunSummary s;
    s.task_name = log.task_name;
    s.records = log.records;
    s.error = log.error;
    if (!log.records.empty()) {
        s.loc_base = count_loc(log.records.front().code);
    }
    try {
        const auto& best = select_best(log);
        s.best = best;
    } catch (const AggregationError&) {
        return s;
    }
    s.correct = true;
    s.loc_best = count_loc(s.best->code);
    s.loc_delta_pct = s.loc_base == 0 ? 0.0
                                      : 100.0 * (static_cast<double>(s.loc_best) - static_cast<double>(s.loc_base)) /
                                            static_cast<double>(s.loc_base);
    const auto& perf = *s.best->performance;
    s.speedup = perf.geo_mean;
    if (!perf.shapes.empty()) {
        for (const auto& sh : perf.shapes) {
            s.time_base_us += sh.baseline_us;
            s.time_best_us += sh.candidate_us;
        }
        s.time_base_us /= static_cast<double>(perf.shapes.size());
        s.time_best_us /= static_cast<double>(perf.shapes.size());
    }
    return s;
}

ReportFormat parse_report_format(std::string_view name) {
    if (name == "text") {
        return ReportFormat::text;
    }
    if (name == "md" || name == "markdown") {
        return ReportFormat::md;
    }
    if (name == "csv") {
        return ReportFormat::csv;
    }
    throw ConfigError("unknown report format '" + std::string(name) + "'");
}

std::string render_report(const std::vector<OptimizationLog>& logs, ReportFormat format) {
    std::ostringstream out;
    std::vector<RunSummary> summaries;
    for (const auto& log : logs) {
        summaries.push_back(summarize(log));
    }

    if (format == ReportFormat::csv) {
        out << "task,round,correct,failure,shape,baseline_us,candidate_us,speedup\n";
        for (const auto& s : summaries) {
            for (const auto& r : s.records) {
                const auto prefix = csv_field(s.task_name) + "," + std::to_string(r.round) + "," +
                                    (r.correctness ? "true" : "false") + "," +
                                    std::string(to_string(r.failure_kind)) + ",";
                if (!r.performance || r.performance->shapes.empty()) {
                    out << prefix << ",,,\n";
                    continue;
                }
                for (const auto& sh : r.performance->shapes) {
                    out << prefix << csv_field(sh.label) << "," << fixed(sh.baseline_us, 4) << ","
                        << fixed(sh.candidate_us, 4) << "," << fixed(sh.speedup, 6) << "\n";
                }
            }
        }
        return out.str();
    }

    const bool md = format == ReportFormat::md;
    for (const auto& s : summaries) {
        out << (md ? "## " : "== ") << s.task_name << (md ? "" : " ==") << "\n\n";
        Table rounds{{"Round", "Correct", "Speedup", "Note"}};
        for (const auto& r : s.records) {
            std::string verdict = mark(r.correctness);
            if (!r.correctness && r.failure_kind != FailureKind::none) {
                verdict += " " + std::string(to_string(r.failure_kind));
            }
            rounds.push_back({std::to_string(r.round), verdict,
                              r.performance ? fixed(r.performance->geo_mean, 3) + "×" : "-", first_line(r.note)});
        }
        emit_table(out, rounds, format);
        out << '\n';
        if (s.error) {
            out << "Run stopped at round " << s.error->round << ": " << s.error->message << "\n\n";
        }
        if (!s.best) {
            out << "No correct candidate.\n\n";
            continue;
        }
        out << "Selected round " << s.best->round << "\n\n";
        Table shapes{{"Shape", "Time-Base (us)", "Time-Opt. (us)", "Speedup"}};
        for (const auto& sh : s.best->performance->shapes) {
            shapes.push_back({sh.label, fixed(sh.baseline_us, 2), fixed(sh.candidate_us, 2),
                              fixed(sh.speedup, 2) + "×"});
        }
        emit_table(out, shapes, format);
        out << '\n';
    }

    Table overview{{"Kernel", "LoC-Base", "LoC-Opt.", "ΔLoC", "Time-Base", "Time-Opt.", "Speedup", "Correct"}};
    double loc_base = 0, loc_best = 0, delta = 0, t_base = 0, t_best = 0, log_speedup = 0;
    bool all_correct = true;
    std::size_t n = 0;
    for (const auto& s : summaries) {
        if (!s.best) {
            overview.push_back({s.task_name, std::to_string(s.loc_base), "-", "-", "-", "-", "-", mark(false)});
            all_correct = false;
            continue;
        }
        overview.push_back({s.task_name, std::to_string(s.loc_base), std::to_string(s.loc_best),
                            signed_pct(s.loc_delta_pct), fixed(s.time_base_us, 1), fixed(s.time_best_us, 1),
                            fixed(s.speedup, 2) + "×", mark(s.correct)});
        loc_base += static_cast<double>(s.loc_base);
        loc_best += static_cast<double>(s.loc_best);
        delta += s.loc_delta_pct;
        t_base += s.time_base_us;
        t_best += s.time_best_us;
        log_speedup += std::log(s.speedup);
        all_correct = all_correct && s.correct;
        ++n;
    }
    if (n > 0) {
        const double k = static_cast<double>(n);
        overview.push_back({"Average", fixed(loc_base / k, 0), fixed(loc_best / k, 0), signed_pct(delta / k),
                            fixed(t_base / k, 1), fixed(t_best / k, 1), fixed(std::exp(log_speedup / k), 2) + "×",
                            mark(all_correct)});
    }
    emit_table(out, overview, format);
    return out.str();
}

} // namespace kforge
