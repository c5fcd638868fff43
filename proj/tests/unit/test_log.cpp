#include "kforge/error.hpp"
#include "kforge/log.hpp"

#include "support/random_log.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <algorithm>
#include <fstream>
#include <sstream>

using namespace kforge;

namespace {

OptimizationLog two_round_log() {
    OptimizationLog log;
    log.task_name = "silu_and_mul";
    log.config_snapshot = {{"rounds", 1}};
    RoundRecord base;
    base.round = 0;
    base.code = "__global__ void k() {}\n";
    base.correctness = true;
    base.performance = PerfReport{{{"[16, 4096]", 20.9, 20.9, 1.0, {20.9}, {20.9}}}, 1.0};
    RoundRecord bad;
    bad.round = 1;
    bad.code = "oops";
    bad.failure_kind = FailureKind::compile;
    bad.note = "expected ';'";
    log.records = {base, bad};
    return log;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

} // namespace

TEST(LogFormat, LineLayout) {
    auto log = two_round_log();
    log.agent_transcripts.push_back({"planning", 1, "p", "r", 10, 20, 0.0, 0});
    log.error = LogError{2, "coding agent missing"};
    const auto text = serialize_log(log);
    EXPECT_EQ(count_lines(text), 6u); // header, metadata, 2 records, 1 transcript, error
    std::istringstream in(text);
    std::string first;
    std::getline(in, first);
    const auto header = nlohmann::json::parse(first);
    EXPECT_EQ(header.at("type"), "header");
    EXPECT_EQ(header.at("version"), 1);
    EXPECT_EQ(header.at("task"), "silu_and_mul");
}

TEST(LogFormat, RoundTripIsIdentity) {
    const auto log = two_round_log();
    EXPECT_EQ(parse_log(serialize_log(log)), log);
    EXPECT_EQ(serialize_log(parse_log(serialize_log(log))), serialize_log(log));
}

TEST(LogFormat, RandomLogsRoundTrip) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto log = kforge::testing::random_log(seed);
        const auto text = serialize_log(log);
        const auto back = parse_log(text);
        ASSERT_EQ(back, log) << "seed " << seed;
        ASSERT_EQ(serialize_log(back), text) << "seed " << seed;
    }
}

TEST(LogFormat, InvalidUtf8IsReplacedNotFatal) {
    auto log = two_round_log();
    log.records[1].code = std::string("bad \xff byte");
    const auto back = parse_log(serialize_log(log));
    EXPECT_EQ(back.records[1].code, "bad \xEF\xBF\xBD byte");
}

TEST(LogFormat, WriterRejectsBrokenInvariants) {
    OptimizationLog empty;
    EXPECT_THROW(serialize_log(empty), ConfigError);

    auto failing_base = two_round_log();
    failing_base.records[0].correctness = false;
    EXPECT_THROW(serialize_log(failing_base), ConfigError);

    auto gap = two_round_log();
    gap.records[1].round = 2;
    EXPECT_THROW(serialize_log(gap), ConfigError);
}

TEST(LogFormat, TruncatedLastLineNamesTheLine) {
    const auto text = serialize_log(two_round_log());
    const auto cut = text.substr(0, text.size() - 10);
    try {
        parse_log(cut);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(LogFormat, MalformedLinesAreParseErrors) {
    const auto text = serialize_log(two_round_log());
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) {
        lines.push_back(l);
    }
    auto join = [](const std::vector<std::string>& ls) {
        std::string s;
        for (const auto& l : ls) {
            s += l + "\n";
        }
        return s;
    };

    auto garbage = lines;
    garbage[2] = "{not json";
    try {
        parse_log(join(garbage));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }

    auto no_header = lines;
    no_header.erase(no_header.begin());
    EXPECT_THROW(parse_log(join(no_header)), ParseError);

    auto swapped = lines;
    std::swap(swapped[2], swapped[3]);
    EXPECT_THROW(parse_log(join(swapped)), ParseError);

    auto unknown = lines;
    unknown.push_back(R"({"type":"mystery"})");
    EXPECT_THROW(parse_log(join(unknown)), ParseError);

    auto bad_kind = lines;
    auto j = nlohmann::json::parse(bad_kind[3]);
    j["failure_kind"] = "explosion";
    bad_kind[3] = j.dump();
    EXPECT_THROW(parse_log(join(bad_kind)), ParseError);

    EXPECT_THROW(parse_log(""), ParseError);
}

TEST(LogFormat, FileSaveIsAtomicAndLoads) {
    const auto dir = std::filesystem::temp_directory_path() / "kforge_log_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "nested" / "run.jsonl";
    const auto log = kforge::testing::random_log(7);
    save_log_file(log, path);
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    EXPECT_EQ(load_log_file(path), log);
    EXPECT_THROW(load_log_file(dir / "missing.jsonl"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(RoundRecord, GeoMeanOrFallback) {
    const auto log = two_round_log();
    EXPECT_EQ(log.records[0].geo_mean_or(-1.0), 1.0);
    EXPECT_EQ(log.records[1].geo_mean_or(-1.0), -1.0);
}
