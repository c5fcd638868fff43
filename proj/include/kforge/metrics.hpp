#pragma once

#include "kforge/suite.hpp"
#include "kforge/tensor.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace kforge {

/// Elementwise discrepancy between two same-shaped tensors.
///
/// max-abs is max |a_i - b_i| evaluated in f32. max-rel-abs divides each term
/// by max(|a_i|, |b_i|, rel_floor). Any non-finite element on either side
/// yields +infinity, so NaN never compares equal to NaN. Throws
/// ComparisonError on shape or dtype mismatch.
double discrepancy(const Tensor& a, const Tensor& b, const DiscrepancyMetric& metric);

enum class FailureKind { none, mismatch, compile, runtime };

std::string_view to_string(FailureKind kind);
FailureKind parse_failure_kind(std::string_view name);

struct CorrectnessReport {
    bool passed = false;
    double max_discrepancy = 0.0;
    std::map<std::string, double> per_case;
    FailureKind failure_kind = FailureKind::none;
    std::string worst_case; // case id attaining max_discrepancy
    std::string detail;

    /// Report for a candidate that never produced comparable outputs.
    static CorrectnessReport failure(FailureKind kind, std::string detail);
};

/// Candidate outputs, case_id -> output name -> tensor.
using CaseOutputs = std::map<std::string, TensorMap>;

/// Passes iff every case's every expected output is present and the maximum
/// discrepancy over the suite is <= suite.epsilon. A missing case or output is
/// a runtime failure; a wrong-shaped output counts as infinite discrepancy.
CorrectnessReport correctness_pass(const TestSuite& suite, const CaseOutputs& actual);

/// tau_base / tau_cand; > 1 means the candidate is faster.
double speedup(double tau_base_us, double tau_cand_us);

/// (prod ratios)^(1/m), evaluated as exp(mean(log ratio)).
double geo_mean(std::span<const double> ratios);

double arithmetic_mean(std::span<const double> samples);

struct ShapeSamples {
    std::string label;
    std::vector<double> samples_us;

    friend bool operator==(const ShapeSamples&, const ShapeSamples&) = default;
};

struct ShapePerf {
    std::string label;
    double baseline_us = 0.0;
    double candidate_us = 0.0;
    double speedup = 1.0;
    std::vector<double> baseline_samples;
    std::vector<double> candidate_samples;

    friend bool operator==(const ShapePerf&, const ShapePerf&) = default;
};

struct PerfReport {
    std::vector<ShapePerf> shapes;
    double geo_mean = 1.0;

    const ShapePerf& at(std::string_view label) const;

    friend bool operator==(const PerfReport&, const PerfReport&) = default;
};

/// Per-shape means, speedups and their geometric mean. Both sides must cover
/// the same shape labels; the baseline order is kept.
PerfReport make_perf_report(const std::vector<ShapeSamples>& baseline,
                            const std::vector<ShapeSamples>& candidate);

} // namespace kforge
