#include "kforge/metrics.hpp"

#include "kforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

double discrepancy(const Tensor& a, const Tensor& b, const DiscrepancyMetric& metric) {
    if (a.shape() != b.shape()) {
        throw ComparisonError("shape mismatch: " + format_shape(a.shape()) + " vs " +
                              format_shape(b.shape()));
    }
    if (a.dtype() != b.dtype()) {
        throw ComparisonError("dtype mismatch: " + std::string(to_string(a.dtype())) + " vs " +
                              std::string(to_string(b.dtype())));
    }
    if (metric.kind == MetricKind::max_rel_abs && !(metric.rel_floor > 0.0)) {
        throw ComparisonError("rel_floor must be > 0");
    }

    const auto floor = static_cast<float>(metric.rel_floor);
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const float x = a.get(i);
        const float y = b.get(i);
        if (!std::isfinite(x) || !std::isfinite(y)) {
            return kInf;
        }
        float d = std::fabs(x - y);
        if (metric.kind == MetricKind::max_rel_abs) {
            d /= std::max({std::fabs(x), std::fabs(y), floor});
        }
        worst = std::max(worst, d);
    }
    return static_cast<double>(worst);
}

std::string_view to_string(FailureKind kind) {
    switch (kind) {
    case FailureKind::none:
        return "none";
    case FailureKind::mismatch:
        return "mismatch";
    case FailureKind::compile:
        return "compile";
    case FailureKind::runtime:
        return "runtime";
    }
    return "?";
}

FailureKind parse_failure_kind(std::string_view name) {
    for (auto k : {FailureKind::none, FailureKind::mismatch, FailureKind::compile,
                   FailureKind::runtime}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw FormatError("unknown failure kind '" + std::string(name) + "'");
}

CorrectnessReport CorrectnessReport::failure(FailureKind kind, std::string detail) {
    CorrectnessReport r;
    r.passed = false;
    r.max_discrepancy = kInf;
    r.failure_kind = kind;
    r.detail = std::move(detail);
    return r;
}

CorrectnessReport correctness_pass(const TestSuite& suite, const CaseOutputs& actual) {
    CorrectnessReport report;
    report.max_discrepancy = 0.0;

    for (const auto& tc : suite.cases) {
        auto it = actual.find(tc.case_id);
        if (it == actual.end()) {
            auto r = CorrectnessReport::failure(FailureKind::runtime,
                                                "no outputs for case " + tc.case_id);
            r.worst_case = tc.case_id;
            return r;
        }
        double case_max = 0.0;
        for (const auto& [name, expected] : tc.expected) {
            auto out = it->second.find(name);
            if (out == it->second.end()) {
                auto r = CorrectnessReport::failure(
                    FailureKind::runtime, "case " + tc.case_id + " is missing output " + name);
                r.worst_case = tc.case_id;
                return r;
            }
            double d = kInf;
            if (out->second.shape() == expected.shape() &&
                out->second.dtype() == expected.dtype()) {
                d = discrepancy(out->second, expected, suite.metric);
            }
            case_max = std::max(case_max, d);
        }
        report.per_case[tc.case_id] = case_max;
        if (report.worst_case.empty() || case_max > report.max_discrepancy) {
            report.max_discrepancy = case_max;
            report.worst_case = tc.case_id;
        }
    }

    report.passed = report.max_discrepancy <= suite.epsilon;
    report.failure_kind = report.passed ? FailureKind::none : FailureKind::mismatch;
    return report;
}

double speedup(double tau_base_us, double tau_cand_us) {
    if (!(tau_base_us > 0.0) || !(tau_cand_us > 0.0) || !std::isfinite(tau_base_us) ||
        !std::isfinite(tau_cand_us)) {
        throw MeasurementError("timings must be positive and finite");
    }
    return tau_base_us / tau_cand_us;
}

double geo_mean(std::span<const double> ratios) {
    if (ratios.empty()) {
        throw AggregationError("geometric mean of an empty list");
    }
    double log_sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0) || !std::isfinite(r)) {
            throw AggregationError("geometric mean needs positive finite ratios");
        }
        log_sum += std::log(r);
    }
    return std::exp(log_sum / static_cast<double>(ratios.size()));
}

double arithmetic_mean(std::span<const double> samples) {
    if (samples.empty()) {
        throw MeasurementError("no timing samples");
    }
    double sum = 0.0;
    for (double s : samples) {
        sum += s;
    }
    return sum / static_cast<double>(samples.size());
}

const ShapePerf& PerfReport::at(std::string_view label) const {
    for (const auto& s : shapes) {
        if (s.label == label) {
            return s;
        }
    }
    throw MeasurementError("perf report has no shape '" + std::string(label) + "'");
}

PerfReport make_perf_report(const std::vector<ShapeSamples>& baseline,
                            const std::vector<ShapeSamples>& candidate) {
    if (baseline.empty()) {
        throw MeasurementError("no shapes were timed");
    }
    if (baseline.size() != candidate.size()) {
        throw MeasurementError("baseline and candidate timed different shape sets");
    }
    PerfReport report;
    std::vector<double> ratios;
    for (const auto& base : baseline) {
        auto it = std::find_if(candidate.begin(), candidate.end(),
                               [&](const ShapeSamples& s) { return s.label == base.label; });
        if (it == candidate.end()) {
            throw MeasurementError("candidate has no timings for shape " + base.label);
        }
        ShapePerf sp;
        sp.label = base.label;
        sp.baseline_us = arithmetic_mean(base.samples_us);
        sp.candidate_us = arithmetic_mean(it->samples_us);
        sp.speedup = speedup(sp.baseline_us, sp.candidate_us);
        sp.baseline_samples = base.samples_us;
        sp.candidate_samples = it->samples_us;
        ratios.push_back(sp.speedup);
        report.shapes.push_back(std::move(sp));
    }
    report.geo_mean = geo_mean(ratios);
    return report;
}

} // namespace kforge
