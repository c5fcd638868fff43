#pragma once

#include "kforge/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kforge {

enum class MetricKind { max_abs, max_rel_abs };

std::string_view to_string(MetricKind kind);
MetricKind parse_metric(std::string_view name);

struct DiscrepancyMetric {
    MetricKind kind = MetricKind::max_abs;
    /// Denominator floor for max-rel-abs; must be > 0.
    double rel_floor = 1.0;

    friend bool operator==(const DiscrepancyMetric&, const DiscrepancyMetric&) = default;
};

using TensorMap = std::map<std::string, Tensor>;
using ScalarMap = std::map<std::string, float>;

struct TestCase {
    std::string case_id;
    TensorMap inputs;
    ScalarMap scalars;
    TensorMap expected;
    std::string shape_label;
    std::uint64_t seed = 0;
};

struct TestSuite {
    std::vector<TestCase> cases;
    double epsilon = 0.0;
    DiscrepancyMetric metric;

    /// Shape labels in first-appearance order.
    std::vector<std::string> shape_labels() const;
    std::vector<const TestCase*> cases_for(std::string_view shape_label) const;
    const TestCase& find(std::string_view case_id) const;
};

/// Throws ConfigError unless cases are non-empty with unique ids, epsilon >= 0
/// and the metric's rel_floor > 0.
void validate_suite(const TestSuite& suite);

} // namespace kforge
