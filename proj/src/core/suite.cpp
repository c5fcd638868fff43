#include "kforge/suite.hpp"

#include "kforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace kforge {

std::string_view to_string(MetricKind kind) {
    return kind == MetricKind::max_abs ? "max-abs" : "max-rel-abs";
}

MetricKind parse_metric(std::string_view name) {
    if (name == "max-abs") {
        return MetricKind::max_abs;
    }
    if (name == "max-rel-abs") {
        return MetricKind::max_rel_abs;
    }
    throw ConfigError("unknown discrepancy metric '" + std::string(name) + "'");
}

std::vector<std::string> TestSuite::shape_labels() const {
    std::vector<std::string> labels;
    for (const auto& c : cases) {
        if (std::find(labels.begin(), labels.end(), c.shape_label) == labels.end()) {
            labels.push_back(c.shape_label);
        }
    }
    return labels;
}

std::vector<const TestCase*> TestSuite::cases_for(std::string_view shape_label) const {
    std::vector<const TestCase*> out;
    for (const auto& c : cases) {
        if (c.shape_label == shape_label) {
            out.push_back(&c);
        }
    }
    return out;
}

const TestCase& TestSuite::find(std::string_view case_id) const {
    for (const auto& c : cases) {
        if (c.case_id == case_id) {
            return c;
        }
    }
    throw ConfigError("suite has no case '" + std::string(case_id) + "'");
}

void validate_suite(const TestSuite& suite) {
    if (suite.cases.empty()) {
        throw ConfigError("test suite has no cases");
    }
    if (!(suite.epsilon >= 0.0) || std::isnan(suite.epsilon)) {
        throw ConfigError("suite epsilon must be >= 0");
    }
    if (!(suite.metric.rel_floor > 0.0)) {
        throw ConfigError("metric rel_floor must be > 0");
    }
    std::set<std::string> ids;
    for (const auto& c : suite.cases) {
        if (!ids.insert(c.case_id).second) {
            throw ConfigError("duplicate case id '" + c.case_id + "'");
        }
    }
}

} // namespace kforge
