#include "kforge/error.hpp"
#include "kforge/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace kforge;

namespace {

const DiscrepancyMetric kMaxAbs{};

Tensor vec(std::vector<float> v) {
    const auto n = static_cast<std::int64_t>(v.size());
    return Tensor(Shape{n}, std::move(v));
}

TestSuite suite_with(std::vector<std::pair<std::string, Tensor>> cases, double eps) {
    TestSuite s;
    s.epsilon = eps;
    for (auto& [id, expected] : cases) {
        TestCase tc;
        tc.case_id = id;
        tc.shape_label = "L";
        tc.expected.emplace("out", expected);
        s.cases.push_back(std::move(tc));
    }
    return s;
}

} // namespace

TEST(Discrepancy, IdenticalIsZero) {
    const auto a = vec({1.0f, -2.0f, 3.5f});
    EXPECT_EQ(discrepancy(a, a, kMaxAbs), 0.0);
}

TEST(Discrepancy, SingleElement) { EXPECT_EQ(discrepancy(vec({1.0f}), vec({1.5f}), kMaxAbs), 0.5); }

TEST(Discrepancy, MatchesScalarLoopOnRandom3x3) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> av(9), bv(9);
        for (int i = 0; i < 9; ++i) {
            av[i] = u(rng);
            bv[i] = u(rng);
        }
        float expected = 0.0f;
        for (int i = 0; i < 9; ++i) {
            const float d = av[i] > bv[i] ? av[i] - bv[i] : bv[i] - av[i];
            if (d > expected) {
                expected = d;
            }
        }
        const Tensor a({3, 3}, av);
        const Tensor b({3, 3}, bv);
        EXPECT_EQ(discrepancy(a, b, kMaxAbs), static_cast<double>(expected));
        EXPECT_EQ(discrepancy(b, a, kMaxAbs), discrepancy(a, b, kMaxAbs));
    }
}

TEST(Discrepancy, NonFiniteIsInfinite) {
    const float nan = std::numeric_limits<float>::quiet_NaN();
    const float inf = std::numeric_limits<float>::infinity();
    EXPECT_TRUE(std::isinf(discrepancy(vec({nan}), vec({nan}), kMaxAbs)));
    EXPECT_TRUE(std::isinf(discrepancy(vec({1.0f}), vec({nan}), kMaxAbs)));
    EXPECT_TRUE(std::isinf(discrepancy(vec({inf}), vec({inf}), kMaxAbs)));
}

TEST(Discrepancy, SignedZerosAreEqual) {
    EXPECT_EQ(discrepancy(vec({0.0f}), vec({-0.0f}), kMaxAbs), 0.0);
}

TEST(Discrepancy, MismatchIsComparisonError) {
    EXPECT_THROW(discrepancy(vec({1, 2}), vec({1, 2, 3}), kMaxAbs), ComparisonError);
    const auto h = Tensor::from_f32(DType::f16, {2}, {1, 2});
    EXPECT_THROW(discrepancy(vec({1, 2}), h, kMaxAbs), ComparisonError);
}

TEST(Discrepancy, RelAbsUsesFloor) {
    const DiscrepancyMetric rel{MetricKind::max_rel_abs, 1.0};
    // Comparison arithmetic is f32.
    EXPECT_EQ(discrepancy(vec({100.0f}), vec({101.0f}), rel), static_cast<double>(1.0f / 101.0f));
    EXPECT_DOUBLE_EQ(discrepancy(vec({0.25f}), vec({0.5f}), rel), 0.25);
}

TEST(Discrepancy, F16ComparedInF32) {
    const auto a = Tensor::from_f32(DType::f16, {2}, {1.0f, 2.0f});
    const auto b = Tensor::from_f32(DType::f16, {2}, {1.0f, 2.001953125f});
    EXPECT_EQ(discrepancy(a, b, kMaxAbs), 0.001953125);
}

TEST(CorrectnessPass, BelowToleranceCasesPass) {
    auto s = suite_with({{"a", vec({0.0f})}, {"b", vec({0.0f})}}, 1e-3);
    CaseOutputs actual;
    actual["a"].emplace("out", vec({0.0f}));
    actual["b"].emplace("out", vec({1e-4f}));
    const auto r = correctness_pass(s, actual);
    EXPECT_TRUE(r.passed);
    EXPECT_EQ(r.failure_kind, FailureKind::none);
    EXPECT_EQ(r.per_case.at("a"), 0.0);
    EXPECT_NEAR(r.per_case.at("b"), 1e-4, 1e-9);
    EXPECT_EQ(r.worst_case, "b");
}

TEST(CorrectnessPass, AboveToleranceFails) {
    auto s = suite_with({{"a", vec({0.0f})}}, 1e-3);
    CaseOutputs actual;
    actual["a"].emplace("out", vec({2e-3f}));
    const auto r = correctness_pass(s, actual);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.failure_kind, FailureKind::mismatch);
    EXPECT_NEAR(r.max_discrepancy, 2e-3, 1e-9);
}

TEST(CorrectnessPass, ExactEqualityAtZeroEpsilon) {
    auto s = suite_with({{"a", vec({0.5f, 1.0f})}, {"b", vec({-3.0f})}}, 0.0);
    CaseOutputs actual;
    actual["a"].emplace("out", vec({0.5f, 1.0f}));
    actual["b"].emplace("out", vec({-3.0f}));
    EXPECT_TRUE(correctness_pass(s, actual).passed);
}

TEST(CorrectnessPass, MissingCaseOrOutputIsRuntimeFailure) {
    auto s = suite_with({{"a", vec({0.0f})}, {"b", vec({0.0f})}}, 1.0);
    CaseOutputs actual;
    actual["a"].emplace("out", vec({0.0f}));
    auto r = correctness_pass(s, actual);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.failure_kind, FailureKind::runtime);
    EXPECT_EQ(r.worst_case, "b");

    actual["b"].emplace("other", vec({0.0f}));
    r = correctness_pass(s, actual);
    EXPECT_EQ(r.failure_kind, FailureKind::runtime);
}

TEST(CorrectnessPass, WrongShapeIsInfiniteMismatch) {
    auto s = suite_with({{"a", vec({0.0f})}}, 1e9);
    CaseOutputs actual;
    actual["a"].emplace("out", vec({0.0f, 0.0f}));
    const auto r = correctness_pass(s, actual);
    EXPECT_FALSE(r.passed);
    EXPECT_TRUE(std::isinf(r.max_discrepancy));
}

TEST(CorrectnessPass, MonotoneInEpsilon) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(-1e-2f, 1e-2f);
    for (int trial = 0; trial < 50; ++trial) {
        auto s = suite_with({{"a", vec({0.0f, 0.0f})}}, 0.0);
        CaseOutputs actual;
        actual["a"].emplace("out", vec({u(rng), u(rng)}));
        for (double eps : {0.0, 1e-4, 1e-3, 5e-3, 1e-2}) {
            s.epsilon = eps;
            const bool pass = correctness_pass(s, actual).passed;
            for (double looser : {eps * 2, eps + 1e-3, 1.0}) {
                s.epsilon = looser;
                if (pass) {
                    EXPECT_TRUE(correctness_pass(s, actual).passed);
                }
            }
            s.epsilon = eps;
        }
    }
}

TEST(Speedup, PublishedRatios) {
    EXPECT_NEAR(speedup(31.4, 24.9), 1.26, 0.005);
    EXPECT_NEAR(speedup(32.9, 22.6), 1.46, 0.005);
    EXPECT_EQ(speedup(10.0, 10.0), 1.0);
}

TEST(Speedup, NonPositiveTimeIsMeasurementError) {
    EXPECT_THROW(speedup(0.0, 1.0), MeasurementError);
    EXPECT_THROW(speedup(1.0, -1.0), MeasurementError);
    EXPECT_THROW(speedup(1.0, std::numeric_limits<double>::quiet_NaN()), MeasurementError);
}

TEST(Speedup, ReciprocalProperty) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 500.0);
    for (int i = 0; i < 200; ++i) {
        const double a = u(rng), b = u(rng);
        EXPECT_NEAR(speedup(a, b) * speedup(b, a), 1.0, 1e-12);
    }
}

TEST(GeoMean, Examples) {
    const std::vector<double> sym{2.0, 0.5};
    EXPECT_DOUBLE_EQ(geo_mean(sym), 1.0);
    const std::vector<double> table{1.26, 1.25, 1.46};
    EXPECT_NEAR(geo_mean(table), 1.32, 0.01);
}

TEST(GeoMean, MatchesLogSpaceIdentityOnRandomRatios) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.05, 20.0);
    std::vector<double> ratios(50);
    for (auto& r : ratios) {
        r = u(rng);
    }
    // Independent route: direct product then root, fine at this magnitude.
    double product = 1.0;
    for (double r : ratios) {
        product *= r;
    }
    const double direct = std::pow(product, 1.0 / 50.0);
    EXPECT_NEAR(geo_mean(ratios) / direct, 1.0, 1e-12);
}

TEST(GeoMean, Properties) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.2, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> list(1 + rng() % 10);
        for (auto& x : list) {
            x = u(rng);
        }
        const std::vector<double> single{list[0]};
        EXPECT_NEAR(geo_mean(single), list[0], 1e-12 * list[0]);

        std::vector<double> tripled;
        for (int k = 0; k < 3; ++k) {
            tripled.insert(tripled.end(), list.begin(), list.end());
        }
        EXPECT_NEAR(geo_mean(tripled) / geo_mean(list), 1.0, 1e-12);

        std::vector<double> recip;
        for (double x : list) {
            recip.push_back(1.0 / x);
        }
        EXPECT_NEAR(geo_mean(list) * geo_mean(recip), 1.0, 1e-12);
    }
}

TEST(GeoMean, Errors) {
    EXPECT_THROW(geo_mean(std::vector<double>{}), AggregationError);
    EXPECT_THROW(geo_mean(std::vector<double>{1.0, 0.0}), AggregationError);
    EXPECT_THROW(geo_mean(std::vector<double>{-1.0}), AggregationError);
}

TEST(GeoMean, LogSpaceAvoidsOverflow) {
    const std::vector<double> big(400, 1e300);
    // exp(log(1e300)) amplifies the last-ulp error of log by ~690.
    EXPECT_NEAR(geo_mean(big) / 1e300, 1.0, 1e-10);
}

TEST(PerfReport, BuiltFromSamples) {
    std::vector<ShapeSamples> base{{"A", std::vector<double>(100, 32.9)},
                                   {"B", std::vector<double>(100, 10.0)}};
    std::vector<ShapeSamples> cand{{"B", std::vector<double>(100, 10.0)},
                                   {"A", std::vector<double>(100, 22.6)}};
    const auto r = make_perf_report(base, cand);
    ASSERT_EQ(r.shapes.size(), 2u);
    EXPECT_EQ(r.shapes[0].label, "A");
    EXPECT_NEAR(r.at("A").speedup, 1.46, 0.005);
    EXPECT_NEAR(r.at("B").speedup, 1.0, 1e-12);
    EXPECT_NEAR(r.geo_mean, std::sqrt(32.9 / 22.6), 1e-9);
    EXPECT_EQ(r.at("A").candidate_samples.size(), 100u);

    cand.pop_back();
    EXPECT_THROW(make_perf_report(base, cand), MeasurementError);
}
