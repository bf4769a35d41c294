#include <gtest/gtest.h>

#include <cmath>

#include "caadnn/analysis.hpp"
#include "caadnn/error.hpp"
#include "oracle.hpp"

using namespace caadnn;

namespace {

CaaContext context(int k = 24) { return CaaContext(FpContext(FpFormat(k), -7)); }

Quantity ranged(double lo, double hi, double abs_bound, const CaaContext& ctx) {
    QuantityParts p;
    p.fp_value = (lo + hi) / 2;
    p.reference = Interval::point(p.fp_value);
    p.abs_bound = abs_bound;
    p.rel_bound = kUnbounded;
    p.exact_range = Interval(lo, hi);
    p.rounded_range = Interval(lo, hi);
    return Quantity::make(refine(p, ctx));
}

}  // namespace

TEST(Margins, WorkedExampleAtSixtyPercent) {
    Margin m = margins_from_confidence(0.60);
    EXPECT_EQ(m.mu, 0.09999999999999998);  // 0.6 - 0.5 in binary64, exact
    EXPECT_GT(m.nu, 0.0909);
    // nu is (2p - 1) / (2p + 1) for the binary64 p, rounded down.
    const oracle::Exact p(0.6);
    const oracle::Exact nu = (2 * p - 1) / (2 * p + 1);
    EXPECT_LE(oracle::Exact(m.nu), nu);
    EXPECT_LT(nu - oracle::Exact(m.nu), oracle::Exact(std::ldexp(1.0, -55)));
    EXPECT_GT(softmax_input_tolerance(m), 1.65e-2);
    EXPECT_LT(softmax_input_tolerance(m), std::ldexp(1.0, -5));
}

TEST(Margins, Limits) {
    Margin one = margins_from_confidence(1.0);
    EXPECT_EQ(one.mu, 0.5);
    EXPECT_LE(one.nu, 1.0 / 3.0);
    EXPECT_GT(one.nu, 1.0 / 3.0 - 1e-16);
    Margin edge = margins_from_confidence(std::nextafter(0.5, 1.0));
    EXPECT_GT(edge.mu, 0.0);
    EXPECT_LT(edge.mu, 1e-15);
    EXPECT_LT(edge.nu, 1e-15);
    EXPECT_THROW(margins_from_confidence(0.5), Error);
    EXPECT_THROW(margins_from_confidence(1.01), Error);
}

TEST(Margins, TolerancesAreLowerBounds) {
    EXPECT_EQ(softmax_input_tolerance(Margin{1.0, 0.5, 0.0}), 0.0);
    const double t = softmax_input_tolerance(Margin{1.0, 0.5, 0.55});
    EXPECT_LE(t, 0.1);
    EXPECT_GT(t, 0.1 - 1e-16);
    EXPECT_EQ(softmax_propagation_bound(0.25), kUnbounded);
    EXPECT_EQ(softmax_propagation_bound(0.125), 0.6875);
}

TEST(Precision, WorkedExamples) {
    Margin m{0.6, 0.1, 0.0909};
    PrecisionRequirement r = required_precision(3.4, kUnbounded, m, -7);
    EXPECT_EQ(r.required_k, 8);
    EXPECT_EQ(r.u_max_floor_k, 8);
    EXPECT_FALSE(required_precision(kUnbounded, kUnbounded, m, -7).required_k.has_value());

    // 1 * 2^(1-k) <= 2^-10 first holds at k = 11.
    PrecisionRequirement a = required_precision(kUnbounded, 1.0, Margin{0.5 + 0x1p-10, 0x1p-10, 0.0}, -7);
    EXPECT_EQ(a.required_k, 11);
    EXPECT_EQ(a.inequality_k, 11);
}

TEST(Precision, MonotoneInTheBound) {
    Margin m = margins_from_confidence(0.6);
    int previous = 0;
    for (double b = 0.125; b < 1e9; b *= 1.7) {
        PrecisionRequirement r = required_precision(b, kUnbounded, m, -7);
        ASSERT_TRUE(r.required_k.has_value());
        EXPECT_GE(*r.required_k, previous);
        EXPECT_LE(std::ldexp(b, 1 - *r.inequality_k), m.nu);
        if (*r.inequality_k > 2) EXPECT_GT(std::ldexp(b, 2 - *r.inequality_k), m.nu);
        previous = *r.required_k;
    }
}

TEST(Argmax, DisjointRangesAreStable) {
    CaaContext ctx = context();
    CaaTensor t{{2}, {ranged(0.7, 0.72, 0.01, ctx), ranged(0.1, 0.12, 0.01, ctx)}};
    ArgmaxVerdict v = argmax_stability(t, ctx);
    EXPECT_TRUE(v.stable);
    EXPECT_EQ(v.top1_index, 0u);
    EXPECT_EQ(v.top2_index, 1u);
}

TEST(Argmax, TiesAndOverlapsAreUnstable) {
    CaaContext ctx = context();
    CaaTensor tie{{2}, {mk_const(0.5, ctx), mk_const(0.5, ctx)}};
    ArgmaxVerdict v = argmax_stability(tie, ctx);
    EXPECT_FALSE(v.stable);
    EXPECT_TRUE(v.top1_tie);
    EXPECT_EQ(v.top1_index, 0u);

    CaaTensor overlap{{3}, {ranged(0.2, 0.5, 0, ctx), ranged(0.4, 0.7, 0, ctx), ranged(0, 0.1, 0, ctx)}};
    EXPECT_FALSE(argmax_stability(overlap, ctx).stable);

    // Disjoint rounded ranges, but the abs bound closes the gap at u_max.
    CaaTensor close{{2}, {ranged(0.5, 0.51, 1.0, ctx), ranged(0.49, 0.495, 1.0, ctx)}};
    EXPECT_FALSE(argmax_stability(close, ctx).stable);
}

TEST(Report, PendulumStyleHasNoRelativeBound) {
    CaaContext ctx = context(11);
    ModelSpec m;
    m.name = "p";
    m.input_shape = {1};
    RunResult run;
    run.output = CaaTensor{{1}, {ranged(-6, 6, 3.0, ctx)}};
    AnalysisReport r = build_report(m, run, ctx, {}, std::nullopt, "x.json");
    const std::string json = emit_report(r);
    EXPECT_NE(json.find("\"rel_bound_u\": {\n        \"value\": null,\n        \"unbounded\": true"),
              std::string::npos)
        << json;
    EXPECT_NE(json.find("\"abs_bound_u\": {\n        \"value\": \""), std::string::npos);
    EXPECT_EQ(json, emit_report(build_report(m, run, ctx, {}, std::nullopt, "x.json")));
    EXPECT_THROW(build_report(m, run, ctx, {}, 0.6, "x.json"), Error);
}

TEST(Report, ClassificationFieldsAndEcho) {
    CaaContext ctx = context(11);
    ModelSpec m;
    m.name = "c";
    m.input_shape = {2};
    m.layers.push_back(SoftmaxSpec{});
    RunResult run;
    run.output = CaaTensor{{2}, {mk_const(0.75, ctx), mk_const(0.25, ctx)}};
    AnalysisReport r = build_report(m, run, ctx, {}, 0.6, "x.json");
    ASSERT_TRUE(r.argmax);
    EXPECT_TRUE(r.argmax->stable);
    EXPECT_EQ(r.precision->required_k, 8);
    EXPECT_EQ(r.max_abs_bound_u, 0.0);
    const std::string json = emit_report(r);
    EXPECT_NE(json.find("\"argmax_stable\": true"), std::string::npos);
    EXPECT_NE(json.find("\"nu\": \"9.0909090909"), std::string::npos) << json;
}

TEST(Report, FormatBoundRoundsUp) {
    EXPECT_EQ(format_bound(kUnbounded), "inf");
    for (double b : {0.1, 1.0 / 3.0, 123.456, 0x1p-30}) {
        EXPECT_GE(std::stod(format_bound(b, 3)), b);
        EXPECT_GE(oracle::Exact(format_bound(b, 17)), oracle::Exact(b));
    }
}
