#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "caadnn/caa.hpp"
#include "caadnn/error.hpp"
#include "oracle.hpp"

using namespace caadnn;
using oracle::Exact;

namespace {

CaaContext context(int k, int u_max_log2 = -7) { return CaaContext(FpContext(FpFormat(k), u_max_log2)); }

struct Tracked {
    Quantity q;
    Exact exact;
};

Tracked input(double v, const CaaContext& ctx) { return {mk_input(Interval::point(v), v, ctx), Exact(v)}; }

Tracked input_in(double lo, double hi, double v, const CaaContext& ctx) {
    return {mk_input(Interval(lo, hi), v, ctx), Exact(v)};
}

void expect_sound(const Tracked& t, const CaaContext& ctx) {
    EXPECT_EQ(oracle::violation(t.q, t.exact, ctx.format().u()), "");
}

}  // namespace

TEST(Caa, ExactConstantsAndInputs) {
    CaaContext ctx = context(24);
    Quantity three = mk_const(3.0, ctx);
    EXPECT_EQ(three.abs_bound(), 0.0);
    EXPECT_EQ(three.rel_bound(), 0.0);
    Quantity tenth = mk_const(0.1, ctx);
    EXPECT_EQ(tenth.rel_bound(), 0.5);
    EXPECT_GT(tenth.abs_bound(), 0.0);
    EXPECT_NE(tenth.fp_value(), 0.1);
    expect_sound({tenth, Exact(0.1)}, ctx);

    Quantity pixel = mk_input(Interval(0.0, 255.0), 17.0, ctx);
    EXPECT_EQ(pixel.abs_bound(), 0.0);
    EXPECT_THROW(mk_input(Interval(0.0, 1.0), 2.0, ctx), DomainError);
}

TEST(Caa, ContextRejectsPrecisionBelowUMax) {
    EXPECT_THROW(CaaContext(FpContext(FpFormat(7), -7)), Error);
    EXPECT_NO_THROW(CaaContext(FpContext(FpFormat(8), -7)));
}

TEST(Caa, SelfSubtractionAndDivisionDecorrelate) {
    CaaContext ctx = context(16);
    Quantity x = mk_input(Interval(-3.0, 5.0), 0.3, ctx);
    Quantity d = caa_sub(x, x, ctx);
    EXPECT_TRUE(d.is_exact_zero());
    Quantity y = mk_input(Interval(1.0, 5.0), 1.3, ctx);
    Quantity q = caa_div(y, y, ctx);
    EXPECT_TRUE(q.is_exact_constant(1.0));
    // x may be 0 here, so x / x is not claimed to be 1.
    EXPECT_FALSE(caa_div(x, x, ctx).is_exact_constant(1.0));
    // A copy keeps the identity; a fresh id does not.
    Quantity copy = x;
    EXPECT_TRUE(caa_sub(x, copy, ctx).is_exact_zero());
    EXPECT_FALSE(caa_sub(x, with_fresh_id(x), ctx).is_exact_zero());
}

TEST(Caa, NegationIsExact) {
    CaaContext ctx = context(16);
    Quantity x = mk_input(Interval(1.0, 2.0), 1.1, ctx);
    Quantity n = caa_neg(x);
    EXPECT_EQ(n.abs_bound(), x.abs_bound());
    EXPECT_EQ(n.rel_bound(), x.rel_bound());
    EXPECT_EQ(n.fp_value(), -x.fp_value());
    EXPECT_NE(n.id(), x.id());
}

TEST(Caa, AdditionOfSameSignKeepsRelativeBound) {
    CaaContext ctx = context(24);
    Quantity a = mk_input(Interval(1.0, 2.0), 1.1, ctx);
    Quantity b = mk_input(Interval(3.0, 4.0), 3.3, ctx);
    Quantity s = caa_add(a, b, ctx);
    // max(1/2, 1/2) + 1/2 + (1/2)(1/2) u_max
    EXPECT_NEAR(s.rel_bound(), 1.0 + 0.25 / 128.0, 1e-12);
    expect_sound({s, Exact(1.1) + Exact(3.3)}, ctx);
}

TEST(Caa, RelativeBoundUnboundedWhenRangeContainsZero) {
    CaaContext ctx = context(24);
    Quantity a = mk_input(Interval(-1.0, 2.0), 1.1, ctx);
    Quantity b = mk_input(Interval(-4.0, 3.0), 0.3, ctx);
    Quantity s = caa_add(a, b, ctx);
    EXPECT_EQ(s.rel_bound(), kUnbounded);
    EXPECT_LT(s.abs_bound(), kUnbounded);
}

TEST(Caa, ExpRelativeBoundFromAbsolute) {
    CaaContext ctx = context(16);
    // An input with abs_bound 1 and rel_bound 1/2 over [1, 2].
    QuantityParts p{1.5, Interval::point(1.5), 1.0, kUnbounded, Interval(1.0, 2.0), Interval(0.99, 2.01)};
    Quantity x = Quantity::make(p);
    Quantity e = caa_exp(x, ctx);
    // (exp(2^-7) - 1) 2^7 = 1.00391..., composed with 1/2.
    EXPECT_NEAR(e.rel_bound(), 1.50782, 1e-4);
}

TEST(Caa, LogAbsoluteBoundFromRelative) {
    CaaContext ctx = context(16);
    QuantityParts p{1.0, Interval::point(1.0), kUnbounded, 1.0, Interval(1.0, 1.0), Interval(0.99, 1.01)};
    Quantity x = Quantity::make(p);
    Quantity l = caa_log(x, ctx);
    const double incoming = -std::log1p(-1.0 / 128.0) * 128.0;
    EXPECT_GT(l.abs_bound(), incoming);
    EXPECT_LT(l.abs_bound(), incoming + 0.5 * 0.0101);
    EXPECT_GT(incoming, 1.0);  // "1 + elementary" would be unsound
}

TEST(Caa, DomainErrors) {
    CaaContext ctx = context(16);
    Quantity neg = mk_input(Interval(-1.0, 2.0), 1.0, ctx);
    EXPECT_THROW(caa_sqrt(neg, ctx), DomainError);
    EXPECT_THROW(caa_log(neg, ctx), DomainError);
    Quantity zero = mk_const(0.0, ctx);
    Quantity one = mk_const(1.0, ctx);
    EXPECT_THROW(caa_div(one, zero, ctx), DomainError);
}

TEST(Caa, DivisionByRangeContainingZeroIsUnbounded) {
    CaaContext ctx = context(16);
    Quantity num = mk_input(Interval(1.0, 2.0), 1.5, ctx);
    Quantity den = mk_input(Interval(-1.0, 2.0), 0.5, ctx);
    Quantity q = caa_div(num, den, ctx);
    EXPECT_EQ(q.abs_bound(), kUnbounded);
    EXPECT_EQ(q.rel_bound(), kUnbounded);
}

TEST(Caa, MaxOfSeparatedOperandsCopiesAndLabels) {
    CaaContext ctx = context(16);
    Quantity a = mk_input(Interval(0.0, 1.0), 0.5, ctx);
    Quantity b = mk_input(Interval(2.0, 3.0), 2.5, ctx);
    Quantity m = caa_max(a, b, ctx);
    EXPECT_EQ(m.id(), b.id());
    ASSERT_TRUE(m.lower_label().has_value());
    EXPECT_EQ(*m.lower_label(), a.id());
    Quantity d = caa_sub(a, m, ctx);
    EXPECT_LE(d.exact_range().hi_up(), 0.0);
    EXPECT_LE(d.rounded_range().hi_up(), 0.0);
    Quantity lo = caa_min(a, b, ctx);
    EXPECT_EQ(lo.id(), a.id());
}

TEST(Caa, MaxOfOverlappingOperands) {
    CaaContext ctx = context(16);
    Quantity a = mk_input(Interval(0.0, 2.0), 0.3, ctx);
    Quantity b = mk_input(Interval(1.0, 3.0), 1.7, ctx);
    Quantity m = caa_max(a, b, ctx);
    EXPECT_NE(m.id(), a.id());
    EXPECT_NE(m.id(), b.id());
    EXPECT_EQ(m.abs_bound(), std::max(a.abs_bound(), b.abs_bound()));
    expect_sound({m, Exact(1.7)}, ctx);
}

TEST(Caa, TanhAndSigmoidRanges) {
    CaaContext ctx = context(8);
    Quantity x = mk_input(Interval(-40.0, 40.0), 3.1, ctx);
    Quantity t = caa_tanh(x, ctx);
    EXPECT_GE(t.rounded_range().lo_down(), -1.0);
    EXPECT_LE(t.rounded_range().hi_up(), 1.0);
    Quantity s = caa_sigmoid(x, ctx);
    EXPECT_GE(s.rounded_range().lo_down(), 0.0);
    EXPECT_LE(s.rounded_range().hi_up(), 1.0);
    expect_sound({t, boost::multiprecision::tanh(Exact(3.1))}, ctx);
    expect_sound({s, 1 / (1 + boost::multiprecision::exp(-Exact(3.1)))}, ctx);
}

TEST(Caa, RefineIsIdempotentAndKeepsIdentity) {
    CaaContext ctx = context(16);
    Quantity a = mk_input(Interval(1.0, 2.0), 1.1, ctx);
    Quantity b = mk_input(Interval(0.5, 3.0), 0.7, ctx);
    Quantity p = caa_mul(a, b, ctx);
    Quantity r1 = refine(p, ctx);
    Quantity r2 = refine(r1, ctx);
    EXPECT_EQ(r1.id(), p.id());
    EXPECT_EQ(r1.abs_bound(), r2.abs_bound());
    EXPECT_EQ(r1.rel_bound(), r2.rel_bound());
    EXPECT_LE(r1.abs_bound(), p.abs_bound());
    EXPECT_TRUE(p.rounded_range().contains(r2.rounded_range()));
}

TEST(Caa, ElementaryBoundsConfigurable) {
    ElementaryBounds eps;
    eps.set(FpOp::exp, 1.0);
    EXPECT_EQ(eps.get(FpOp::exp), 1.0);
    EXPECT_THROW(eps.set(FpOp::add, -1.0), Error);
    CaaContext faithful(FpContext(FpFormat(16), -7), kDefaultBackendPrecision, eps);
    CaaContext nearest = context(16);
    Quantity x = mk_input(Interval(0.0, 1.0), 0.5, nearest);
    EXPECT_GT(caa_exp(x, faithful).rel_bound(), caa_exp(x, nearest).rel_bound());
}

TEST(Caa, ActualErrorEnclosesDifference) {
    CaaContext ctx = context(11);
    Quantity a = mk_input(Interval(1.0, 2.0), 1.1, ctx);
    Quantity b = mk_input(Interval(1.0, 2.0), 1.7, ctx);
    Quantity p = caa_mul(a, b, ctx);
    Interval err = p.actual_error();
    const Exact truth = Exact(p.fp_value()) - Exact(1.1) * Exact(1.7);
    EXPECT_LE(oracle::lower(err), truth);
    EXPECT_GE(oracle::upper(err), truth);
    EXPECT_LE(err.mag(), p.abs_bound() * ctx.format().u());
}

// Random expression chains in every supported operation, at several
// precisions, checked against the Boost.Multiprecision oracle.
class CaaSoundness : public ::testing::TestWithParam<int> {};

TEST_P(CaaSoundness, RandomChains) {
    const int k = GetParam();
    CaaContext ctx = context(k);
    std::mt19937_64 rng(1234 + k);
    std::uniform_real_distribution<double> val(-3.0, 3.0);
    std::uniform_real_distribution<double> wid(0.0, 0.5);
    std::uniform_int_distribution<int> pick(0, 11);
    int checked = 0;
    for (int trial = 0; trial < 400; ++trial) {
        std::vector<Tracked> pool;
        for (int i = 0; i < 3; ++i) {
            double v = val(rng);
            double w = wid(rng);
            pool.push_back(input_in(v - w, v + wid(rng), v, ctx));
        }
        for (int step = 0; step < 6; ++step) {
            std::uniform_int_distribution<size_t> idx(0, pool.size() - 1);
            const Tracked& a = pool[idx(rng)];
            const Tracked& b = pool[idx(rng)];
            try {
                switch (pick(rng)) {
                    case 0: pool.push_back({caa_add(a.q, b.q, ctx), a.exact + b.exact}); break;
                    case 1: pool.push_back({caa_sub(a.q, b.q, ctx), a.exact - b.exact}); break;
                    case 2: pool.push_back({caa_mul(a.q, b.q, ctx), a.exact * b.exact}); break;
                    case 3: pool.push_back({caa_div(a.q, b.q, ctx), a.exact / b.exact}); break;
                    case 4: pool.push_back({caa_sqrt(a.q, ctx), boost::multiprecision::sqrt(a.exact)}); break;
                    case 5: pool.push_back({caa_exp(a.q, ctx), boost::multiprecision::exp(a.exact)}); break;
                    case 6: pool.push_back({caa_log(a.q, ctx), boost::multiprecision::log(a.exact)}); break;
                    case 7: pool.push_back({caa_tanh(a.q, ctx), boost::multiprecision::tanh(a.exact)}); break;
                    case 8: pool.push_back({caa_max(a.q, b.q, ctx), std::max(a.exact, b.exact)}); break;
                    case 9: pool.push_back({caa_min(a.q, b.q, ctx), std::min(a.exact, b.exact)}); break;
                    case 10: pool.push_back({caa_neg(a.q), -a.exact}); break;
                    case 11:
                        pool.push_back({caa_sigmoid(a.q, ctx), 1 / (1 + boost::multiprecision::exp(-a.exact))});
                        break;
                }
            } catch (const DomainError&) {
                continue;
            }
            const Tracked& t = pool.back();
            ASSERT_EQ(oracle::violation(t.q, t.exact, ctx.format().u()), "") << "k=" << k << " trial " << trial;
            ++checked;
        }
    }
    EXPECT_GT(checked, 1000);
}

INSTANTIATE_TEST_SUITE_P(Precisions, CaaSoundness, ::testing::Values(8, 11, 16, 24, 53));
