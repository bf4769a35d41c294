#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "caadnn/error.hpp"
#include "caadnn/fpformat.hpp"
#include "oracle.hpp"

using caadnn::FpFormat;
using caadnn::FpOp;

using oracle::reference_round;

TEST(FpFormat, UnitAndValidation) {
    EXPECT_EQ(FpFormat(24).u(), std::ldexp(1.0, -23));
    EXPECT_EQ(FpFormat(8).u(), std::ldexp(1.0, -7));
    EXPECT_THROW(FpFormat(1), caadnn::Error);
    EXPECT_THROW(FpFormat(54), caadnn::Error);
}

TEST(FpFormat, ContextCoverage) {
    caadnn::FpContext ctx(FpFormat(16), -7);
    EXPECT_EQ(ctx.coarsest_k(), 8);
    EXPECT_TRUE(ctx.covers(FpFormat(8)));
    EXPECT_FALSE(ctx.covers(FpFormat(7)));
    EXPECT_EQ(ctx.u_max(), std::ldexp(1.0, -7));
}

TEST(FpFormat, ParsePowersOfTwo) {
    EXPECT_EQ(caadnn::parse_pow2("2^-7"), -7);
    EXPECT_EQ(caadnn::parse_pow2("2^(-15)"), -15);
    EXPECT_EQ(caadnn::parse_pow2("0x1p-7"), -7);
    EXPECT_EQ(caadnn::parse_pow2("0.0078125"), -7);
    EXPECT_THROW(caadnn::parse_pow2("0.01"), caadnn::Error);
    EXPECT_THROW(caadnn::parse_pow2("2^x"), caadnn::Error);
    EXPECT_EQ(caadnn::format_pow2(-7), "2^-7");
}

TEST(FpFormat, RoundNearestTiesToEven) {
    FpFormat f(3);  // significands 1.00, 1.01, 1.10, 1.11
    EXPECT_EQ(caadnn::round_nearest(1.125, f), 1.0);   // tie, even below
    EXPECT_EQ(caadnn::round_nearest(1.375, f), 1.5);   // tie, even above
    EXPECT_EQ(caadnn::round_nearest(1.3, f), 1.25);
    EXPECT_TRUE(caadnn::representable(1.25, 3));
    EXPECT_FALSE(caadnn::representable(1.125, 3));
}

TEST(FpFormat, OperationsAreCorrectlyRounded) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-50.0, 50.0);
    for (int k : {4, 8, 11, 16, 24, 53}) {
        FpFormat f(k);
        for (int i = 0; i < 3000; ++i) {
            double a = caadnn::round_nearest(d(rng), f);
            double b = caadnn::round_nearest(d(rng), f);
            oracle::Exact A(a), B(b);
            ASSERT_EQ(caadnn::fp_op(FpOp::add, a, b, f), reference_round(A + B, k)) << k << " " << a << " " << b;
            ASSERT_EQ(caadnn::fp_op(FpOp::sub, a, b, f), reference_round(A - B, k));
            ASSERT_EQ(caadnn::fp_op(FpOp::mul, a, b, f), reference_round(A * B, k));
            if (b != 0.0) {
                ASSERT_EQ(caadnn::fp_op(FpOp::div, a, b, f), reference_round(A / B, k));
            }
            const double pa = std::fabs(a);
            ASSERT_EQ(caadnn::fp_op(FpOp::sqrt, pa, f), reference_round(boost::multiprecision::sqrt(oracle::Exact(pa)), k));
            const double small = a / 8.0;
            ASSERT_EQ(caadnn::fp_op(FpOp::exp, small, f), reference_round(boost::multiprecision::exp(oracle::Exact(small)), k));
            ASSERT_EQ(caadnn::fp_op(FpOp::tanh, small, f), reference_round(boost::multiprecision::tanh(oracle::Exact(small)), k));
            if (pa > 0.0) {
                ASSERT_EQ(caadnn::fp_op(FpOp::log, pa, f), reference_round(boost::multiprecision::log(oracle::Exact(pa)), k));
            }
        }
    }
}

TEST(FpFormat, TiesResolvedByResidual) {
    // 1 + 2^-3 + 2^-40 is just above the 3-bit midpoint 1.125; the binary64
    // sum is exact here but at k = 3 must round up to 1.25.
    FpFormat f(3);
    EXPECT_EQ(caadnn::fp_op(FpOp::add, 1.125, std::ldexp(1.0, -40), f), 1.25);
    // Below binary64 resolution: a + b rounds to a midpoint in binary64.
    FpFormat g(52);
    const double a = 1.0 + std::ldexp(1.0, -52);
    EXPECT_EQ(caadnn::fp_op(FpOp::add, a, -std::ldexp(1.0, -80), g),
              reference_round(oracle::Exact(a) - boost::multiprecision::ldexp(oracle::Exact(1), -80), 52));
}

TEST(FpFormat, RangeStatusCountsOverflow) {
    caadnn::RangeStatus status;
    FpFormat f(11, caadnn::ExponentRange{-14, 15});
    caadnn::fp_op(FpOp::mul, 300.0, 300.0, f, &status);
    EXPECT_EQ(status.overflow.load(), 1u);
    caadnn::fp_op(FpOp::mul, 1e-4, 1e-4, f, &status);
    EXPECT_EQ(status.underflow.load(), 1u);
    EXPECT_TRUE(status.flagged());
}

TEST(FpFormat, DomainErrors) {
    FpFormat f(24);
    EXPECT_THROW(caadnn::fp_op(FpOp::div, 1.0, 0.0, f), caadnn::DomainError);
    EXPECT_THROW(caadnn::fp_op(FpOp::sqrt, -1.0, f), caadnn::DomainError);
    EXPECT_THROW(caadnn::fp_op(FpOp::log, -1.0, f), caadnn::DomainError);
}
