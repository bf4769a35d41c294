#pragma once

#include <iosfwd>
#include <string>

#include "caadnn/bigfloat.hpp"

namespace caadnn {

// Working precision of the interval backend, in bits.
inline constexpr mpfr_prec_t kDefaultBackendPrecision = 128;

// Reads CAADNN_BACKEND_PRECISION from the environment; falls back to
// kDefaultBackendPrecision when unset. Throws Error on malformed values.
mpfr_prec_t backend_precision_from_env();

/// Closed, non-empty interval [lo, hi] over the extended reals.
///
/// Endpoints live in the arbitrary-precision backend. Every operation below
/// rounds its lower endpoint toward -inf and its upper endpoint toward +inf,
/// so the result encloses the exact image of the operands. The working
/// precision travels with the values: a result carries the larger of its
/// operands' precisions.
class Interval {
public:
    // [0, 0] at the default backend precision.
    Interval() : Interval(0.0, 0.0, kDefaultBackendPrecision) {}

    // [lo, hi]; lo rounded down and hi rounded up when prec < 53.
    Interval(double lo, double hi, mpfr_prec_t prec = kDefaultBackendPrecision);

    Interval(BigFloat lo, BigFloat hi);

    static Interval point(double x, mpfr_prec_t prec = kDefaultBackendPrecision) {
        return Interval(x, x, prec);
    }
    static Interval entire(mpfr_prec_t prec = kDefaultBackendPrecision);
    static Interval zero(mpfr_prec_t prec = kDefaultBackendPrecision) { return point(0.0, prec); }

    const BigFloat& lo() const noexcept { return lo_; }
    const BigFloat& hi() const noexcept { return hi_; }
    mpfr_prec_t precision() const noexcept { return lo_.precision(); }

    // Endpoints converted outward to binary64.
    double lo_down() const { return lo_.to_double(MPFR_RNDD); }
    double hi_up() const { return hi_.to_double(MPFR_RNDU); }

    bool is_point() const { return compare(lo_, hi_) == 0; }
    bool is_bounded() const { return !lo_.is_inf() && !hi_.is_inf(); }
    bool is_zero() const { return lo_.is_zero() && hi_.is_zero(); }
    bool contains(double x) const;
    bool contains_zero() const { return lo_.sign() <= 0 && hi_.sign() >= 0; }
    bool contains(const Interval& other) const;
    bool nonnegative() const { return lo_.sign() >= 0; }
    bool nonpositive() const { return hi_.sign() <= 0; }

    // sup |x| rounded up, inf |x| rounded down.
    double mag() const;
    double mig() const;
    // hi - lo rounded up.
    double width() const;

    std::string to_string(int digits = 17) const;

private:
    BigFloat lo_;
    BigFloat hi_;
};

std::ostream& operator<<(std::ostream& os, const Interval& x);

enum class BinaryOp { add, sub, mul, div, min, max };
enum class UnaryOp { neg, abs, sqrt, exp, log, tanh, sigmoid, square };

namespace ia {

Interval add(const Interval& a, const Interval& b);
Interval sub(const Interval& a, const Interval& b);
Interval mul(const Interval& a, const Interval& b);
// 0 in the interior of b (or b touching 0 with a straddling it) yields
// [-inf, +inf] and sets *crosses_zero. b == [0, 0] is a DomainError.
Interval div(const Interval& a, const Interval& b, bool* crosses_zero = nullptr);
Interval min(const Interval& a, const Interval& b);
Interval max(const Interval& a, const Interval& b);

Interval neg(const Interval& a);
Interval abs(const Interval& a);
Interval square(const Interval& a);
Interval sqrt(const Interval& a);
Interval exp(const Interval& a);
// log(0) = -inf; a.lo < 0 is a DomainError.
Interval log(const Interval& a);
Interval tanh(const Interval& a);
Interval sigmoid(const Interval& a);

Interval binary(BinaryOp op, const Interval& a, const Interval& b);
Interval unary(UnaryOp op, const Interval& a);

Interval hull(const Interval& a, const Interval& b);
// Intersection; when it is empty (which only happens with inconsistent
// inputs) the first argument is returned unchanged.
Interval intersect(const Interval& a, const Interval& b);

// a + [-r, r] for r >= 0 (r may be +inf).
Interval widen(const Interval& a, double r);
// a * [1 - r, 1 + r] for r >= 0, i.e. every value within relative distance r.
Interval widen_relative(const Interval& a, double r);
// Clamp to [lo, hi] (either may be infinite).
Interval clamp(const Interval& a, double lo, double hi);

}  // namespace ia
}  // namespace caadnn
