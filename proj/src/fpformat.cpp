#include "caadnn/fpformat.hpp"

#include <mpfr.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <string>

#include "caadnn/error.hpp"

namespace caadnn {

FpFormat::FpFormat(int precision, std::optional<ExponentRange> range)
    : k(precision), exponent_range(range) {
    if (k < kMinPrecision || k > kMaxPrecision) {
        throw Error("precision k=" + std::to_string(k) + " outside supported range [" +
                    std::to_string(kMinPrecision) + ", " + std::to_string(kMaxPrecision) + "]");
    }
    if (range && range->e_min > range->e_max) {
        throw Error("exponent range: e_min > e_max");
    }
}

double FpFormat::u() const { return std::ldexp(1.0, 1 - k); }

FpContext::FpContext(FpFormat fmt, int u_max_exponent) : format(fmt), u_max_log2(u_max_exponent) {
    if (u_max_log2 > -1) {
        throw Error("u_max must be at most 2^-1");
    }
    if (coarsest_k() > FpFormat::kMaxPrecision) {
        throw Error("u_max " + format_pow2(u_max_log2) + " is finer than binary64");
    }
}

double FpContext::u_max() const { return std::ldexp(1.0, u_max_log2); }

int parse_pow2(std::string_view text) {
    std::string s(text);
    auto fail = [&]() -> int { throw Error("not a power of two: '" + s + "'"); };
    if (s.rfind("2^", 0) == 0) {
        std::string e = s.substr(2);
        if (e.size() >= 2 && e.front() == '(' && e.back() == ')') {
            e = e.substr(1, e.size() - 2);
        }
        char* end = nullptr;
        errno = 0;
        long v = std::strtol(e.c_str(), &end, 10);
        if (e.empty() || *end != '\0' || errno != 0 || v < -1074 || v > 1023) {
            return fail();
        }
        return static_cast<int>(v);
    }
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || !(v > 0.0) || !std::isfinite(v)) {
        return fail();
    }
    int e = 0;
    double m = std::frexp(v, &e);
    if (m != 0.5) {
        return fail();
    }
    return e - 1;
}

std::string format_pow2(int exponent) { return "2^" + std::to_string(exponent); }

namespace {

// x rounded to k bits, ties to even; exact for finite normal binary64 x.
double round_bits(double x, int k) {
    if (x == 0.0 || !std::isfinite(x) || k >= 53) {
        return x;
    }
    int e = 0;
    std::frexp(x, &e);
    const double scaled = std::ldexp(x, k - e);
    return std::ldexp(std::nearbyint(scaled), e - k);
}

// Rounds t = s + err to k bits, where s is the binary64 rounding of t and
// err the exact residual. Only ties at precision k need the residual.
double round_with_residual(double s, double err, int k) {
    if (k >= 53) {
        return s;
    }
    const double r = round_bits(s, k);
    if (err == 0.0 || r == s) {
        return r;
    }
    if (round_bits(s, k + 1) != s) {
        return r;
    }
    // s sits exactly on a k-bit midpoint; the residual decides the side.
    const double other = 2.0 * s - r;
    const double up = r < other ? other : r;
    const double down = r < other ? r : other;
    return err > 0.0 ? up : down;
}

bool safe_magnitude(double x) { return std::isfinite(x) && (x == 0.0 || std::fabs(x) >= 0x1p-1000); }

struct MpfrScratch {
    mpfr_t a;
    mpfr_t b;
    mpfr_t r;
    MpfrScratch() {
        mpfr_init2(a, 53);
        mpfr_init2(b, 53);
        mpfr_init2(r, 53);
    }
    ~MpfrScratch() {
        mpfr_clear(a);
        mpfr_clear(b);
        mpfr_clear(r);
    }
    MpfrScratch(const MpfrScratch&) = delete;
    MpfrScratch& operator=(const MpfrScratch&) = delete;
};

double mpfr_op(FpOp op, double a, double b, int k) {
    thread_local MpfrScratch s;
    mpfr_set_d(s.a, a, MPFR_RNDN);
    mpfr_set_d(s.b, b, MPFR_RNDN);
    mpfr_set_prec(s.r, k);
    switch (op) {
        case FpOp::add: mpfr_add(s.r, s.a, s.b, MPFR_RNDN); break;
        case FpOp::sub: mpfr_sub(s.r, s.a, s.b, MPFR_RNDN); break;
        case FpOp::mul: mpfr_mul(s.r, s.a, s.b, MPFR_RNDN); break;
        case FpOp::div: mpfr_div(s.r, s.a, s.b, MPFR_RNDN); break;
        case FpOp::sqrt: mpfr_sqrt(s.r, s.a, MPFR_RNDN); break;
        case FpOp::exp: mpfr_exp(s.r, s.a, MPFR_RNDN); break;
        case FpOp::log: mpfr_log(s.r, s.a, MPFR_RNDN); break;
        case FpOp::tanh: mpfr_tanh(s.r, s.a, MPFR_RNDN); break;
    }
    return mpfr_get_d(s.r, MPFR_RNDN);
}

void check_range(double x, const FpFormat& fmt, RangeStatus* status) {
    if (status == nullptr || !fmt.exponent_range || x == 0.0 || std::isnan(x)) {
        return;
    }
    if (std::isinf(x) || std::ilogb(x) > fmt.exponent_range->e_max) {
        status->overflow.fetch_add(1, std::memory_order_relaxed);
    } else if (std::ilogb(x) < fmt.exponent_range->e_min) {
        status->underflow.fetch_add(1, std::memory_order_relaxed);
    }
}

}  // namespace

bool representable(double x, int k) { return round_bits(x, k) == x; }

double round_nearest(double x, const FpFormat& fmt, RangeStatus* status) {
    if (!std::isfinite(x)) {
        throw DomainError("round_nearest: non-finite input");
    }
    double r = round_bits(x, fmt.k);
    check_range(r, fmt, status);
    return r;
}

std::string_view to_string(FpOp op) {
    switch (op) {
        case FpOp::add: return "add";
        case FpOp::sub: return "sub";
        case FpOp::mul: return "mul";
        case FpOp::div: return "div";
        case FpOp::sqrt: return "sqrt";
        case FpOp::exp: return "exp";
        case FpOp::log: return "log";
        case FpOp::tanh: return "tanh";
    }
    return "?";
}

double fp_op(FpOp op, double a, double b, const FpFormat& fmt, RangeStatus* status) {
    const int k = fmt.k;
    double result = 0.0;
    bool done = false;
    switch (op) {
        case FpOp::add:
        case FpOp::sub: {
            const double bb = op == FpOp::add ? b : -b;
            const double s = a + bb;
            if (safe_magnitude(s)) {
                const double v = s - a;
                const double err = (a - (s - v)) + (bb - v);
                result = round_with_residual(s, err, k);
                done = true;
            }
            break;
        }
        case FpOp::mul: {
            const double p = a * b;
            if (safe_magnitude(p) && (p != 0.0 || a == 0.0 || b == 0.0)) {
                result = round_with_residual(p, std::fma(a, b, -p), k);
                done = true;
            }
            break;
        }
        case FpOp::div: {
            if (b == 0.0) {
                throw DomainError("fp_op: division by zero");
            }
            const double q = a / b;
            if (safe_magnitude(q) && (q != 0.0 || a == 0.0) && std::isfinite(b)) {
                const double rem = std::fma(-q, b, a);
                result = round_with_residual(q, rem == 0.0 ? 0.0 : (rem > 0.0) == (b > 0.0) ? 1.0 : -1.0, k);
                done = true;
            }
            break;
        }
        case FpOp::sqrt: {
            if (a < 0.0) {
                throw DomainError("fp_op: sqrt of a negative value");
            }
            const double s = std::sqrt(a);
            if (safe_magnitude(a)) {
                result = round_with_residual(s, std::fma(-s, s, a), k);
                done = true;
            }
            break;
        }
        case FpOp::log:
            if (a < 0.0) {
                throw DomainError("fp_op: log of a negative value");
            }
            break;
        case FpOp::exp:
        case FpOp::tanh:
            break;
    }
    if (!done) {
        result = mpfr_op(op, a, b, k);
    }
    check_range(result, fmt, status);
    return result;
}

}  // namespace caadnn
