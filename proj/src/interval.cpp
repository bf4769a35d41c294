#include "caadnn/interval.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <string>

#include "caadnn/error.hpp"

namespace caadnn {

std::string BigFloat::to_decimal(int digits, mpfr_rnd_t rnd) const {
    if (mpfr_inf_p(v_)) {
        return mpfr_sgn(v_) > 0 ? "inf" : "-inf";
    }
    if (mpfr_nan_p(v_)) {
        return "nan";
    }
    char* buf = nullptr;
    mpfr_asprintf(&buf, "%.*R*e", digits - 1, rnd, v_);
    std::string out(buf);
    mpfr_free_str(buf);
    return out;
}

mpfr_prec_t backend_precision_from_env() {
    const char* raw = std::getenv("CAADNN_BACKEND_PRECISION");
    if (raw == nullptr || *raw == '\0') {
        return kDefaultBackendPrecision;
    }
    char* end = nullptr;
    long bits = std::strtol(raw, &end, 10);
    if (*end != '\0' || bits < MPFR_PREC_MIN || bits > 1 << 16) {
        throw Error(std::string("CAADNN_BACKEND_PRECISION: invalid bit count '") + raw + "'");
    }
    return static_cast<mpfr_prec_t>(bits);
}

namespace {

using Rnd = mpfr_rnd_t;

mpfr_prec_t join_prec(const Interval& a, const Interval& b) {
    return std::max(a.precision(), b.precision());
}

// x * y with the interval convention 0 * inf = 0.
void mul_rnd(BigFloat& r, const BigFloat& x, const BigFloat& y, Rnd rnd) {
    if (x.is_zero() || y.is_zero()) {
        mpfr_set_zero(r.get(), 1);
        return;
    }
    mpfr_mul(r.get(), x.get(), y.get(), rnd);
}

void div_rnd(BigFloat& r, const BigFloat& x, const BigFloat& y, Rnd rnd) {
    if (x.is_zero()) {
        mpfr_set_zero(r.get(), 1);
        return;
    }
    mpfr_div(r.get(), x.get(), y.get(), rnd);
}

Interval make_product(const BigFloat& l1, const BigFloat& l2, const BigFloat& h1,
                      const BigFloat& h2, mpfr_prec_t prec) {
    BigFloat lo(prec);
    BigFloat hi(prec);
    mul_rnd(lo, l1, l2, MPFR_RNDD);
    mul_rnd(hi, h1, h2, MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval make_quotient(const BigFloat& l1, const BigFloat& l2, const BigFloat& h1,
                       const BigFloat& h2, mpfr_prec_t prec) {
    BigFloat lo(prec);
    BigFloat hi(prec);
    div_rnd(lo, l1, l2, MPFR_RNDD);
    div_rnd(hi, h1, h2, MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

BigFloat inf_value(int sign, mpfr_prec_t prec) {
    BigFloat r(prec);
    mpfr_set_inf(r.get(), sign);
    return r;
}

template <typename Fn>
Interval monotone(const Interval& a, Fn fn) {
    BigFloat lo(a.precision());
    BigFloat hi(a.precision());
    fn(lo.get(), a.lo().get(), MPFR_RNDD);
    fn(hi.get(), a.hi().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

}  // namespace

Interval::Interval(double lo, double hi, mpfr_prec_t prec)
    : lo_(lo, prec, MPFR_RNDD), hi_(hi, prec, MPFR_RNDU) {
    if (!(lo <= hi)) {
        throw DomainError("interval: lower endpoint exceeds upper endpoint");
    }
}

Interval::Interval(BigFloat lo, BigFloat hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.is_nan() || hi_.is_nan() || compare(lo_, hi_) > 0) {
        throw DomainError("interval: invalid endpoints");
    }
    if (lo_.precision() != hi_.precision()) {
        mpfr_prec_t p = std::max(lo_.precision(), hi_.precision());
        mpfr_prec_round(lo_.get(), p, MPFR_RNDD);
        mpfr_prec_round(hi_.get(), p, MPFR_RNDU);
    }
}

Interval Interval::entire(mpfr_prec_t prec) {
    return Interval(inf_value(-1, prec), inf_value(1, prec));
}

bool Interval::contains(double x) const {
    return mpfr_cmp_d(lo_.get(), x) <= 0 && mpfr_cmp_d(hi_.get(), x) >= 0;
}

bool Interval::contains(const Interval& other) const {
    return compare(lo_, other.lo_) <= 0 && compare(hi_, other.hi_) >= 0;
}

double Interval::mag() const {
    double l = -lo_down();
    double h = hi_up();
    return std::max(l, h);
}

double Interval::mig() const {
    if (contains_zero()) {
        return 0.0;
    }
    if (lo_.sign() > 0) {
        return lo_down();
    }
    return -hi_up();
}

double Interval::width() const {
    BigFloat w(precision());
    mpfr_sub(w.get(), hi_.get(), lo_.get(), MPFR_RNDU);
    return w.to_double(MPFR_RNDU);
}

std::string Interval::to_string(int digits) const {
    return "[" + lo_.to_decimal(digits, MPFR_RNDD) + ", " + hi_.to_decimal(digits, MPFR_RNDU) + "]";
}

std::ostream& operator<<(std::ostream& os, const Interval& x) { return os << x.to_string(); }

namespace ia {

Interval add(const Interval& a, const Interval& b) {
    const mpfr_prec_t prec = join_prec(a, b);
    BigFloat lo(prec);
    BigFloat hi(prec);
    mpfr_add(lo.get(), a.lo().get(), b.lo().get(), MPFR_RNDD);
    mpfr_add(hi.get(), a.hi().get(), b.hi().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval sub(const Interval& a, const Interval& b) {
    const mpfr_prec_t prec = join_prec(a, b);
    BigFloat lo(prec);
    BigFloat hi(prec);
    mpfr_sub(lo.get(), a.lo().get(), b.hi().get(), MPFR_RNDD);
    mpfr_sub(hi.get(), a.hi().get(), b.lo().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval mul(const Interval& a, const Interval& b) {
    const mpfr_prec_t prec = join_prec(a, b);
    const BigFloat& a1 = a.lo();
    const BigFloat& a2 = a.hi();
    const BigFloat& b1 = b.lo();
    const BigFloat& b2 = b.hi();
    if (a1.sign() >= 0) {
        if (b1.sign() >= 0) return make_product(a1, b1, a2, b2, prec);
        if (b2.sign() <= 0) return make_product(a2, b1, a1, b2, prec);
        return make_product(a2, b1, a2, b2, prec);
    }
    if (a2.sign() <= 0) {
        if (b1.sign() >= 0) return make_product(a1, b2, a2, b1, prec);
        if (b2.sign() <= 0) return make_product(a2, b2, a1, b1, prec);
        return make_product(a1, b2, a1, b1, prec);
    }
    if (b1.sign() >= 0) return make_product(a1, b2, a2, b2, prec);
    if (b2.sign() <= 0) return make_product(a2, b1, a1, b1, prec);

    BigFloat p(prec);
    BigFloat q(prec);
    mul_rnd(p, a1, b2, MPFR_RNDD);
    mul_rnd(q, a2, b1, MPFR_RNDD);
    BigFloat lo = compare(p, q) <= 0 ? std::move(p) : std::move(q);
    BigFloat r(prec);
    BigFloat s(prec);
    mul_rnd(r, a1, b1, MPFR_RNDU);
    mul_rnd(s, a2, b2, MPFR_RNDU);
    BigFloat hi = compare(r, s) >= 0 ? std::move(r) : std::move(s);
    return Interval(std::move(lo), std::move(hi));
}

Interval div(const Interval& a, const Interval& b, bool* crosses_zero) {
    const mpfr_prec_t prec = join_prec(a, b);
    const BigFloat& a1 = a.lo();
    const BigFloat& a2 = a.hi();
    const BigFloat& b1 = b.lo();
    const BigFloat& b2 = b.hi();
    if (b1.sign() > 0) {
        if (a1.sign() >= 0) return make_quotient(a1, b2, a2, b1, prec);
        if (a2.sign() <= 0) return make_quotient(a1, b1, a2, b2, prec);
        return make_quotient(a1, b1, a2, b1, prec);
    }
    if (b2.sign() < 0) {
        if (a1.sign() >= 0) return make_quotient(a2, b2, a1, b1, prec);
        if (a2.sign() <= 0) return make_quotient(a2, b1, a1, b2, prec);
        return make_quotient(a2, b2, a1, b2, prec);
    }
    if (b.is_zero()) {
        throw DomainError("interval division by [0, 0]");
    }
    if (crosses_zero != nullptr) {
        *crosses_zero = true;
    }
    if (a.is_zero()) {
        return Interval::zero(prec);
    }
    if (b1.is_zero()) {
        // b = [0, b2], b2 > 0
        if (a1.sign() >= 0) {
            BigFloat lo(prec);
            div_rnd(lo, a1, b2, MPFR_RNDD);
            return Interval(std::move(lo), inf_value(1, prec));
        }
        if (a2.sign() <= 0) {
            BigFloat hi(prec);
            div_rnd(hi, a2, b2, MPFR_RNDU);
            return Interval(inf_value(-1, prec), std::move(hi));
        }
    } else if (b2.is_zero()) {
        // b = [b1, 0], b1 < 0
        if (a1.sign() >= 0) {
            BigFloat hi(prec);
            div_rnd(hi, a1, b1, MPFR_RNDU);
            return Interval(inf_value(-1, prec), std::move(hi));
        }
        if (a2.sign() <= 0) {
            BigFloat lo(prec);
            div_rnd(lo, a2, b1, MPFR_RNDD);
            return Interval(std::move(lo), inf_value(1, prec));
        }
    }
    return Interval::entire(prec);
}

Interval min(const Interval& a, const Interval& b) {
    const mpfr_prec_t prec = join_prec(a, b);
    BigFloat lo(prec);
    BigFloat hi(prec);
    mpfr_min(lo.get(), a.lo().get(), b.lo().get(), MPFR_RNDD);
    mpfr_min(hi.get(), a.hi().get(), b.hi().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval max(const Interval& a, const Interval& b) {
    const mpfr_prec_t prec = join_prec(a, b);
    BigFloat lo(prec);
    BigFloat hi(prec);
    mpfr_max(lo.get(), a.lo().get(), b.lo().get(), MPFR_RNDD);
    mpfr_max(hi.get(), a.hi().get(), b.hi().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval neg(const Interval& a) {
    BigFloat lo(a.precision());
    BigFloat hi(a.precision());
    mpfr_neg(lo.get(), a.hi().get(), MPFR_RNDD);
    mpfr_neg(hi.get(), a.lo().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval abs(const Interval& a) {
    if (a.nonnegative()) {
        return a;
    }
    if (a.nonpositive()) {
        return neg(a);
    }
    BigFloat hi(a.precision());
    BigFloat m(a.precision());
    mpfr_neg(m.get(), a.lo().get(), MPFR_RNDU);
    mpfr_max(hi.get(), m.get(), a.hi().get(), MPFR_RNDU);
    return Interval(BigFloat(0.0, a.precision()), std::move(hi));
}

Interval square(const Interval& a) {
    Interval m = abs(a);
    BigFloat lo(a.precision());
    BigFloat hi(a.precision());
    mpfr_sqr(lo.get(), m.lo().get(), MPFR_RNDD);
    mpfr_sqr(hi.get(), m.hi().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval sqrt(const Interval& a) {
    if (a.lo().sign() < 0) {
        throw DomainError("interval sqrt of a range with negative values");
    }
    return monotone(a, [](mpfr_ptr r, mpfr_srcptr x, Rnd rnd) { mpfr_sqrt(r, x, rnd); });
}

Interval exp(const Interval& a) {
    return monotone(a, [](mpfr_ptr r, mpfr_srcptr x, Rnd rnd) { mpfr_exp(r, x, rnd); });
}

Interval log(const Interval& a) {
    if (a.lo().sign() < 0) {
        throw DomainError("interval log of a range with negative values");
    }
    return monotone(a, [](mpfr_ptr r, mpfr_srcptr x, Rnd rnd) { mpfr_log(r, x, rnd); });
}

Interval tanh(const Interval& a) {
    Interval r = monotone(a, [](mpfr_ptr r, mpfr_srcptr x, Rnd rnd) { mpfr_tanh(r, x, rnd); });
    return clamp(r, -1.0, 1.0);
}

Interval sigmoid(const Interval& a) {
    const mpfr_prec_t prec = a.precision();
    BigFloat t(prec);
    BigFloat lo(prec);
    BigFloat hi(prec);
    // lo = 1 / (1 + exp(-a.lo)) with every step pushed toward a smaller result.
    mpfr_neg(t.get(), a.lo().get(), MPFR_RNDU);
    mpfr_exp(t.get(), t.get(), MPFR_RNDU);
    mpfr_add_ui(t.get(), t.get(), 1, MPFR_RNDU);
    mpfr_ui_div(lo.get(), 1, t.get(), MPFR_RNDD);
    mpfr_neg(t.get(), a.hi().get(), MPFR_RNDD);
    mpfr_exp(t.get(), t.get(), MPFR_RNDD);
    mpfr_add_ui(t.get(), t.get(), 1, MPFR_RNDD);
    mpfr_ui_div(hi.get(), 1, t.get(), MPFR_RNDU);
    return clamp(Interval(std::move(lo), std::move(hi)), 0.0, 1.0);
}

Interval binary(BinaryOp op, const Interval& a, const Interval& b) {
    switch (op) {
        case BinaryOp::add: return add(a, b);
        case BinaryOp::sub: return sub(a, b);
        case BinaryOp::mul: return mul(a, b);
        case BinaryOp::div: return div(a, b);
        case BinaryOp::min: return min(a, b);
        case BinaryOp::max: return max(a, b);
    }
    throw Error("unknown binary op");
}

Interval unary(UnaryOp op, const Interval& a) {
    switch (op) {
        case UnaryOp::neg: return neg(a);
        case UnaryOp::abs: return abs(a);
        case UnaryOp::sqrt: return sqrt(a);
        case UnaryOp::exp: return exp(a);
        case UnaryOp::log: return log(a);
        case UnaryOp::tanh: return tanh(a);
        case UnaryOp::sigmoid: return sigmoid(a);
        case UnaryOp::square: return square(a);
    }
    throw Error("unknown unary op");
}

Interval hull(const Interval& a, const Interval& b) {
    const mpfr_prec_t prec = join_prec(a, b);
    BigFloat lo(prec);
    BigFloat hi(prec);
    mpfr_min(lo.get(), a.lo().get(), b.lo().get(), MPFR_RNDD);
    mpfr_max(hi.get(), a.hi().get(), b.hi().get(), MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval intersect(const Interval& a, const Interval& b) {
    const BigFloat& lo = compare(a.lo(), b.lo()) >= 0 ? a.lo() : b.lo();
    const BigFloat& hi = compare(a.hi(), b.hi()) <= 0 ? a.hi() : b.hi();
    if (compare(lo, hi) > 0) {
        return a;
    }
    if (&lo == &a.lo() && &hi == &a.hi()) {
        return a;
    }
    return Interval(lo, hi);
}

Interval widen(const Interval& a, double r) {
    if (r == 0.0) {
        return a;
    }
    BigFloat lo(a.precision());
    BigFloat hi(a.precision());
    mpfr_sub_d(lo.get(), a.lo().get(), r, MPFR_RNDD);
    mpfr_add_d(hi.get(), a.hi().get(), r, MPFR_RNDU);
    return Interval(std::move(lo), std::move(hi));
}

Interval widen_relative(const Interval& a, double r) {
    if (r == 0.0 || a.is_zero()) {
        return a;
    }
    BigFloat lo(a.precision());
    BigFloat hi(a.precision());
    mpfr_ui_sub(lo.get(), 1, BigFloat(r, a.precision(), MPFR_RNDU).get(), MPFR_RNDD);
    mpfr_add_d(hi.get(), BigFloat(1.0, a.precision()).get(), r, MPFR_RNDU);
    return mul(a, Interval(std::move(lo), std::move(hi)));
}

Interval clamp(const Interval& a, double lo, double hi) {
    return intersect(a, Interval(lo, hi, a.precision()));
}

}  // namespace ia
}  // namespace caadnn
