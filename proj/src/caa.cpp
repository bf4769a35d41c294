#include "caadnn/caa.hpp"

#include <atomic>
#include <cmath>
#include <utility>

#include "caadnn/directed.hpp"
#include "caadnn/error.hpp"

namespace caadnn {

namespace {

std::atomic<QuantityId> g_next_id{1};

// Amplification factor applied by tanh to a relative error bound, valid
// while rel_bound * u <= 1/4.
constexpr double kTanhRelFactor = 2.63;
constexpr double kTanhRelLimit = 0.25;

bool finite(double b) { return b < kUnbounded; }

// e combined with an incoming relative term t: bound of
// ((1 + t u)(1 + e u) - 1) / u = t + e + t e u over u in (0, u_max].
double compose_rel(double t, double e, double u_max) {
    return up::add(up::add(t, e), up::mul(up::mul(t, e), u_max));
}

// (exp(d * u_max) - 1) / u_max, rounded up: the worst relative error
// (in units of u) of exp(x + d u) against exp(x).
double exp_abs_to_rel(double d, double u_max, mpfr_prec_t prec) {
    if (d == 0.0) {
        return 0.0;
    }
    if (!finite(d)) {
        return kUnbounded;
    }
    BigFloat y(d, prec, MPFR_RNDU);
    mpfr_mul_d(y.get(), y.get(), u_max, MPFR_RNDU);
    mpfr_expm1(y.get(), y.get(), MPFR_RNDU);
    mpfr_div_d(y.get(), y.get(), u_max, MPFR_RNDU);
    return y.to_double(MPFR_RNDU);
}

// -log(1 - e * u_max) / u_max, rounded up: the worst absolute error (in
// units of u) of log(x (1 + e u)) against log(x). Requires e u_max < 1.
double log_rel_to_abs(double e, double u_max, mpfr_prec_t prec) {
    if (e == 0.0) {
        return 0.0;
    }
    BigFloat y(e, prec, MPFR_RNDU);
    mpfr_mul_d(y.get(), y.get(), u_max, MPFR_RNDU);
    if (mpfr_cmp_ui(y.get(), 1) >= 0) {
        return kUnbounded;
    }
    mpfr_neg(y.get(), y.get(), MPFR_RNDD);
    mpfr_log1p(y.get(), y.get(), MPFR_RNDD);
    mpfr_neg(y.get(), y.get(), MPFR_RNDU);
    mpfr_div_d(y.get(), y.get(), u_max, MPFR_RNDU);
    return y.to_double(MPFR_RNDU);
}

Interval round_widened(const Interval& pre_rounding, double eps_op, double u_max) {
    return ia::widen_relative(pre_rounding, up::mul(eps_op, u_max));
}

Quantity exact_constant_quantity(double c, const CaaContext& ctx) {
    const mpfr_prec_t prec = ctx.backend_precision();
    QuantityParts p{c, Interval::point(c, prec), 0.0, 0.0, Interval::point(c, prec),
                    Interval::point(c, prec)};
    return Quantity::make(std::move(p));
}

// Value of a quantity that is one known constant in both semantics.
std::optional<double> constant_value(const Quantity& q) {
    if (q.abs_bound() != 0.0 || !q.exact_range().is_point() || !q.rounded_range().is_point()) {
        return std::nullopt;
    }
    const double c = q.exact_range().lo_down();
    if (!q.is_exact_constant(c)) {
        return std::nullopt;
    }
    return c;
}

// Folds an operation on two exact constants when its result is a binary64
// value that every analysed precision represents; the rounding is then a
// no-op at each of them.
std::optional<Quantity> fold_constants(FpOp op, const Quantity& r, const Quantity& s, const CaaContext& ctx) {
    const std::optional<double> a = constant_value(r);
    const std::optional<double> b = constant_value(s);
    if (!a || !b) {
        return std::nullopt;
    }
    // Error term of a binary64 addition (TwoSum); zero iff the sum is exact.
    auto sum_error = [](double x, double y, double sum) {
        const double yy = sum - x;
        return (x - (sum - yy)) + (y - yy);
    };
    double v = 0.0;
    bool exact = false;
    switch (op) {
        case FpOp::add: v = *a + *b; exact = sum_error(*a, *b, v) == 0.0; break;
        case FpOp::sub: v = *a - *b; exact = sum_error(*a, -*b, v) == 0.0; break;
        case FpOp::mul: v = *a * *b; exact = std::fma(*a, *b, -v) == 0.0; break;
        case FpOp::div: v = *a / *b; exact = *b != 0.0 && std::fma(v, *b, -*a) == 0.0; break;
        default: return std::nullopt;
    }
    if (!exact || !std::isfinite(v) || !representable(v, ctx.fp().coarsest_k())) {
        return std::nullopt;
    }
    return exact_constant_quantity(v, ctx);
}

bool same_sign(const Interval& a, const Interval& b) {
    return (a.nonnegative() && b.nonnegative()) || (a.nonpositive() && b.nonpositive());
}

// r + sign * s without the decorrelation / exact-operand shortcuts.
Quantity add_general(const Quantity& r, const Quantity& s, int sign, const CaaContext& ctx) {
    const double u_max = ctx.u_max();
    const FpOp op = sign > 0 ? FpOp::add : FpOp::sub;
    const double e = ctx.eps(op);

    Interval x = sign > 0 ? ia::add(r.exact_range(), s.exact_range())
                          : ia::sub(r.exact_range(), s.exact_range());
    Interval pre = sign > 0 ? ia::add(r.rounded_range(), s.rounded_range())
                            : ia::sub(r.rounded_range(), s.rounded_range());
    Interval ref = sign > 0 ? ia::add(r.reference(), s.reference())
                            : ia::sub(r.reference(), s.reference());

    if (sign < 0) {
        // r <= s (resp. r >= s) holds in exact and rounded semantics, and
        // rounding preserves the sign of a difference.
        const bool r_below_s = r.upper_label() == s.id() || s.lower_label() == r.id();
        const bool r_above_s = r.lower_label() == s.id() || s.upper_label() == r.id();
        if (r_below_s) {
            x = ia::clamp(x, -kUnbounded, 0.0);
            pre = ia::clamp(pre, -kUnbounded, 0.0);
        }
        if (r_above_s) {
            x = ia::clamp(x, 0.0, kUnbounded);
            pre = ia::clamp(pre, 0.0, kUnbounded);
        }
    }

    // Absolute errors add, plus the elementary rounding of |r^ + s^|.
    const double incoming = up::add(r.abs_bound(), s.abs_bound());
    const double magnitude = up::min(pre.mag(), up::add(x.mag(), up::mul(incoming, u_max)));
    const double abs_bound = up::add(incoming, up::mul(e, magnitude));

    double rel_bound = kUnbounded;
    if (finite(r.rel_bound()) && finite(s.rel_bound()) && !x.contains_zero()) {
        PropagationTerms t = addition_terms(r, s, sign, ctx);
        double a = up::add(up::mul(r.rel_bound(), t.alpha_r.mag()), up::mul(s.rel_bound(), t.alpha_s.mag()));
        const Interval s_signed = sign > 0 ? s.exact_range() : ia::neg(s.exact_range());
        if (same_sign(r.exact_range(), s_signed)) {
            // alpha_r, alpha_s in [0, 1] with alpha_r + alpha_s = 1.
            a = up::min(a, up::max(r.rel_bound(), s.rel_bound()));
        }
        rel_bound = compose_rel(a, e, u_max);
    }

    QuantityParts p{fp_op(op, r.fp_value(), s.fp_value(), ctx.format(), ctx.status()), std::move(ref),
                    abs_bound, rel_bound, std::move(x), round_widened(pre, e, u_max)};
    return Quantity::make(refine(std::move(p), ctx));
}

}  // namespace

QuantityId next_quantity_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

double ElementaryBounds::get(FpOp op) const {
    switch (op) {
        case FpOp::add: return add;
        case FpOp::sub: return sub;
        case FpOp::mul: return mul;
        case FpOp::div: return div;
        case FpOp::sqrt: return sqrt;
        case FpOp::exp: return exp;
        case FpOp::log: return log;
        case FpOp::tanh: return tanh;
    }
    return 0.5;
}

void ElementaryBounds::set(FpOp op, double bound) {
    if (!(bound >= 0.0) || !finite(bound)) {
        throw Error("elementary bound for " + std::string(to_string(op)) + " must be finite and >= 0");
    }
    switch (op) {
        case FpOp::add: add = bound; break;
        case FpOp::sub: sub = bound; break;
        case FpOp::mul: mul = bound; break;
        case FpOp::div: div = bound; break;
        case FpOp::sqrt: sqrt = bound; break;
        case FpOp::exp: exp = bound; break;
        case FpOp::log: log = bound; break;
        case FpOp::tanh: tanh = bound; break;
    }
}

CaaContext::CaaContext(FpContext fp, mpfr_prec_t backend_precision, ElementaryBounds eps,
                       RangeStatus* status)
    : fp_(fp), u_max_(fp.u_max()), prec_(backend_precision), eps_(eps), status_(status) {
    if (!fp_.covers(fp_.format)) {
        throw Error("emulated precision k=" + std::to_string(fp_.format.k) + " has u = 2^" +
                    std::to_string(1 - fp_.format.k) + " > u_max = " + format_pow2(fp_.u_max_log2));
    }
    if (prec_ < 53) {
        throw Error("interval backend precision must be at least 53 bits");
    }
}

Quantity::Quantity(QuantityId id, QuantityParts&& parts)
    : id_(id),
      fp_value_(parts.fp_value),
      reference_(std::move(parts.reference)),
      abs_bound_(parts.abs_bound),
      rel_bound_(parts.rel_bound),
      exact_range_(std::move(parts.exact_range)),
      rounded_range_(std::move(parts.rounded_range)) {}

Quantity Quantity::make(QuantityParts parts) { return Quantity(next_quantity_id(), std::move(parts)); }

Interval Quantity::actual_error() const {
    return ia::sub(Interval::point(fp_value_, reference_.precision()), reference_);
}

bool Quantity::is_exact_zero() const {
    return abs_bound_ == 0.0 && exact_range_.is_zero() && rounded_range_.is_zero();
}

bool Quantity::is_exact_constant(double c) const {
    return abs_bound_ == 0.0 && exact_range_.is_point() && exact_range_.contains(c) &&
           rounded_range_.is_point() && rounded_range_.contains(c);
}

PropagationTerms addition_terms(const Quantity& r, const Quantity& s, int sign, const CaaContext& ctx) {
    Interval s_signed = sign > 0 ? s.exact_range() : ia::neg(s.exact_range());
    Interval denom = ia::add(r.exact_range(), s_signed);
    const mpfr_prec_t prec = ctx.backend_precision();
    if (denom.contains_zero()) {
        return {Interval::entire(prec), Interval::entire(prec), ctx.eps(sign > 0 ? FpOp::add : FpOp::sub)};
    }
    Interval ar = ia::div(r.exact_range(), denom);
    Interval as = ia::div(s_signed, denom);
    return {std::move(ar), std::move(as), ctx.eps(sign > 0 ? FpOp::add : FpOp::sub)};
}

QuantityParts refine(QuantityParts p, const CaaContext& ctx) {
    const double u_max = ctx.u_max();
    const Interval& x = p.exact_range;
    if (finite(p.abs_bound) && !x.contains_zero()) {
        p.rel_bound = up::min(p.rel_bound, up::div(p.abs_bound, x.mig()));
    }
    if (finite(p.rel_bound)) {
        p.abs_bound = up::min(p.abs_bound, up::mul(p.rel_bound, x.mag()));
    }
    if (finite(p.abs_bound)) {
        p.rounded_range = ia::intersect(p.rounded_range, ia::widen(x, up::mul(p.abs_bound, u_max)));
    }
    if (finite(p.rel_bound)) {
        p.rounded_range = ia::intersect(p.rounded_range, ia::widen_relative(x, up::mul(p.rel_bound, u_max)));
    }
    return p;
}

Quantity refine(const Quantity& q, const CaaContext& ctx) {
    QuantityParts p{q.fp_value(), q.reference(), q.abs_bound(), q.rel_bound(), q.exact_range(),
                    q.rounded_range()};
    p = refine(std::move(p), ctx);
    // Same value, sharper description: id and labels are kept.
    Quantity out = q;
    out.abs_bound_ = p.abs_bound;
    out.rel_bound_ = p.rel_bound;
    out.rounded_range_ = std::move(p.rounded_range);
    return out;
}

Quantity attach_bounds(const Quantity& q, const Quantity* lower, const Quantity* upper) {
    Quantity out = q;
    if (lower != nullptr) {
        out.lower_label_ = lower->id();
    }
    if (upper != nullptr) {
        out.upper_label_ = upper->id();
    }
    return out;
}

Quantity restrict_ranges(const Quantity& q, const Interval& exact_hull, const Interval& rounded_hull,
                         const CaaContext& ctx) {
    Quantity out = q;
    out.exact_range_ = ia::intersect(q.exact_range_, exact_hull);
    out.rounded_range_ = ia::intersect(q.rounded_range_, rounded_hull);
    return refine(out, ctx);
}

Quantity with_fresh_id(const Quantity& q) {
    Quantity out = q;
    out.id_ = next_quantity_id();
    out.lower_label_.reset();
    out.upper_label_.reset();
    return out;
}


Quantity mk_const(double x, const CaaContext& ctx) {
    if (!std::isfinite(x)) {
        throw DomainError("mk_const: non-finite constant");
    }
    if (representable(x, ctx.fp().coarsest_k())) {
        return exact_constant_quantity(x, ctx);
    }
    // One rounding at creation; exact at no analysed precision.
    const mpfr_prec_t prec = ctx.backend_precision();
    Interval point = Interval::point(x, prec);
    Interval rounded = ia::widen_relative(point, up::mul(0.5, ctx.u_max()));
    QuantityParts p{round_nearest(x, ctx.format(), ctx.status()), point, up::mul(0.5, std::fabs(x)), 0.5,
                    point, std::move(rounded)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity mk_input(const Interval& range, double value, const CaaContext& ctx) {
    if (!std::isfinite(value) || !range.contains(value)) {
        throw DomainError("mk_input: value " + std::to_string(value) + " outside its declared range " +
                          range.to_string(8));
    }
    const mpfr_prec_t prec = ctx.backend_precision();
    if (representable(value, ctx.fp().coarsest_k())) {
        QuantityParts p{value, Interval::point(value, prec), 0.0, 0.0, range, range};
        return Quantity::make(std::move(p));
    }
    Interval rounded = ia::widen_relative(range, up::mul(0.5, ctx.u_max()));
    QuantityParts p{round_nearest(value, ctx.format(), ctx.status()), Interval::point(value, prec),
                    up::mul(0.5, range.mag()), 0.5, range, std::move(rounded)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_add(const Quantity& r, const Quantity& s, const CaaContext& ctx) {
    if (s.is_exact_zero()) {
        return r;
    }
    if (r.is_exact_zero()) {
        return s;
    }
    if (auto c = fold_constants(FpOp::add, r, s, ctx)) {
        return *c;
    }
    return add_general(r, s, +1, ctx);
}

Quantity caa_sub(const Quantity& r, const Quantity& s, const CaaContext& ctx) {
    if (r.id() == s.id()) {
        return exact_constant_quantity(0.0, ctx);
    }
    if (s.is_exact_zero()) {
        return r;
    }
    if (r.is_exact_zero()) {
        return caa_neg(s);
    }
    if (auto c = fold_constants(FpOp::sub, r, s, ctx)) {
        return *c;
    }
    return add_general(r, s, -1, ctx);
}

Quantity caa_mul(const Quantity& r, const Quantity& s, const CaaContext& ctx) {
    if (r.is_exact_zero() || s.is_exact_zero()) {
        return exact_constant_quantity(0.0, ctx);
    }
    if (r.is_exact_constant(1.0)) {
        return s;
    }
    if (s.is_exact_constant(1.0)) {
        return r;
    }
    if (auto c = fold_constants(FpOp::mul, r, s, ctx)) {
        return *c;
    }
    const double u_max = ctx.u_max();
    const double e = ctx.eps(FpOp::mul);
    Interval x = ia::mul(r.exact_range(), s.exact_range());
    Interval pre = ia::mul(r.rounded_range(), s.rounded_range());

    // r^ s^ - r s = r (s^ - s) + s (r^ - r) + (r^ - r)(s^ - s),
    // or with one of the first two factors taken from the rounded side.
    const double dr = r.abs_bound();
    const double ds = s.abs_bound();
    const double mr = r.exact_range().mag();
    const double ms = s.exact_range().mag();
    double incoming = up::add(up::add(up::mul(mr, ds), up::mul(ms, dr)), up::mul(up::mul(dr, ds), u_max));
    incoming = up::min(incoming, up::add(up::mul(r.rounded_range().mag(), ds), up::mul(ms, dr)));
    incoming = up::min(incoming, up::add(up::mul(mr, ds), up::mul(s.rounded_range().mag(), dr)));
    const double abs_bound = up::add(incoming, up::mul(e, pre.mag()));

    double rel_bound = kUnbounded;
    if (finite(r.rel_bound()) && finite(s.rel_bound())) {
        const double er = r.rel_bound();
        const double es = s.rel_bound();
        const double t = up::add(up::add(er, es), up::mul(up::mul(er, es), u_max));
        rel_bound = compose_rel(t, e, u_max);
    }

    QuantityParts p{fp_op(FpOp::mul, r.fp_value(), s.fp_value(), ctx.format(), ctx.status()),
                    ia::mul(r.reference(), s.reference()), abs_bound, rel_bound, std::move(x),
                    round_widened(pre, e, u_max)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_div(const Quantity& r, const Quantity& s, const CaaContext& ctx) {
    if (s.exact_range().is_zero()) {
        throw DomainError("caa_div: divisor range is [0, 0]");
    }
    const Interval& xs = s.exact_range();
    const Interval& rs = s.rounded_range();
    // x / x is 1 unless x may be 0 (then 0 / 0 is possible).
    if (r.id() == s.id() && !xs.contains_zero() && !rs.contains_zero()) {
        return exact_constant_quantity(1.0, ctx);
    }
    if (s.is_exact_constant(1.0)) {
        return r;
    }
    if (r.is_exact_zero() && !xs.contains_zero() && !rs.contains_zero()) {
        return exact_constant_quantity(0.0, ctx);
    }
    if (auto c = fold_constants(FpOp::div, r, s, ctx)) {
        return *c;
    }
    const double u_max = ctx.u_max();
    const double e = ctx.eps(FpOp::div);
    Interval x = ia::div(r.exact_range(), xs);
    Interval pre = ia::div(r.rounded_range(), rs);

    double abs_bound = kUnbounded;
    double rel_bound = kUnbounded;
    if (!xs.contains_zero() && !rs.contains_zero()) {
        const double er = r.rel_bound();
        const double es = s.rel_bound();
        const double es_u = up::mul(es, u_max);
        if (finite(er) && finite(es) && es_u < 1.0) {
            // ((1 + er u)(1 + e u) / (1 + es u) - 1) / u
            //   = (er + e - es + er e u) / (1 + es u)
            const double num = up::add(up::add(up::add(er, e), es), up::mul(up::mul(er, e), u_max));
            rel_bound = up::div(num, up::sub_down(1.0, es_u));
        }
        // r^/s^ - r/s = (r^ - r)/s^ - r (s^ - s)/(s s^)
        const double t1 = up::div(r.abs_bound(), rs.mig());
        const double t2 = up::div(up::div(up::mul(s.abs_bound(), r.exact_range().mag()), xs.mig()), rs.mig());
        abs_bound = up::add(up::add(t1, t2), up::mul(e, pre.mag()));
    }

    QuantityParts p{fp_op(FpOp::div, r.fp_value(), s.fp_value(), ctx.format(), ctx.status()),
                    ia::div(r.reference(), s.reference()), abs_bound, rel_bound, std::move(x),
                    round_widened(pre, e, u_max)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_sqrt(const Quantity& r, const CaaContext& ctx) {
    if (r.exact_range().lo().sign() < 0) {
        throw DomainError("caa_sqrt: operand range " + r.exact_range().to_string(8) + " has negative values");
    }
    if (r.rounded_range().lo().sign() < 0) {
        throw DomainError("caa_sqrt: rounded operand range " + r.rounded_range().to_string(8) +
                          " has negative values");
    }
    if (r.is_exact_zero() || r.is_exact_constant(1.0)) {
        return r;
    }
    const double u_max = ctx.u_max();
    const double e = ctx.eps(FpOp::sqrt);
    Interval x = ia::sqrt(r.exact_range());
    Interval pre = ia::sqrt(r.rounded_range());
    Interval ref = ia::sqrt(ia::clamp(r.reference(), 0.0, kUnbounded));

    double rel_bound = kUnbounded;
    const double er = r.rel_bound();
    if (finite(er) && up::mul(er, u_max) < 1.0) {
        // sqrt(1 + er u) - 1 = er u / (sqrt(1 + er u) + 1)
        const double denom = 1.0 + up::sqrt_down(up::sub_down(1.0, up::mul(er, u_max)));
        rel_bound = compose_rel(up::div(er, denom), e, u_max);
    }
    double abs_bound = kUnbounded;
    const double dr = r.abs_bound();
    if (finite(dr)) {
        // |sqrt(r^) - sqrt(r)| = |r^ - r| / (sqrt(r^) + sqrt(r))
        const double denom = -up::add(-up::sqrt_down(r.rounded_range().mig()), -up::sqrt_down(r.exact_range().mig()));
        if (denom > 0.0) {
            abs_bound = up::add(up::div(dr, denom), up::mul(e, pre.mag()));
        } else if (dr == 0.0) {
            abs_bound = up::mul(e, pre.mag());
        }
    }

    QuantityParts p{fp_op(FpOp::sqrt, r.fp_value(), ctx.format(), ctx.status()), std::move(ref), abs_bound,
                    rel_bound, std::move(x), round_widened(pre, e, u_max)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_exp(const Quantity& r, const CaaContext& ctx) {
    if (r.is_exact_zero()) {
        return exact_constant_quantity(1.0, ctx);
    }
    const double u_max = ctx.u_max();
    const double e = ctx.eps(FpOp::exp);
    Interval x = ia::exp(r.exact_range());
    Interval pre = ia::exp(r.rounded_range());

    // e^(q + d u) = e^q (1 + (e^(d u) - 1)/u * u)
    double rel_bound = kUnbounded;
    if (finite(r.abs_bound())) {
        rel_bound = compose_rel(exp_abs_to_rel(r.abs_bound(), u_max, ctx.backend_precision()), e, u_max);
    }
    QuantityParts p{fp_op(FpOp::exp, r.fp_value(), ctx.format(), ctx.status()), ia::exp(r.reference()),
                    kUnbounded, rel_bound, std::move(x), round_widened(pre, e, u_max)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_log(const Quantity& r, const CaaContext& ctx) {
    if (r.exact_range().lo().sign() < 0) {
        throw DomainError("caa_log: operand range " + r.exact_range().to_string(8) + " has negative values");
    }
    if (r.rounded_range().lo().sign() < 0) {
        throw DomainError("caa_log: rounded operand range " + r.rounded_range().to_string(8) +
                          " has negative values");
    }
    const double u_max = ctx.u_max();
    if (r.is_exact_constant(1.0)) {
        return exact_constant_quantity(0.0, ctx);
    }
    const double e = ctx.eps(FpOp::log);
    Interval x = ia::log(r.exact_range());
    Interval pre = ia::log(r.rounded_range());
    Interval ref = ia::log(ia::clamp(r.reference(), 0.0, kUnbounded));

    // log(q (1 + er u)) = log(q) + log(1 + er u)
    double abs_bound = kUnbounded;
    if (finite(r.rel_bound())) {
        const double h = log_rel_to_abs(r.rel_bound(), u_max, ctx.backend_precision());
        abs_bound = up::add(h, up::mul(e, pre.mag()));
    }
    QuantityParts p{fp_op(FpOp::log, r.fp_value(), ctx.format(), ctx.status()), std::move(ref), abs_bound,
                    kUnbounded, std::move(x), round_widened(pre, e, u_max)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_tanh(const Quantity& r, const CaaContext& ctx) {
    if (r.is_exact_zero()) {
        return r;
    }
    const double u_max = ctx.u_max();
    const double e = ctx.eps(FpOp::tanh);
    Interval x = ia::tanh(r.exact_range());
    Interval pre = ia::tanh(r.rounded_range());

    // tanh is 1-Lipschitz: the absolute error passes through unamplified.
    double abs_bound = kUnbounded;
    if (finite(r.abs_bound())) {
        abs_bound = up::add(r.abs_bound(), up::mul(e, pre.mag()));
    }
    double rel_bound = kUnbounded;
    const double er = r.rel_bound();
    if (finite(er) && up::mul(er, u_max) <= kTanhRelLimit) {
        rel_bound = compose_rel(up::mul(kTanhRelFactor, er), e, u_max);
    }
    QuantityParts p{fp_op(FpOp::tanh, r.fp_value(), ctx.format(), ctx.status()), ia::tanh(r.reference()),
                    abs_bound, rel_bound, std::move(x), ia::clamp(round_widened(pre, e, u_max), -1.0, 1.0)};
    return Quantity::make(refine(std::move(p), ctx));
}

Quantity caa_neg(const Quantity& r) {
    QuantityParts p{-r.fp_value(), ia::neg(r.reference()), r.abs_bound(), r.rel_bound(),
                    ia::neg(r.exact_range()), ia::neg(r.rounded_range())};
    return Quantity::make(std::move(p));
}

namespace {

// r <= s in exact and rounded semantics.
bool provably_below(const Quantity& r, const Quantity& s) {
    return compare(r.exact_range().hi(), s.exact_range().lo()) <= 0 &&
           compare(r.rounded_range().hi(), s.rounded_range().lo()) <= 0;
}

Quantity select(const Quantity& r, const Quantity& s, bool take_max, const CaaContext& ctx) {
    if (r.id() == s.id()) {
        return r;
    }
    if (take_max) {
        if (provably_below(s, r)) return attach_bounds(r, &s, nullptr);
        if (provably_below(r, s)) return attach_bounds(s, &r, nullptr);
    } else {
        if (provably_below(r, s)) return attach_bounds(r, nullptr, &s);
        if (provably_below(s, r)) return attach_bounds(s, nullptr, &r);
    }
    // max and min are 1-Lipschitz in the sup norm. With every relative
    // bound below 1/u no operand changes sign under rounding, so the
    // selected value keeps the worse of the two relative bounds.
    const double u_max = ctx.u_max();
    const double abs_bound = up::max(r.abs_bound(), s.abs_bound());
    double rel_bound = up::max(r.rel_bound(), s.rel_bound());
    if (!(up::mul(rel_bound, u_max) < 1.0)) {
        rel_bound = kUnbounded;
    }
    const double fp = take_max ? std::fmax(r.fp_value(), s.fp_value()) : std::fmin(r.fp_value(), s.fp_value());
    auto pick = take_max ? &ia::max : &ia::min;
    QuantityParts p{fp, pick(r.reference(), s.reference()), abs_bound, rel_bound,
                    pick(r.exact_range(), s.exact_range()), pick(r.rounded_range(), s.rounded_range())};
    return Quantity::make(refine(std::move(p), ctx));
}

}  // namespace

Quantity caa_max(const Quantity& r, const Quantity& s, const CaaContext& ctx) { return select(r, s, true, ctx); }

Quantity caa_min(const Quantity& r, const Quantity& s, const CaaContext& ctx) { return select(r, s, false, ctx); }

Quantity caa_sigmoid(const Quantity& x, const CaaContext& ctx) {
    Quantity one = exact_constant_quantity(1.0, ctx);
    // Both summands are positive, so the addition never cancels.
    Quantity denom = caa_add(one, caa_exp(caa_neg(x), ctx), ctx);
    Quantity y = caa_div(one, denom, ctx);
    return restrict_ranges(y, ia::sigmoid(x.exact_range()), Interval(0.0, 1.0, ctx.backend_precision()), ctx);
}

}  // namespace caadnn
