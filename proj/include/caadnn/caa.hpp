#pragma once

#include <cstdint>
#include <limits>
#include <optional>

#include "caadnn/fpformat.hpp"
#include "caadnn/interval.hpp"

namespace caadnn {

using QuantityId = std::uint64_t;

// Process-unique, monotonically increasing; safe to call from any thread.
QuantityId next_quantity_id();

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// Per-operation bound on the elementary rounding error, in units of u.
// 1/2 is exact for correctly rounded round-to-nearest; use 1 to model a
// faithful-only implementation of a function.
struct ElementaryBounds {
    double add = 0.5;
    double sub = 0.5;
    double mul = 0.5;
    double div = 0.5;
    double sqrt = 0.5;
    double exp = 0.5;
    double log = 0.5;
    double tanh = 0.5;

    double get(FpOp op) const;
    void set(FpOp op, double bound);
};

/// Everything a CAA operation needs besides its operands: the emulated
/// format, the certification limit u_max, the interval backend precision
/// and the elementary bounds. Immutable once built.
class CaaContext {
public:
    explicit CaaContext(FpContext fp = {}, mpfr_prec_t backend_precision = kDefaultBackendPrecision,
                        ElementaryBounds eps = {}, RangeStatus* status = nullptr);

    const FpContext& fp() const noexcept { return fp_; }
    const FpFormat& format() const noexcept { return fp_.format; }
    double u_max() const noexcept { return u_max_; }
    mpfr_prec_t backend_precision() const noexcept { return prec_; }
    double eps(FpOp op) const { return eps_.get(op); }
    const ElementaryBounds& elementary() const noexcept { return eps_; }
    RangeStatus* status() const noexcept { return status_; }

private:
    FpContext fp_;
    double u_max_;
    mpfr_prec_t prec_;
    ElementaryBounds eps_;
    RangeStatus* status_;
};

struct QuantityParts {
    double fp_value = 0.0;
    // Enclosure of the exact value of the concrete run that produced
    // fp_value; only used to report actual_error.
    Interval reference;
    double abs_bound = 0.0;
    double rel_bound = 0.0;
    Interval exact_range;
    Interval rounded_range;
};

/// A floating-point quantity under combined absolute/relative affine
/// arithmetic.
///
/// With q the exact value and q^ the value computed at any precision whose
/// unit u is at most the context's u_max:
///   |q^ - q| <= abs_bound * u                      (when finite)
///   q^ = q (1 + e u) with |e| <= rel_bound         (when finite)
///   q in exact_range, q^ in rounded_range.
/// Copies share the id; that is what lets x - x and x / x decorrelate.
class Quantity {
public:
    static Quantity make(QuantityParts parts);

    QuantityId id() const noexcept { return id_; }
    double fp_value() const noexcept { return fp_value_; }
    // Enclosure of fp_value minus the exact result of the concrete run.
    Interval actual_error() const;
    const Interval& reference() const noexcept { return reference_; }
    double abs_bound() const noexcept { return abs_bound_; }
    double rel_bound() const noexcept { return rel_bound_; }
    const Interval& exact_range() const noexcept { return exact_range_; }
    const Interval& rounded_range() const noexcept { return rounded_range_; }
    std::optional<QuantityId> lower_label() const noexcept { return lower_label_; }
    std::optional<QuantityId> upper_label() const noexcept { return upper_label_; }

    // Known to be 0 in exact and rounded semantics.
    bool is_exact_zero() const;
    // Known to be exactly one constant value c with no error at all.
    bool is_exact_constant(double c) const;

private:
    Quantity(QuantityId id, QuantityParts&& parts);
    friend Quantity attach_bounds(const Quantity&, const Quantity*, const Quantity*);
    friend Quantity with_fresh_id(const Quantity&);
    friend Quantity refine(const Quantity&, const CaaContext&);
    friend Quantity restrict_ranges(const Quantity&, const Interval&, const Interval&, const CaaContext&);

    QuantityId id_ = 0;
    double fp_value_ = 0.0;
    Interval reference_;
    double abs_bound_ = 0.0;
    double rel_bound_ = 0.0;
    Interval exact_range_;
    Interval rounded_range_;
    std::optional<QuantityId> lower_label_;
    std::optional<QuantityId> upper_label_;
};

// Magnitudes of the amplification factors r/(r+s) and s/(r+s) of an
// addition (sign = +1) or subtraction (sign = -1). Unbounded when r + s may
// vanish.
struct PropagationTerms {
    Interval alpha_r;
    Interval alpha_s;
    double eps_op;
};

PropagationTerms addition_terms(const Quantity& r, const Quantity& s, int sign, const CaaContext& ctx);

Quantity mk_const(double x, const CaaContext& ctx);
// Throws DomainError when value is outside range.
Quantity mk_input(const Interval& range, double value, const CaaContext& ctx);

Quantity caa_add(const Quantity& r, const Quantity& s, const CaaContext& ctx);
Quantity caa_sub(const Quantity& r, const Quantity& s, const CaaContext& ctx);
Quantity caa_mul(const Quantity& r, const Quantity& s, const CaaContext& ctx);
Quantity caa_div(const Quantity& r, const Quantity& s, const CaaContext& ctx);
Quantity caa_sqrt(const Quantity& r, const CaaContext& ctx);
Quantity caa_exp(const Quantity& r, const CaaContext& ctx);
Quantity caa_log(const Quantity& r, const CaaContext& ctx);
Quantity caa_tanh(const Quantity& r, const CaaContext& ctx);
Quantity caa_neg(const Quantity& r);
Quantity caa_max(const Quantity& r, const Quantity& s, const CaaContext& ctx);
Quantity caa_min(const Quantity& r, const Quantity& s, const CaaContext& ctx);
// 1 / (1 + exp(-x)), evaluated as exactly that sequence of operations.
Quantity caa_sigmoid(const Quantity& x, const CaaContext& ctx);

// Tightens each of abs_bound / rel_bound with the other and intersects the
// rounded range with what the bounds imply. Idempotent, never loosens.
Quantity refine(const Quantity& q, const CaaContext& ctx);
QuantityParts refine(QuantityParts parts, const CaaContext& ctx);

// Copy of q (same id) labelled with quantities known to bound it from
// below / above in both exact and rounded semantics. Null leaves a label
// unchanged.
Quantity attach_bounds(const Quantity& q, const Quantity* lower, const Quantity* upper);

Quantity with_fresh_id(const Quantity& q);

// Same quantity (id and labels kept) with its exact range intersected with
// `exact_hull` and its rounded range with `rounded_hull`, then refined. Both
// hulls must be known to contain the respective values.
Quantity restrict_ranges(const Quantity& q, const Interval& exact_hull, const Interval& rounded_hull,
                         const CaaContext& ctx);

}  // namespace caadnn
