#pragma once

#include <cmath>
#include <limits>

// Upward-rounded binary64 arithmetic on nonnegative extended reals.
//
// Error bounds are stored as doubles that must never under-estimate the
// quantity they bound, so every bound computation goes through these
// helpers. Each one computes the round-to-nearest result, recovers the exact
// residual with an error-free transformation, and steps one ulp up when the
// rounded result fell below the exact value. Products follow the convention
// 0 * inf = 0 (a zero coefficient annihilates an unbounded error term).
namespace caadnn::up {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Below this magnitude the fma residual may underflow; results are then
// replaced by kTiny itself, which still bounds them from above.
inline constexpr double kTiny = 0x1p-960;

inline double next_up(double x) { return std::nextafter(x, kInf); }

inline double add(double a, double b) {
    const double s = a + b;
    if (!std::isfinite(s)) {
        return s;
    }
    const double bb = s - a;
    const double err = (a - (s - bb)) + (b - bb);
    return err > 0.0 ? next_up(s) : s;
}

inline double sub(double a, double b) { return add(a, -b); }

inline double mul(double a, double b) {
    if (a == 0.0 || b == 0.0) {
        return 0.0;
    }
    const double p = a * b;
    if (!std::isfinite(p)) {
        return p;
    }
    if (std::fabs(p) < kTiny) {
        return kTiny;
    }
    const double err = std::fma(a, b, -p);
    return err > 0.0 ? next_up(p) : p;
}

// a / b for b > 0.
inline double div(double a, double b) {
    if (a == 0.0) {
        return 0.0;
    }
    const double q = a / b;
    if (!std::isfinite(q) || !std::isfinite(b)) {
        return q;
    }
    if (std::fabs(q) < kTiny) {
        return kTiny;
    }
    const double rem = std::fma(-q, b, a);
    return rem > 0.0 ? next_up(q) : q;
}

// a - b rounded down.
inline double sub_down(double a, double b) { return -add(b, -a); }

// sqrt(x) rounded down, x >= 0.
inline double sqrt_down(double x) {
    const double s = std::sqrt(x);
    if (s == 0.0 || !std::isfinite(s)) {
        return s;
    }
    return std::fma(s, s, -x) > 0.0 ? std::nextafter(s, 0.0) : s;
}

inline double max(double a, double b) { return a < b ? b : a; }
inline double min(double a, double b) { return a < b ? a : b; }

}  // namespace caadnn::up
