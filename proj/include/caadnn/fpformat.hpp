#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace caadnn {

struct ExponentRange {
    int e_min;
    int e_max;
};

/// Binary floating-point format with k mantissa bits (implicit bit included),
/// emulated with round-to-nearest-even. The exponent range is unbounded
/// unless `exponent_range` is set, in which case results leaving it are
/// reported through RangeStatus (never wrapped or clamped).
struct FpFormat {
    static constexpr int kMinPrecision = 2;
    static constexpr int kMaxPrecision = 53;  // emulated values are held in binary64

    int k = 24;
    std::optional<ExponentRange> exponent_range;

    FpFormat() = default;
    explicit FpFormat(int precision, std::optional<ExponentRange> range = std::nullopt);

    // u = 2^(1-k), exact.
    double u() const;

    static FpFormat binary32() { return FpFormat(24, ExponentRange{-126, 127}); }
    static FpFormat binary64() { return FpFormat(53, ExponentRange{-1022, 1023}); }
};

// Counters for emulated results that left the configured exponent range.
struct RangeStatus {
    std::atomic<std::uint64_t> overflow{0};
    std::atomic<std::uint64_t> underflow{0};

    bool flagged() const { return overflow.load() != 0 || underflow.load() != 0; }
};

/// Emulation format plus the certification limit u_max = 2^u_max_log2.
/// CAA bounds computed under this context hold for every precision whose
/// unit is at most u_max.
struct FpContext {
    FpFormat format;
    int u_max_log2 = -7;

    FpContext() = default;
    FpContext(FpFormat fmt, int u_max_exponent);

    double u_max() const;
    // Smallest precision covered by u_max: 1 - log2(u_max).
    int coarsest_k() const { return 1 - u_max_log2; }
    bool covers(const FpFormat& fmt) const { return fmt.k >= coarsest_k(); }
};

// Parses "2^-7" (also "2^(-7)" and "0x1p-7") into the exponent -7.
// Throws Error for anything that is not a power of two.
int parse_pow2(std::string_view text);
std::string format_pow2(int exponent);

double round_nearest(double x, const FpFormat& fmt, RangeStatus* status = nullptr);

// True when x is representable with k mantissa bits (exponent range ignored).
bool representable(double x, int k);

enum class FpOp { add, sub, mul, div, sqrt, exp, log, tanh };

std::string_view to_string(FpOp op);

/// Correctly rounded operation at precision fmt.k: the exact result of `op`
/// on the (binary64) operands is rounded once to the nearest k-bit value.
/// `b` is ignored for unary operations.
double fp_op(FpOp op, double a, double b, const FpFormat& fmt, RangeStatus* status = nullptr);

inline double fp_op(FpOp op, double a, const FpFormat& fmt, RangeStatus* status = nullptr) {
    return fp_op(op, a, 0.0, fmt, status);
}

}  // namespace caadnn
