#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caadnn/caa.hpp"
#include "caadnn/engine.hpp"
#include "caadnn/model.hpp"

namespace caadnn {

/// Error budgets on a classifier's probability outputs, given a guaranteed
/// lower bound p_star on the top-1 probability. Both are rounded down.
struct Margin {
    double p_star = 1.0;
    double mu = 0.5;  // absolute: p_star - 1/2
    double nu = 0.0;  // relative: (2 p_star - 1) / (2 p_star + 1)
};

// Throws Error unless 1/2 < p_star <= 1.
Margin margins_from_confidence(double p_star);

// Largest element-wise absolute error on the softmax input that keeps every
// output within the relative margin: nu / (11/2), rounded down.
double softmax_input_tolerance(const Margin& margin);

// Relative output error bound of softmax for absolute input perturbations
// of magnitude at most `max_abs_input_error` (<= 1/8).
inline constexpr double kSoftmaxPropagationFactor = 5.5;
inline constexpr double kSoftmaxPropagationLimit = 0.125;
double softmax_propagation_bound(double max_abs_input_error);

struct PrecisionRequirement {
    // Smallest k >= u_max_floor_k satisfying the margin inequalities.
    std::optional<int> required_k;
    // Smallest k >= 2 satisfying them, ignoring where the bounds are valid.
    std::optional<int> inequality_k;
    // Coarsest precision the bounds are certified for: 1 - log2(u_max).
    int u_max_floor_k = 8;
};

/// Smallest k with 2^(1-k) <= u_max such that
///   rel_bound_u * 2^(1-k) <= nu   or   abs_bound_u * 2^(1-k) <= mu.
/// Infinite bounds never satisfy their inequality.
PrecisionRequirement required_precision(double rel_bound_u, double abs_bound_u, const Margin& margin, int u_max_log2);

struct ArgmaxVerdict {
    bool stable = false;
    std::size_t top1_index = 0;
    std::optional<std::size_t> top2_index;
    // Another output had exactly the top-1 fp value; the lowest index won.
    bool top1_tie = false;
};

/// top1 is the output with the largest emulated value. Stable iff the lower
/// end of its rounded range, widened by abs_bound * u_max, lies strictly
/// above the upper end of each other output's rounded range widened the
/// same way.
ArgmaxVerdict argmax_stability(const CaaTensor& outputs, const CaaContext& ctx);

struct OutputBound {
    double fp_value = 0.0;
    Interval exact_range;
    Interval rounded_range;
    double abs_bound_u = 0.0;
    double rel_bound_u = 0.0;
};

struct AnalysisReport {
    std::string model_name;
    std::string input_name;
    int u_max_log2 = -7;
    int emulate_k = 24;
    long backend_precision = 128;
    bool stable_softmax = true;
    ElementaryBounds elementary;
    std::optional<ExponentRange> exponent_range;
    std::uint64_t overflow_events = 0;
    std::uint64_t underflow_events = 0;

    std::vector<OutputBound> outputs;
    std::vector<LayerSummary> layers;
    double max_abs_bound_u = 0.0;
    double max_rel_bound_u = 0.0;

    std::optional<Margin> margin;
    std::optional<double> softmax_tolerance;
    std::optional<ArgmaxVerdict> argmax;
    std::optional<PrecisionRequirement> precision;

    std::vector<std::string> warnings;
};

/// Collects the run into a report. With p_star, the model must end in a
/// softmax layer; margins, the argmax verdict and the required precision
/// are then filled in.
AnalysisReport build_report(const ModelSpec& model, const RunResult& run, const CaaContext& ctx,
                            const EngineOptions& options, std::optional<double> p_star, std::string input_name = {});

// Deterministic JSON ("report_version": 1). Bounds are decimal strings
// rounded up; unbounded values are null with an "unbounded" flag.
std::string emit_report(const AnalysisReport& report);

// Decimal rendering of an upper bound, rounded up ("inf" when unbounded).
std::string format_bound(double bound, int digits = 6);

}  // namespace caadnn
