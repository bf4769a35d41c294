#include "caadnn/analysis.hpp"

#include <mpfr.h>

#include <cmath>

#include "caadnn/directed.hpp"
#include "caadnn/error.hpp"
#include "json.hpp"

namespace caadnn {

namespace {

double div_down(double a, double b) { return -up::div(-a, b); }

}  // namespace

Margin margins_from_confidence(double p_star) {
    if (!(p_star > 0.5 && p_star <= 1.0)) {
        throw Error("p_star must lie in (0.5, 1], got " + std::to_string(p_star));
    }
    Margin m;
    m.p_star = p_star;
    // Exact: p_star and 1/2 are within a factor of two of each other.
    m.mu = p_star - 0.5;
    const double num = 2.0 * p_star - 1.0;  // exact for the same reason
    m.nu = div_down(num, up::add(2.0 * p_star, 1.0));
    return m;
}

double softmax_input_tolerance(const Margin& margin) { return div_down(margin.nu, kSoftmaxPropagationFactor); }

double softmax_propagation_bound(double max_abs_input_error) {
    if (!(max_abs_input_error <= kSoftmaxPropagationLimit)) {
        return kUnbounded;
    }
    return up::mul(kSoftmaxPropagationFactor, std::fabs(max_abs_input_error));
}

PrecisionRequirement required_precision(double rel_bound_u, double abs_bound_u, const Margin& margin,
                                        int u_max_log2) {
    PrecisionRequirement out;
    out.u_max_floor_k = 1 - u_max_log2;
    auto satisfied = [&](int k) {
        // b 2^(1-k) <= m  <=>  b <= m 2^(k-1); scaling the margin up is exact.
        const bool rel = rel_bound_u < kUnbounded && rel_bound_u <= std::ldexp(margin.nu, k - 1);
        const bool abs = abs_bound_u < kUnbounded && abs_bound_u <= std::ldexp(margin.mu, k - 1);
        return rel || abs;
    };
    if (!(rel_bound_u < kUnbounded) && !(abs_bound_u < kUnbounded)) {
        return out;
    }
    // Both conditions are monotone in k and hold once m 2^(k-1) overflows.
    for (int k = FpFormat::kMinPrecision; k <= 2100; ++k) {
        if (satisfied(k)) {
            out.inequality_k = k;
            out.required_k = std::max(k, out.u_max_floor_k);
            break;
        }
    }
    return out;
}

ArgmaxVerdict argmax_stability(const CaaTensor& outputs, const CaaContext& ctx) {
    ArgmaxVerdict v;
    const std::size_t n = outputs.size();
    if (n == 0) {
        return v;
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (outputs[i].fp_value() > outputs[v.top1_index].fp_value()) {
            v.top1_index = i;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i == v.top1_index) continue;
        if (outputs[i].fp_value() == outputs[v.top1_index].fp_value()) v.top1_tie = true;
        if (!v.top2_index || outputs[i].fp_value() > outputs[*v.top2_index].fp_value()) v.top2_index = i;
    }
    const double u_max = ctx.u_max();
    auto widened = [&](const Quantity& q) {
        // Unbounded abs_bound leaves only the rounded range itself.
        const double w = q.abs_bound() < kUnbounded ? up::mul(q.abs_bound(), u_max) : 0.0;
        return ia::widen(q.rounded_range(), w);
    };
    const Interval top = widened(outputs[v.top1_index]);
    v.stable = !v.top1_tie;
    for (std::size_t i = 0; i < n && v.stable; ++i) {
        if (i == v.top1_index) continue;
        const Interval other = widened(outputs[i]);
        if (compare(top.lo(), other.hi()) <= 0) {
            v.stable = false;
        }
    }
    return v;
}

AnalysisReport build_report(const ModelSpec& model, const RunResult& run, const CaaContext& ctx,
                            const EngineOptions& options, std::optional<double> p_star, std::string input_name) {
    AnalysisReport r;
    r.model_name = model.name;
    r.input_name = std::move(input_name);
    r.u_max_log2 = ctx.fp().u_max_log2;
    r.emulate_k = ctx.format().k;
    r.backend_precision = ctx.backend_precision();
    r.stable_softmax = options.stable_softmax;
    r.elementary = ctx.elementary();
    r.exponent_range = ctx.format().exponent_range;
    if (ctx.status() != nullptr) {
        r.overflow_events = ctx.status()->overflow.load();
        r.underflow_events = ctx.status()->underflow.load();
    }
    r.layers = run.layers;
    r.warnings = run.warnings;
    for (const Quantity& q : run.output.elements) {
        r.outputs.push_back({q.fp_value(), q.exact_range(), q.rounded_range(), q.abs_bound(), q.rel_bound()});
        r.max_abs_bound_u = std::max(r.max_abs_bound_u, q.abs_bound());
        r.max_rel_bound_u = std::max(r.max_rel_bound_u, q.rel_bound());
    }
    if (p_star) {
        if (model.layers.empty() || !std::holds_alternative<SoftmaxSpec>(model.layers.back())) {
            throw Error("classification analysis (--p-star) requires the model to end with a softmax layer");
        }
        r.margin = margins_from_confidence(*p_star);
        r.softmax_tolerance = softmax_input_tolerance(*r.margin);
        r.argmax = argmax_stability(run.output, ctx);
        r.precision = required_precision(r.max_rel_bound_u, r.max_abs_bound_u, *r.margin, r.u_max_log2);
    }
    return r;
}

std::string format_bound(double bound, int digits) {
    if (!(bound < kUnbounded)) {
        return "inf";
    }
    return BigFloat(bound, 53).to_decimal(digits, MPFR_RNDU);
}

namespace {

using ordered = nlohmann::ordered_json;

ordered bound_json(double bound) {
    if (bound < kUnbounded) {
        return ordered{{"value", format_bound(bound, 17)}, {"unbounded", false}};
    }
    return ordered{{"value", nullptr}, {"unbounded", true}};
}

ordered endpoint_json(const BigFloat& x, mpfr_rnd_t rnd) {
    ordered v = x.is_inf() ? ordered(nullptr) : ordered(x.to_decimal(20, rnd));
    return ordered{{"value", v}, {"rounding", rnd == MPFR_RNDD ? "down" : "up"}};
}

ordered interval_json(const Interval& x) {
    return ordered{{"lo", endpoint_json(x.lo(), MPFR_RNDD)}, {"hi", endpoint_json(x.hi(), MPFR_RNDU)}};
}

ordered lower_bound_json(double x) {
    return ordered(BigFloat(x, 53).to_decimal(17, MPFR_RNDD));
}

}  // namespace

std::string emit_report(const AnalysisReport& r) {
    ordered doc;
    doc["report_version"] = 1;

    ordered context;
    context["model"] = r.model_name;
    context["input"] = r.input_name;
    context["u_max"] = format_pow2(r.u_max_log2);
    context["emulate_k"] = r.emulate_k;
    context["backend_precision_bits"] = r.backend_precision;
    context["stable_softmax"] = r.stable_softmax;
    ordered eps;
    for (FpOp op : {FpOp::add, FpOp::sub, FpOp::mul, FpOp::div, FpOp::sqrt, FpOp::exp, FpOp::log, FpOp::tanh}) {
        eps[std::string(to_string(op))] = format_bound(r.elementary.get(op), 17);
    }
    context["elementary_bounds_u"] = std::move(eps);
    if (r.exponent_range) {
        context["range_check"] = ordered{{"e_min", r.exponent_range->e_min},
                                         {"e_max", r.exponent_range->e_max},
                                         {"overflow_events", r.overflow_events},
                                         {"underflow_events", r.underflow_events}};
    } else {
        context["range_check"] = nullptr;
    }
    ordered g = ordered::array();
    for (const LayerSummary& l : r.layers) {
        g.push_back(l.magnitude_exponent ? ordered(*l.magnitude_exponent) : ordered(nullptr));
    }
    context["magnitude_exponent_per_layer"] = std::move(g);
    doc["context"] = std::move(context);

    ordered outputs = ordered::array();
    for (std::size_t i = 0; i < r.outputs.size(); ++i) {
        const OutputBound& o = r.outputs[i];
        outputs.push_back(ordered{{"index", i},
                                  {"fp_value", hex_float(o.fp_value)},
                                  {"fp_value_decimal", BigFloat(o.fp_value, 53).to_decimal(17, MPFR_RNDN)},
                                  {"exact_range", interval_json(o.exact_range)},
                                  {"rounded_range", interval_json(o.rounded_range)},
                                  {"abs_bound_u", bound_json(o.abs_bound_u)},
                                  {"rel_bound_u", bound_json(o.rel_bound_u)}});
    }
    doc["outputs"] = std::move(outputs);
    doc["max_abs_bound_u"] = bound_json(r.max_abs_bound_u);
    doc["max_rel_bound_u"] = bound_json(r.max_rel_bound_u);

    ordered layers = ordered::array();
    for (const LayerSummary& l : r.layers) {
        layers.push_back(ordered{{"index", l.index},
                                 {"type", l.type},
                                 {"shape", l.shape},
                                 {"max_abs_bound_u", bound_json(l.max_abs_bound)},
                                 {"max_rel_bound_u", bound_json(l.max_rel_bound)},
                                 {"exact_range", interval_json(l.exact_hull)},
                                 {"rounded_range", interval_json(l.rounded_hull)},
                                 {"magnitude_exponent", l.magnitude_exponent ? ordered(*l.magnitude_exponent)
                                                                             : ordered(nullptr)}});
    }
    doc["layers"] = std::move(layers);

    if (r.margin) {
        doc["margins"] = ordered{{"p_star", lower_bound_json(r.margin->p_star)},
                                 {"mu", lower_bound_json(r.margin->mu)},
                                 {"nu", lower_bound_json(r.margin->nu)},
                                 {"softmax_input_tolerance", lower_bound_json(*r.softmax_tolerance)}};
    } else {
        doc["margins"] = nullptr;
    }

    ordered verdicts;
    if (r.argmax) {
        verdicts["argmax_stable"] = r.argmax->stable;
        verdicts["top1_index"] = r.argmax->top1_index;
        verdicts["top2_index"] = r.argmax->top2_index ? ordered(*r.argmax->top2_index) : ordered(nullptr);
        verdicts["top1_tie"] = r.argmax->top1_tie;
    } else {
        verdicts["argmax_stable"] = nullptr;
        verdicts["top1_index"] = nullptr;
        verdicts["top2_index"] = nullptr;
        verdicts["top1_tie"] = nullptr;
    }
    if (r.precision) {
        verdicts["required_k"] = r.precision->required_k ? ordered(*r.precision->required_k) : ordered(nullptr);
        verdicts["inequality_k"] = r.precision->inequality_k ? ordered(*r.precision->inequality_k) : ordered(nullptr);
        verdicts["u_max_floor_k"] = r.precision->u_max_floor_k;
    } else {
        verdicts["required_k"] = nullptr;
        verdicts["inequality_k"] = nullptr;
        verdicts["u_max_floor_k"] = 1 - r.u_max_log2;
    }
    doc["verdicts"] = std::move(verdicts);
    doc["warnings"] = r.warnings;
    return doc.dump(2) + "\n";
}

}  // namespace caadnn
