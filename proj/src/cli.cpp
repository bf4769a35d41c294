#include "caadnn/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "caadnn/analysis.hpp"
#include "caadnn/engine.hpp"
#include "caadnn/error.hpp"
#include "caadnn/model.hpp"
#include "json.hpp"

namespace caadnn {

namespace {

struct RunConfig {
    std::string model_path;
    std::string input_path;
    std::string inputs_dir;
    std::string u_max = "2^-7";
    int emulate_k = 24;
    std::optional<std::string> p_star;
    std::string report_path;
    bool require_stable = false;
    bool no_stable_softmax = false;
    bool range_check = false;
    int e_min = -126;
    int e_max = 127;
    std::vector<std::string> eps_ops;
    unsigned threads = 1;
};

// Tags an error with the phase it came from so each category reads
// distinctly on the terminal.
class PhaseError : public Error {
public:
    using Error::Error;
};

[[noreturn]] void rethrow_in(const std::string& phase, const std::exception& e) {
    throw PhaseError(phase + ": " + e.what());
}

ElementaryBounds parse_eps_ops(const std::vector<std::string>& items) {
    static const std::map<std::string, FpOp> ops{{"add", FpOp::add}, {"sub", FpOp::sub}, {"mul", FpOp::mul},
                                                 {"div", FpOp::div}, {"sqrt", FpOp::sqrt}, {"exp", FpOp::exp},
                                                 {"log", FpOp::log}, {"tanh", FpOp::tanh}};
    ElementaryBounds eps;
    for (const std::string& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw PhaseError("--eps-op: expected op=value, got '" + item + "'");
        }
        const std::string name = item.substr(0, eq);
        auto it = ops.find(name);
        if (it == ops.end()) {
            throw PhaseError("--eps-op: unknown operation '" + name + "'");
        }
        try {
            eps.set(it->second, parse_real_directed(item.substr(eq + 1), false));
        } catch (const Error& e) {
            throw PhaseError(std::string("--eps-op: ") + e.what());
        }
    }
    return eps;
}

struct SingleRun {
    AnalysisReport report;
    std::string json;
};

SingleRun analyze_one(const ModelSpec& model, const std::string& input_path, const RunConfig& cfg,
                      const FpContext& fp, const ElementaryBounds& eps, std::optional<double> p_star) {
    InputTensor input;
    try {
        input = load_tensor(input_path);
    } catch (const IoError& e) {
        rethrow_in("input", e);
    } catch (const Error& e) {
        rethrow_in("input " + input_path, e);
    }
    RangeStatus status;
    CaaContext ctx(fp, backend_precision_from_env(), eps, cfg.range_check ? &status : nullptr);
    EngineOptions options;
    options.stable_softmax = !cfg.no_stable_softmax;
    options.threads = cfg.threads;
    CaaTensor x;
    try {
        x = make_input_tensor(input, ctx);
    } catch (const Error& e) {
        rethrow_in("input " + input_path, e);
    }
    RunResult run;
    try {
        run = run_model(model, x, ctx, options);
    } catch (const Error& e) {
        rethrow_in("evaluation", e);
    }
    SingleRun out;
    out.report = build_report(model, run, ctx, options, p_star, std::filesystem::path(input_path).filename().string());
    out.json = emit_report(out.report);
    return out;
}

void print_summary(std::ostream& out, const AnalysisReport& r) {
    out << "input " << r.input_name << " (model " << r.model_name << ", u_max " << format_pow2(r.u_max_log2)
        << ", emulated k = " << r.emulate_k << ")\n";
    for (std::size_t i = 0; i < r.outputs.size(); ++i) {
        const OutputBound& o = r.outputs[i];
        out << "  out[" << i << "] = " << std::setprecision(9) << o.fp_value << "  abs <= "
            << format_bound(o.abs_bound_u) << " u  rel <= " << format_bound(o.rel_bound_u) << " u\n";
    }
    out << "  max abs bound " << format_bound(r.max_abs_bound_u) << " u, max rel bound "
        << format_bound(r.max_rel_bound_u) << " u\n";
    if (r.margin) {
        out << "  margins: mu = " << std::setprecision(6) << r.margin->mu << ", nu = " << r.margin->nu
            << ", softmax input tolerance = " << *r.softmax_tolerance << "\n";
    }
    if (r.argmax) {
        out << "  argmax " << r.argmax->top1_index << (r.argmax->stable ? " stable" : " NOT provably stable")
            << (r.argmax->top1_tie ? " (tie broken toward the lowest index)" : "") << "\n";
    }
    if (r.precision) {
        out << "  required k: "
            << (r.precision->required_k ? std::to_string(*r.precision->required_k) : std::string("none"))
            << " (margin inequalities alone: "
            << (r.precision->inequality_k ? std::to_string(*r.precision->inequality_k) : std::string("none"))
            << ", certified from k = " << r.precision->u_max_floor_k << ")\n";
    }
    if (r.exponent_range && (r.overflow_events || r.underflow_events)) {
        out << "  range check: " << r.overflow_events << " overflow and " << r.underflow_events
            << " underflow event(s)\n";
    }
    for (const std::string& w : r.warnings) {
        out << "  warning: " << w << "\n";
    }
}

void write_report(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw PhaseError("report: cannot write " + path);
    }
    f << text;
}

int analyze(const RunConfig& cfg, std::ostream& out) {
    FpContext fp;
    try {
        const int u_exp = parse_pow2(cfg.u_max);
        std::optional<ExponentRange> range;
        if (cfg.range_check) {
            range = ExponentRange{cfg.e_min, cfg.e_max};
        }
        fp = FpContext(FpFormat(cfg.emulate_k, range), u_exp);
        if (!fp.covers(fp.format)) {
            throw Error("--emulate-k " + std::to_string(cfg.emulate_k) + " has u = " + format_pow2(1 - cfg.emulate_k) +
                        " > --u-max " + cfg.u_max);
        }
    } catch (const PhaseError&) {
        throw;
    } catch (const Error& e) {
        throw PhaseError(std::string("configuration: ") + e.what());
    }
    const ElementaryBounds eps = parse_eps_ops(cfg.eps_ops);
    std::optional<double> p_star;
    if (cfg.p_star) {
        try {
            // A guaranteed lower bound: rounding it down stays conservative.
            p_star = parse_real_directed(*cfg.p_star, true);
            margins_from_confidence(*p_star);
        } catch (const Error& e) {
            throw PhaseError(std::string("--p-star: ") + e.what());
        }
    }

    ModelSpec model;
    try {
        model = load_model(cfg.model_path);
    } catch (const IoError& e) {
        rethrow_in("model", e);
    } catch (const Error& e) {
        rethrow_in("model " + cfg.model_path, e);
    }

    std::vector<std::string> inputs;
    if (!cfg.inputs_dir.empty()) {
        std::error_code ec;
        for (const auto& entry : std::filesystem::directory_iterator(cfg.inputs_dir, ec)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") {
                inputs.push_back(entry.path().string());
            }
        }
        if (ec) {
            throw PhaseError("inputs directory not found: " + cfg.inputs_dir);
        }
        std::sort(inputs.begin(), inputs.end());
        if (inputs.empty()) {
            throw PhaseError("inputs directory contains no .json tensors: " + cfg.inputs_dir);
        }
    } else {
        inputs.push_back(cfg.input_path);
    }

    bool all_stable = true;
    std::vector<SingleRun> runs;
    for (const std::string& path : inputs) {
        runs.push_back(analyze_one(model, path, cfg, fp, eps, p_star));
        print_summary(out, runs.back().report);
        if (runs.back().report.argmax && !runs.back().report.argmax->stable) {
            all_stable = false;
        }
    }

    std::string text;
    if (cfg.inputs_dir.empty()) {
        text = runs.front().json;
    } else {
        // Per-input reports plus the worst case over all of them.
        using ordered = nlohmann::ordered_json;
        ordered doc;
        doc["report_version"] = 1;
        doc["aggregate"] = ordered::object();
        double max_abs = 0.0, max_rel = 0.0;
        std::optional<int> worst_k;
        bool k_missing = false;
        for (const SingleRun& r : runs) {
            max_abs = std::max(max_abs, r.report.max_abs_bound_u);
            max_rel = std::max(max_rel, r.report.max_rel_bound_u);
            if (r.report.precision) {
                if (r.report.precision->required_k) {
                    worst_k = std::max(worst_k.value_or(0), *r.report.precision->required_k);
                } else {
                    k_missing = true;
                }
            }
        }
        auto bound = [](double b) {
            return b < kUnbounded ? ordered{{"value", format_bound(b, 17)}, {"unbounded", false}}
                                  : ordered{{"value", nullptr}, {"unbounded", true}};
        };
        doc["aggregate"]["inputs"] = runs.size();
        doc["aggregate"]["max_abs_bound_u"] = bound(max_abs);
        doc["aggregate"]["max_rel_bound_u"] = bound(max_rel);
        doc["aggregate"]["all_argmax_stable"] = p_star ? ordered(all_stable) : ordered(nullptr);
        doc["aggregate"]["required_k"] = (worst_k && !k_missing) ? ordered(*worst_k) : ordered(nullptr);
        ordered list = ordered::array();
        for (const SingleRun& r : runs) {
            list.push_back(ordered::parse(r.json));
        }
        doc["runs"] = std::move(list);
        text = doc.dump(2) + "\n";
        out << "aggregate over " << runs.size() << " inputs: max abs bound " << format_bound(max_abs)
            << " u, max rel bound " << format_bound(max_rel) << " u";
        if (p_star) {
            out << ", required k " << ((worst_k && !k_missing) ? std::to_string(*worst_k) : std::string("none"));
        }
        out << "\n";
    }
    if (!cfg.report_path.empty()) {
        write_report(cfg.report_path, text);
    }
    if (cfg.require_stable && !all_stable) {
        return kExitUnstable;
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Certified rounding-error analysis of neural-network inference", "caadnn"};
    app.require_subcommand(1);
    RunConfig cfg;
    CLI::App* cmd = app.add_subcommand("analyze", "Evaluate a model on an input and bound its rounding errors");
    cmd->add_option("--model", cfg.model_path, "Model JSON file")->required();
    auto* input = cmd->add_option("--input", cfg.input_path, "Input tensor JSON file");
    auto* dir = cmd->add_option("--inputs-dir", cfg.inputs_dir, "Directory of input tensors; aggregates per-input maxima");
    input->excludes(dir);
    cmd->add_option("--u-max", cfg.u_max, "Largest unit roundoff the bounds must cover (power of two)")
        ->capture_default_str();
    cmd->add_option("--emulate-k", cfg.emulate_k, "Precision (mantissa bits) of the emulated run")
        ->capture_default_str();
    cmd->add_option("--p-star", cfg.p_star, "Guaranteed lower bound on the top-1 probability");
    cmd->add_option("--report", cfg.report_path, "Write the JSON report here");
    cmd->add_flag("--require-stable", cfg.require_stable, "Exit with status 2 unless the argmax is provably stable");
    cmd->add_flag("--no-stable-softmax", cfg.no_stable_softmax, "Use exp(x_i) / sum exp(x_j) without max subtraction");
    cmd->add_flag("--range-check", cfg.range_check, "Count emulated results outside the exponent range");
    cmd->add_option("--emin", cfg.e_min, "Smallest normal exponent for --range-check")->capture_default_str();
    cmd->add_option("--emax", cfg.e_max, "Largest exponent for --range-check")->capture_default_str();
    cmd->add_option("--eps-op", cfg.eps_ops, "Elementary error bound override, e.g. exp=1 (repeatable)");
    cmd->add_option("--threads", cfg.threads, "Worker threads per layer")->capture_default_str()->check(CLI::PositiveNumber);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    if (cfg.input_path.empty() && cfg.inputs_dir.empty()) {
        err << "error: one of --input or --inputs-dir is required\n";
        return kExitError;
    }
    if (cfg.require_stable && !cfg.p_star) {
        err << "error: --require-stable needs --p-star (the argmax verdict is part of classification analysis)\n";
        return kExitError;
    }
    try {
        return analyze(cfg, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace caadnn
