#include "caadnn/model.hpp"

#include <mpfr.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <type_traits>

#include "caadnn/error.hpp"
#include "json.hpp"

namespace caadnn {

using nlohmann::json;

std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out += (i ? ", " : "") + std::to_string(shape[i]);
    }
    return out + "]";
}

std::string hex_float(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

namespace {

// Parses with MPFR at 53 bits so that inexact decimal input is detected from
// the ternary value. Returns false on trailing garbage.
bool parse_mpfr(std::string_view text, mpfr_rnd_t rnd, double& out, int& ternary) {
    std::string s(text);
    mpfr_t v;
    mpfr_init2(v, 53);
    char* end = nullptr;
    ternary = mpfr_strtofr(v, s.c_str(), &end, 0, rnd);
    const bool ok = !s.empty() && end != nullptr && *end == '\0' && mpfr_number_p(v);
    out = mpfr_get_d(v, rnd);
    if (ok && std::isfinite(out) && mpfr_cmp_d(v, out) != 0) {
        ternary = ternary == 0 ? 1 : ternary;  // subnormal result lost bits
    }
    mpfr_clear(v);
    return ok && std::isfinite(out);
}

}  // namespace

double parse_real(std::string_view text, bool* exact) {
    double out = 0.0;
    int ternary = 0;
    if (!parse_mpfr(text, MPFR_RNDN, out, ternary)) {
        throw Error("not a finite number: '" + std::string(text) + "'");
    }
    if (exact != nullptr) {
        *exact = ternary == 0;
    }
    return out;
}

double parse_real_directed(std::string_view text, bool downward) {
    double out = 0.0;
    int ternary = 0;
    if (!parse_mpfr(text, downward ? MPFR_RNDD : MPFR_RNDU, out, ternary)) {
        throw Error("not a finite number: '" + std::string(text) + "'");
    }
    return out;
}

namespace {

std::string join(const std::string& ptr, const std::string& key) { return ptr + "/" + key; }
std::string join(const std::string& ptr, std::size_t idx) { return ptr + "/" + std::to_string(idx); }

const json& member(const json& obj, const std::string& key, const std::string& ptr) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaError(ptr, "missing required field \"" + key + "\"");
    }
    return *it;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& ptr) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (allowed.count(it.key()) == 0) {
            throw SchemaError(join(ptr, it.key()), "unknown field");
        }
    }
}

// Value given as a string (hex-float or decimal) or as a JSON number.
double read_real(const json& v, const std::string& ptr, bool* exact) {
    if (v.is_string()) {
        const std::string& s = v.get_ref<const std::string&>();
        try {
            return parse_real(s, exact);
        } catch (const Error&) {
            throw SchemaError(ptr, "not a finite number: '" + s + "'");
        }
    }
    if (v.is_number_integer()) {
        *exact = true;
        if (v.is_number_unsigned()) return static_cast<double>(v.get<std::uint64_t>());
        return static_cast<double>(v.get<std::int64_t>());
    }
    if (v.is_number_float()) {
        double d = v.get<double>();
        if (!std::isfinite(d)) {
            throw SchemaError(ptr, "non-finite value");
        }
        *exact = false;
        return d;
    }
    throw SchemaError(ptr, "expected a number or a hex-float string");
}

double read_real_directed(const json& v, const std::string& ptr, bool downward) {
    if (v.is_string()) {
        try {
            return parse_real_directed(v.get_ref<const std::string&>(), downward);
        } catch (const Error&) {
            throw SchemaError(ptr, "not a finite number: '" + v.get<std::string>() + "'");
        }
    }
    if (v.is_number()) {
        // The textual value is gone; step outward unless it is an integer.
        bool exact = false;
        double d = read_real(v, ptr, &exact);
        if (!exact && d != std::trunc(d)) {
            d = std::nextafter(d, downward ? -INFINITY : INFINITY);
        }
        return d;
    }
    throw SchemaError(ptr, "expected a number or a hex-float string");
}

Shape read_shape(const json& v, const std::string& ptr, bool allow_empty = false) {
    if (!v.is_array() || (!allow_empty && v.empty())) {
        throw SchemaError(ptr, "expected a non-empty array of positive integers");
    }
    Shape out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number_integer() || v[i].get<long long>() <= 0) {
            throw SchemaError(join(ptr, i), "expected a positive integer");
        }
        out.push_back(static_cast<std::size_t>(v[i].get<long long>()));
    }
    return out;
}

std::array<std::size_t, 2> read_pair(const json& v, const std::string& ptr) {
    Shape s = read_shape(v, ptr);
    if (s.size() != 2) {
        throw SchemaError(ptr, "expected two positive integers");
    }
    return {s[0], s[1]};
}

TensorSpec read_tensor(const json& v, const std::string& ptr) {
    if (!v.is_object()) {
        throw SchemaError(ptr, "expected a tensor object {\"shape\", \"data\"}");
    }
    check_keys(v, {"shape", "data"}, ptr);
    TensorSpec t;
    t.shape = read_shape(member(v, "shape", ptr), join(ptr, "shape"));
    const json& data = member(v, "data", ptr);
    const std::string dptr = join(ptr, "data");
    if (!data.is_array()) {
        throw SchemaError(dptr, "expected an array");
    }
    if (data.size() != element_count(t.shape)) {
        throw SchemaError(dptr, "has " + std::to_string(data.size()) + " values but shape " +
                                    shape_to_string(t.shape) + " needs " + std::to_string(element_count(t.shape)));
    }
    t.data.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        bool exact = true;
        t.data.push_back(read_real(data[i], join(dptr, i), &exact));
        if (!exact) {
            ++t.inexact_decimals;
        }
    }
    return t;
}

void expect_shape(const TensorSpec& t, const Shape& want, const std::string& ptr) {
    if (t.shape != want) {
        throw SchemaError(ptr, "shape " + shape_to_string(t.shape) + " does not match expected " + shape_to_string(want));
    }
}

LayerSpec read_layer(const json& v, const std::string& ptr) {
    if (!v.is_object()) {
        throw SchemaError(ptr, "expected a layer object");
    }
    const json& type = member(v, "type", ptr);
    if (!type.is_string()) {
        throw SchemaError(join(ptr, "type"), "expected a string");
    }
    const std::string tag = type.get<std::string>();
    if (tag == "dense") {
        check_keys(v, {"type", "weights", "bias"}, ptr);
        DenseSpec d{read_tensor(member(v, "weights", ptr), join(ptr, "weights")),
                    read_tensor(member(v, "bias", ptr), join(ptr, "bias"))};
        if (d.weights.shape.size() != 2) {
            throw SchemaError(join(ptr, "weights/shape"), "dense weights must have shape [m, n]");
        }
        expect_shape(d.bias, {d.weights.shape[0]}, join(ptr, "bias/shape"));
        return d;
    }
    if (tag == "conv2d") {
        check_keys(v, {"type", "kernel", "bias", "stride", "padding"}, ptr);
        Conv2dSpec c;
        c.kernel = read_tensor(member(v, "kernel", ptr), join(ptr, "kernel"));
        c.bias = read_tensor(member(v, "bias", ptr), join(ptr, "bias"));
        if (c.kernel.shape.size() != 4) {
            throw SchemaError(join(ptr, "kernel/shape"), "conv2d kernel must have shape [kh, kw, c_in, c_out]");
        }
        expect_shape(c.bias, {c.kernel.shape[3]}, join(ptr, "bias/shape"));
        if (v.contains("stride")) c.stride = read_pair(v["stride"], join(ptr, "stride"));
        if (v.contains("padding")) {
            const json& p = v["padding"];
            if (p == "valid") c.padding = Padding::valid;
            else if (p == "same") c.padding = Padding::same;
            else throw SchemaError(join(ptr, "padding"), "expected \"valid\" or \"same\"");
        }
        return c;
    }
    if (tag == "maxpool2d" || tag == "avgpool2d") {
        check_keys(v, {"type", "pool", "stride"}, ptr);
        Pool2dSpec p;
        p.kind = tag == "maxpool2d" ? PoolKind::max : PoolKind::average;
        p.pool = read_pair(member(v, "pool", ptr), join(ptr, "pool"));
        p.stride = v.contains("stride") ? read_pair(v["stride"], join(ptr, "stride")) : p.pool;
        return p;
    }
    if (tag == "batchnorm") {
        check_keys(v, {"type", "gamma", "beta", "moving_mean", "moving_var", "epsilon"}, ptr);
        BatchNormSpec b;
        b.gamma = read_tensor(member(v, "gamma", ptr), join(ptr, "gamma"));
        b.beta = read_tensor(member(v, "beta", ptr), join(ptr, "beta"));
        b.moving_mean = read_tensor(member(v, "moving_mean", ptr), join(ptr, "moving_mean"));
        b.moving_var = read_tensor(member(v, "moving_var", ptr), join(ptr, "moving_var"));
        if (b.gamma.shape.size() != 1) {
            throw SchemaError(join(ptr, "gamma/shape"), "batchnorm parameters must be 1-d per-channel tensors");
        }
        expect_shape(b.beta, b.gamma.shape, join(ptr, "beta/shape"));
        expect_shape(b.moving_mean, b.gamma.shape, join(ptr, "moving_mean/shape"));
        expect_shape(b.moving_var, b.gamma.shape, join(ptr, "moving_var/shape"));
        bool exact = true;
        b.epsilon = read_real(member(v, "epsilon", ptr), join(ptr, "epsilon"), &exact);
        if (!(b.epsilon > 0.0)) {
            throw SchemaError(join(ptr, "epsilon"), "must be > 0");
        }
        for (std::size_t i = 0; i < b.moving_var.size(); ++i) {
            if (!(b.moving_var.data[i] >= 0.0)) {
                throw SchemaError(join(ptr, "moving_var/data/" + std::to_string(i)), "variance must be >= 0");
            }
        }
        return b;
    }
    if (tag == "relu" || tag == "sigmoid" || tag == "tanh") {
        check_keys(v, {"type"}, ptr);
        return ActivationSpec{tag == "relu" ? Activation::relu
                              : tag == "sigmoid" ? Activation::sigmoid
                                                 : Activation::tanh};
    }
    if (tag == "softmax") {
        check_keys(v, {"type", "axis"}, ptr);
        SoftmaxSpec s;
        if (v.contains("axis")) {
            if (!v["axis"].is_number_integer()) {
                throw SchemaError(join(ptr, "axis"), "expected an integer");
            }
            s.axis = v["axis"].get<int>();
        }
        return s;
    }
    if (tag == "flatten") {
        check_keys(v, {"type"}, ptr);
        return FlattenSpec{};
    }
    if (tag == "dropout") {
        check_keys(v, {"type", "rate"}, ptr);
        DropoutSpec d;
        if (v.contains("rate")) {
            bool exact = true;
            d.rate = read_real(v["rate"], join(ptr, "rate"), &exact);
        }
        return d;
    }
    throw SchemaError(join(ptr, "type"), "unsupported layer type \"" + tag + "\"");
}

json tensor_json(const TensorSpec& t) {
    json data = json::array();
    for (double x : t.data) {
        data.push_back(hex_float(x));
    }
    return json{{"shape", t.shape}, {"data", std::move(data)}};
}

json layer_json(const LayerSpec& layer) {
    json out{{"type", layer_tag(layer)}};
    std::visit(
        [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseSpec>) {
                out["weights"] = tensor_json(l.weights);
                out["bias"] = tensor_json(l.bias);
            } else if constexpr (std::is_same_v<T, Conv2dSpec>) {
                out["kernel"] = tensor_json(l.kernel);
                out["bias"] = tensor_json(l.bias);
                out["stride"] = l.stride;
                out["padding"] = l.padding == Padding::same ? "same" : "valid";
            } else if constexpr (std::is_same_v<T, Pool2dSpec>) {
                out["pool"] = l.pool;
                out["stride"] = l.stride;
            } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
                out["gamma"] = tensor_json(l.gamma);
                out["beta"] = tensor_json(l.beta);
                out["moving_mean"] = tensor_json(l.moving_mean);
                out["moving_var"] = tensor_json(l.moving_var);
                out["epsilon"] = hex_float(l.epsilon);
            } else if constexpr (std::is_same_v<T, SoftmaxSpec>) {
                out["axis"] = l.axis;
            } else if constexpr (std::is_same_v<T, DropoutSpec>) {
                out["rate"] = hex_float(l.rate);
            }
        },
        layer);
    return out;
}

std::string read_file(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(what + " file not found: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Builds the DOM but keeps every non-integer number as its source text, so
// read_real can tell exact decimals from inexact ones and round range
// endpoints in the right direction.
class TextFloatSax : public nlohmann::detail::json_sax_dom_parser<json> {
public:
    using json_sax_dom_parser::json_sax_dom_parser;

    bool number_float(json::number_float_t, const json::string_t& text) {
        json::string_t copy = text;
        return string(copy);
    }
};

json parse_json(std::string_view text, const std::string& what) {
    try {
        json doc;
        TextFloatSax sax(doc);
        json::sax_parse(text.begin(), text.end(), &sax);
        return doc;
    } catch (const json::parse_error& e) {
        throw SchemaError("", what + " is not valid JSON: " + e.what());
    }
}

}  // namespace

std::string layer_tag(const LayerSpec& layer) {
    return std::visit(
        [](const auto& l) -> std::string {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseSpec>) return "dense";
            else if constexpr (std::is_same_v<T, Conv2dSpec>) return "conv2d";
            else if constexpr (std::is_same_v<T, Pool2dSpec>) return l.kind == PoolKind::max ? "maxpool2d" : "avgpool2d";
            else if constexpr (std::is_same_v<T, BatchNormSpec>) return "batchnorm";
            else if constexpr (std::is_same_v<T, ActivationSpec>)
                return l.kind == Activation::relu ? "relu" : l.kind == Activation::sigmoid ? "sigmoid" : "tanh";
            else if constexpr (std::is_same_v<T, SoftmaxSpec>) return "softmax";
            else if constexpr (std::is_same_v<T, FlattenSpec>) return "flatten";
            else return "dropout";
        },
        layer);
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t n = 0;
    for (const LayerSpec& layer : layers) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseSpec>) n += l.weights.size() + l.bias.size();
                else if constexpr (std::is_same_v<T, Conv2dSpec>) n += l.kernel.size() + l.bias.size();
                else if constexpr (std::is_same_v<T, BatchNormSpec>)
                    n += l.gamma.size() + l.beta.size() + l.moving_mean.size() + l.moving_var.size();
            },
            layer);
    }
    return n;
}

std::size_t ModelSpec::inexact_decimals() const {
    std::size_t n = 0;
    for (const LayerSpec& layer : layers) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseSpec>) n += l.weights.inexact_decimals + l.bias.inexact_decimals;
                else if constexpr (std::is_same_v<T, Conv2dSpec>) n += l.kernel.inexact_decimals + l.bias.inexact_decimals;
                else if constexpr (std::is_same_v<T, BatchNormSpec>)
                    n += l.gamma.inexact_decimals + l.beta.inexact_decimals + l.moving_mean.inexact_decimals +
                         l.moving_var.inexact_decimals;
            },
            layer);
    }
    return n;
}

Shape output_shape(const LayerSpec& layer, const Shape& in, std::size_t index) {
    auto fail = [&](const std::string& msg) -> ShapeError {
        return ShapeError("layer " + std::to_string(index) + " (" + layer_tag(layer) + "): " + msg);
    };
    auto spatial = [&]() {
        if (in.size() != 3) {
            throw fail("expects a [height, width, channels] input, got " + shape_to_string(in));
        }
    };
    return std::visit(
        [&](const auto& l) -> Shape {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseSpec>) {
                const std::size_t m = l.weights.shape[0];
                const std::size_t n = l.weights.shape[1];
                if (in.empty() || in.back() != n) {
                    throw fail("weights " + shape_to_string(l.weights.shape) + " need a last input axis of " +
                               std::to_string(n) + ", got input " + shape_to_string(in));
                }
                Shape out = in;
                out.back() = m;
                return out;
            } else if constexpr (std::is_same_v<T, Conv2dSpec>) {
                spatial();
                const std::size_t kh = l.kernel.shape[0], kw = l.kernel.shape[1];
                if (l.kernel.shape[2] != in[2]) {
                    throw fail("kernel expects " + std::to_string(l.kernel.shape[2]) + " input channels, got " +
                               std::to_string(in[2]));
                }
                if (l.padding == Padding::same) {
                    return {(in[0] + l.stride[0] - 1) / l.stride[0], (in[1] + l.stride[1] - 1) / l.stride[1],
                            l.kernel.shape[3]};
                }
                if (in[0] < kh || in[1] < kw) {
                    throw fail("kernel " + std::to_string(kh) + "x" + std::to_string(kw) + " larger than input " +
                               shape_to_string(in));
                }
                return {(in[0] - kh) / l.stride[0] + 1, (in[1] - kw) / l.stride[1] + 1, l.kernel.shape[3]};
            } else if constexpr (std::is_same_v<T, Pool2dSpec>) {
                spatial();
                if (in[0] < l.pool[0] || in[1] < l.pool[1]) {
                    throw fail("pool window larger than input " + shape_to_string(in));
                }
                return {(in[0] - l.pool[0]) / l.stride[0] + 1, (in[1] - l.pool[1]) / l.stride[1] + 1, in[2]};
            } else if constexpr (std::is_same_v<T, BatchNormSpec>) {
                if (in.empty() || in.back() != l.gamma.shape[0]) {
                    throw fail("parameters have " + std::to_string(l.gamma.shape[0]) +
                               " channels, input is " + shape_to_string(in));
                }
                return in;
            } else if constexpr (std::is_same_v<T, SoftmaxSpec>) {
                const int rank = static_cast<int>(in.size());
                if (l.axis < -rank || l.axis >= rank) {
                    throw fail("axis " + std::to_string(l.axis) + " out of range for input " + shape_to_string(in));
                }
                return in;
            } else if constexpr (std::is_same_v<T, FlattenSpec>) {
                return {element_count(in)};
            } else {
                return in;
            }
        },
        layer);
}

std::vector<Shape> infer_shapes(const ModelSpec& model) {
    std::vector<Shape> shapes{model.input_shape};
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        shapes.push_back(output_shape(model.layers[i], shapes.back(), i));
    }
    return shapes;
}

void validate(const ModelSpec& model) {
    if (model.format_version != 1) {
        throw SchemaError("/format_version", "unsupported version " + std::to_string(model.format_version));
    }
    if (model.input_shape.empty()) {
        throw SchemaError("/input_shape", "must not be empty");
    }
    std::size_t softmax = 0;
    for (const LayerSpec& layer : model.layers) {
        softmax += std::holds_alternative<SoftmaxSpec>(layer);
    }
    if (softmax > 1) {
        throw SchemaError("/layers", "at most one softmax layer is supported");
    }
    infer_shapes(model);
}

ModelSpec parse_model(std::string_view json_text) {
    json doc = parse_json(json_text, "model");
    if (!doc.is_object()) {
        throw SchemaError("", "model document must be a JSON object");
    }
    check_keys(doc, {"format_version", "name", "input_shape", "layers"}, "");
    ModelSpec m;
    const json& version = member(doc, "format_version", "");
    if (!version.is_number_integer()) {
        throw SchemaError("/format_version", "expected an integer");
    }
    m.format_version = version.get<int>();
    if (m.format_version != 1) {
        throw SchemaError("/format_version", "unsupported version " + std::to_string(m.format_version));
    }
    if (doc.contains("name")) {
        if (!doc["name"].is_string()) throw SchemaError("/name", "expected a string");
        m.name = doc["name"].get<std::string>();
    }
    m.input_shape = read_shape(member(doc, "input_shape", ""), "/input_shape");
    const json& layers = member(doc, "layers", "");
    if (!layers.is_array()) {
        throw SchemaError("/layers", "expected an array");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        m.layers.push_back(read_layer(layers[i], join("/layers", i)));
    }
    validate(m);
    return m;
}

ModelSpec load_model(const std::string& path) { return parse_model(read_file(path, "model")); }

std::string model_to_json(const ModelSpec& model) {
    json layers = json::array();
    for (const LayerSpec& layer : model.layers) {
        layers.push_back(layer_json(layer));
    }
    json doc{{"format_version", model.format_version},
             {"name", model.name},
             {"input_shape", model.input_shape},
             {"layers", std::move(layers)}};
    return doc.dump() + "\n";
}

void save_model(const ModelSpec& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write model file: " + path);
    }
    out << model_to_json(model);
}

InputTensor parse_tensor(std::string_view json_text) {
    json doc = parse_json(json_text, "input tensor");
    if (!doc.is_object()) {
        throw SchemaError("", "tensor document must be a JSON object");
    }
    check_keys(doc, {"shape", "data", "range"}, "");
    json body{{"shape", member(doc, "shape", "")}, {"data", member(doc, "data", "")}};
    InputTensor t;
    t.tensor = read_tensor(body, "");
    const std::size_t n = t.tensor.size();
    t.ranges.reserve(n);
    auto read_pair_range = [&](const json& pair, const std::string& ptr) {
        if (!pair.is_array() || pair.size() != 2) {
            throw SchemaError(ptr, "expected [lo, hi]");
        }
        double lo = read_real_directed(pair[0], join(ptr, 0), true);
        double hi = read_real_directed(pair[1], join(ptr, 1), false);
        if (!(lo <= hi)) {
            throw SchemaError(ptr, "range lower end exceeds upper end");
        }
        return std::make_pair(lo, hi);
    };
    if (!doc.contains("range")) {
        for (double x : t.tensor.data) {
            t.ranges.emplace_back(x, x);
        }
        return t;
    }
    t.explicit_range = true;
    const json& range = doc["range"];
    const bool global = range.is_array() && range.size() == 2 && !range[0].is_array();
    if (global) {
        auto r = read_pair_range(range, "/range");
        t.ranges.assign(n, r);
    } else {
        if (!range.is_array() || range.size() != n) {
            throw SchemaError("/range", "expected [lo, hi] or one [lo, hi] pair per element (" + std::to_string(n) + ")");
        }
        for (std::size_t i = 0; i < n; ++i) {
            t.ranges.push_back(read_pair_range(range[i], join("/range", i)));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double x = t.tensor.data[i];
        if (x < t.ranges[i].first || x > t.ranges[i].second) {
            throw SchemaError(join("/data", i), "value " + hex_float(x) + " lies outside its range");
        }
    }
    return t;
}

InputTensor load_tensor(const std::string& path) { return parse_tensor(read_file(path, "input")); }

}  // namespace caadnn
