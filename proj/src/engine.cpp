#include "caadnn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>

#include "caadnn/error.hpp"

namespace caadnn {

namespace {

// Runs fn(i) for i in [0, n), split into contiguous blocks over `threads`
// workers. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

CaaTensor collect(Shape shape, std::vector<std::optional<Quantity>>&& slots) {
    CaaTensor out;
    out.shape = std::move(shape);
    out.elements.reserve(slots.size());
    for (auto& q : slots) out.elements.push_back(std::move(*q));
    return out;
}

// Left-to-right running sum. Terms with an exact-zero factor are dropped:
// the product is exactly 0 and adding it leaves the sum unchanged.
class Accumulator {
public:
    explicit Accumulator(const CaaContext& ctx) : ctx_(ctx) {}

    void add_product(double w, const Quantity& x) {
        if (w == 0.0 || x.is_exact_zero()) {
            return;
        }
        Quantity term = caa_mul(mk_const(w, ctx_), x, ctx_);
        if (!acc_) {
            acc_.emplace(std::move(term));
        } else {
            acc_.emplace(caa_add(*acc_, term, ctx_));
        }
    }

    Quantity finish(double bias) {
        Quantity b = mk_const(bias, ctx_);
        if (!acc_) {
            return b;
        }
        return caa_add(*acc_, b, ctx_);
    }

private:
    const CaaContext& ctx_;
    std::optional<Quantity> acc_;
};

Shape checked_output(const LayerSpec& layer, const CaaTensor& x) {
    if (element_count(x.shape) != x.size()) {
        throw ShapeError(layer_tag(layer) + ": tensor holds " + std::to_string(x.size()) + " elements for shape " +
                         shape_to_string(x.shape));
    }
    return output_shape(layer, x.shape, 0);
}

}  // namespace

CaaTensor make_input_tensor(const InputTensor& input, const CaaContext& ctx) {
    CaaTensor t;
    t.shape = input.tensor.shape;
    t.elements.reserve(input.tensor.size());
    const mpfr_prec_t prec = ctx.backend_precision();
    for (std::size_t i = 0; i < input.tensor.size(); ++i) {
        Interval range(input.ranges[i].first, input.ranges[i].second, prec);
        t.elements.push_back(mk_input(range, input.tensor.data[i], ctx));
    }
    return t;
}

LayerSummary summarize(const CaaTensor& t, std::size_t index, const std::string& type) {
    LayerSummary s;
    s.index = index;
    s.type = type;
    s.shape = t.shape;
    if (t.elements.empty()) {
        return s;
    }
    s.exact_hull = t.elements.front().exact_range();
    s.rounded_hull = t.elements.front().rounded_range();
    for (const Quantity& q : t.elements) {
        s.max_abs_bound = std::max(s.max_abs_bound, q.abs_bound());
        s.max_rel_bound = std::max(s.max_rel_bound, q.rel_bound());
        s.exact_hull = ia::hull(s.exact_hull, q.exact_range());
        s.rounded_hull = ia::hull(s.rounded_hull, q.rounded_range());
    }
    const double mag = std::max(s.exact_hull.mag(), s.rounded_hull.mag());
    if (mag > 0.0 && std::isfinite(mag)) {
        int e = 0;
        const double m = std::frexp(mag, &e);
        s.magnitude_exponent = m == 0.5 ? e - 1 : e;
    }
    return s;
}

CaaTensor eval_dense(const DenseSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt) {
    Shape out_shape = checked_output(layer, x);
    const std::size_t m = layer.weights.shape[0];
    const std::size_t n = layer.weights.shape[1];
    const std::size_t outer = x.size() / n;
    std::vector<std::optional<Quantity>> out(outer * m);
    parallel_for(out.size(), opt.threads, [&](std::size_t idx) {
        const std::size_t o = idx / m;
        const std::size_t i = idx % m;
        const double* row = layer.weights.data.data() + i * n;
        Accumulator acc(ctx);
        for (std::size_t j = 0; j < n; ++j) {
            acc.add_product(row[j], x.elements[o * n + j]);
        }
        out[idx].emplace(acc.finish(layer.bias.data[i]));
    });
    return collect(std::move(out_shape), std::move(out));
}

CaaTensor eval_conv2d(const Conv2dSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt) {
    Shape out_shape = checked_output(layer, x);
    const std::size_t h = x.shape[0], w = x.shape[1], cin = x.shape[2];
    const std::size_t kh = layer.kernel.shape[0], kw = layer.kernel.shape[1], cout = layer.kernel.shape[3];
    const std::size_t oh = out_shape[0], ow = out_shape[1];
    std::size_t pad_top = 0, pad_left = 0;
    if (layer.padding == Padding::same) {
        const std::size_t need_h = (oh - 1) * layer.stride[0] + kh;
        const std::size_t need_w = (ow - 1) * layer.stride[1] + kw;
        pad_top = need_h > h ? (need_h - h) / 2 : 0;
        pad_left = need_w > w ? (need_w - w) / 2 : 0;
    }
    std::vector<std::optional<Quantity>> out(oh * ow * cout);
    parallel_for(out.size(), opt.threads, [&](std::size_t idx) {
        const std::size_t co = idx % cout;
        const std::size_t ox = (idx / cout) % ow;
        const std::size_t oy = idx / (cout * ow);
        Accumulator acc(ctx);
        for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = static_cast<long>(oy * layer.stride[0] + ky) - static_cast<long>(pad_top);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;  // zero padding
            for (std::size_t kx = 0; kx < kw; ++kx) {
                const long ix = static_cast<long>(ox * layer.stride[1] + kx) - static_cast<long>(pad_left);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double weight = layer.kernel.data[((ky * kw + kx) * cin + ci) * cout + co];
                    acc.add_product(weight, x.elements[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin + ci]);
                }
            }
        }
        out[idx].emplace(acc.finish(layer.bias.data[co]));
    });
    return collect(std::move(out_shape), std::move(out));
}

CaaTensor eval_pool(const Pool2dSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt) {
    Shape out_shape = checked_output(layer, x);
    const std::size_t w = x.shape[1], c = x.shape[2];
    const std::size_t ow = out_shape[1];
    const std::size_t ph = layer.pool[0], pw = layer.pool[1];
    const double count = static_cast<double>(ph * pw);
    std::vector<std::optional<Quantity>> out(element_count(out_shape));
    parallel_for(out.size(), opt.threads, [&](std::size_t idx) {
        const std::size_t ch = idx % c;
        const std::size_t ox = (idx / c) % ow;
        const std::size_t oy = idx / (c * ow);
        std::optional<Quantity> acc;
        for (std::size_t py = 0; py < ph; ++py) {
            for (std::size_t px = 0; px < pw; ++px) {
                const std::size_t iy = oy * layer.stride[0] + py;
                const std::size_t ix = ox * layer.stride[1] + px;
                const Quantity& v = x.elements[(iy * w + ix) * c + ch];
                if (!acc) {
                    acc.emplace(v);
                } else if (layer.kind == PoolKind::max) {
                    acc.emplace(caa_max(*acc, v, ctx));
                } else {
                    acc.emplace(caa_add(*acc, v, ctx));
                }
            }
        }
        if (layer.kind == PoolKind::average) {
            acc.emplace(caa_div(*acc, mk_const(count, ctx), ctx));
        }
        out[idx].emplace(std::move(*acc));
    });
    return collect(std::move(out_shape), std::move(out));
}

CaaTensor eval_batchnorm(const BatchNormSpec& layer, const CaaTensor& x, const CaaContext& ctx,
                         const EngineOptions& opt) {
    Shape out_shape = checked_output(layer, x);
    const std::size_t c = layer.gamma.shape[0];
    struct Channel {
        Quantity mean, denom, gamma, beta;
    };
    std::vector<Channel> channels;
    channels.reserve(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        Quantity var_eps = caa_add(mk_const(layer.moving_var.data[ch], ctx), mk_const(layer.epsilon, ctx), ctx);
        if (!(var_eps.exact_range().lo_down() > 0.0) || !(var_eps.rounded_range().lo_down() > 0.0)) {
            throw DomainError("batchnorm channel " + std::to_string(ch) + ": variance + epsilon is not positive");
        }
        channels.push_back({mk_const(layer.moving_mean.data[ch], ctx), caa_sqrt(var_eps, ctx),
                            mk_const(layer.gamma.data[ch], ctx), mk_const(layer.beta.data[ch], ctx)});
    }
    std::vector<std::optional<Quantity>> out(x.size());
    parallel_for(out.size(), opt.threads, [&](std::size_t idx) {
        const Channel& p = channels[idx % c];
        Quantity centered = caa_sub(x.elements[idx], p.mean, ctx);
        Quantity normalized = caa_div(centered, p.denom, ctx);
        out[idx].emplace(caa_add(caa_mul(p.gamma, normalized, ctx), p.beta, ctx));
    });
    return collect(std::move(out_shape), std::move(out));
}

CaaTensor eval_activation(Activation kind, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt) {
    const Quantity zero = mk_const(0.0, ctx);
    std::vector<std::optional<Quantity>> out(x.size());
    parallel_for(out.size(), opt.threads, [&](std::size_t idx) {
        const Quantity& v = x.elements[idx];
        switch (kind) {
            case Activation::relu: out[idx].emplace(caa_max(v, zero, ctx)); break;
            case Activation::sigmoid: out[idx].emplace(caa_sigmoid(v, ctx)); break;
            case Activation::tanh: out[idx].emplace(caa_tanh(v, ctx)); break;
        }
    });
    return collect(x.shape, std::move(out));
}

CaaTensor eval_softmax(const SoftmaxSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt) {
    Shape out_shape = checked_output(layer, x);
    const int rank = static_cast<int>(x.shape.size());
    const std::size_t axis = static_cast<std::size_t>(layer.axis < 0 ? rank + layer.axis : layer.axis);
    const std::size_t len = x.shape[axis];
    std::size_t inner = 1;
    for (std::size_t d = axis + 1; d < x.shape.size(); ++d) inner *= x.shape[d];
    const std::size_t outer = x.size() / (len * inner);
    const Interval unit(0.0, 1.0, ctx.backend_precision());

    std::vector<std::optional<Quantity>> out(x.size());
    parallel_for(outer * inner, opt.threads, [&](std::size_t slice) {
        const std::size_t o = slice / inner;
        const std::size_t in = slice % inner;
        auto at = [&](std::size_t i) { return (o * len + i) * inner + in; };

        std::vector<Quantity> e;
        e.reserve(len);
        if (opt.stable_softmax) {
            Quantity m = x.elements[at(0)];
            for (std::size_t i = 1; i < len; ++i) {
                m = caa_max(m, x.elements[at(i)], ctx);
            }
            for (std::size_t i = 0; i < len; ++i) {
                // x_i <= m in both semantics; the label lets the subtraction
                // clamp its ranges to (-inf, 0].
                Quantity xi = attach_bounds(x.elements[at(i)], nullptr, &m);
                e.push_back(caa_exp(caa_sub(xi, m, ctx), ctx));
            }
        } else {
            for (std::size_t i = 0; i < len; ++i) {
                e.push_back(caa_exp(x.elements[at(i)], ctx));
            }
        }
        Quantity sum = e.front();
        for (std::size_t i = 1; i < len; ++i) {
            sum = caa_add(sum, e[i], ctx);
        }
        for (std::size_t i = 0; i < len; ++i) {
            Quantity p = caa_div(e[i], sum, ctx);
            out[at(i)].emplace(restrict_ranges(p, unit, unit, ctx));
        }
    });
    return collect(std::move(out_shape), std::move(out));
}

CaaTensor eval_layer(const LayerSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt) {
    return std::visit(
        [&](const auto& l) -> CaaTensor {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseSpec>) return eval_dense(l, x, ctx, opt);
            else if constexpr (std::is_same_v<T, Conv2dSpec>) return eval_conv2d(l, x, ctx, opt);
            else if constexpr (std::is_same_v<T, Pool2dSpec>) return eval_pool(l, x, ctx, opt);
            else if constexpr (std::is_same_v<T, BatchNormSpec>) return eval_batchnorm(l, x, ctx, opt);
            else if constexpr (std::is_same_v<T, ActivationSpec>) return eval_activation(l.kind, x, ctx, opt);
            else if constexpr (std::is_same_v<T, SoftmaxSpec>) return eval_softmax(l, x, ctx, opt);
            else if constexpr (std::is_same_v<T, FlattenSpec>) return CaaTensor{{element_count(x.shape)}, x.elements};
            else return x;
        },
        layer);
}

RunResult run_model(const ModelSpec& model, const CaaTensor& input, const CaaContext& ctx, const EngineOptions& opt) {
    if (input.shape != model.input_shape) {
        throw ShapeError("input shape " + shape_to_string(input.shape) + " does not match model input shape " +
                         shape_to_string(model.input_shape));
    }
    RunResult result;
    if (const std::size_t n = model.inexact_decimals(); n > 0) {
        result.warnings.push_back(std::to_string(n) +
                                  " weight(s) were given in decimal and are not exactly representable in binary64");
    }
    result.output = input;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& layer = model.layers[i];
        if (std::holds_alternative<DropoutSpec>(layer)) {
            result.warnings.push_back("layer " + std::to_string(i) + ": dropout treated as identity at inference");
        }
        try {
            result.output = eval_layer(layer, result.output, ctx, opt);
        } catch (const DomainError& e) {
            throw DomainError("layer " + std::to_string(i) + " (" + layer_tag(layer) + "): " + e.what());
        }
        result.layers.push_back(summarize(result.output, i, layer_tag(layer)));
    }
    return result;
}

}  // namespace caadnn
