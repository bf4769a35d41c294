#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "caadnn/caa.hpp"
#include "caadnn/model.hpp"

namespace caadnn {

struct CaaTensor {
    Shape shape;
    std::vector<Quantity> elements;

    std::size_t size() const noexcept { return elements.size(); }
    const Quantity& operator[](std::size_t i) const { return elements[i]; }
};

// One mk_input per element, using the tensor's ranges.
CaaTensor make_input_tensor(const InputTensor& input, const CaaContext& ctx);

struct EngineOptions {
    // Max-subtracted softmax; the plain exp(x_i) / sum form when false.
    bool stable_softmax = true;
    // Worker threads per layer (output elements are split between them).
    unsigned threads = 1;
};

struct LayerSummary {
    std::size_t index = 0;
    std::string type;
    Shape shape;
    double max_abs_bound = 0.0;
    double max_rel_bound = 0.0;
    Interval exact_hull;
    Interval rounded_hull;
    // Smallest g with every |value| <= 2^g, over exact and rounded ranges;
    // empty when a range is unbounded or the layer output is identically 0.
    std::optional<int> magnitude_exponent;
};

LayerSummary summarize(const CaaTensor& t, std::size_t index, const std::string& type);

CaaTensor eval_dense(const DenseSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt = {});
CaaTensor eval_conv2d(const Conv2dSpec& layer, const CaaTensor& x, const CaaContext& ctx,
                      const EngineOptions& opt = {});
CaaTensor eval_pool(const Pool2dSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt = {});
CaaTensor eval_batchnorm(const BatchNormSpec& layer, const CaaTensor& x, const CaaContext& ctx,
                         const EngineOptions& opt = {});
CaaTensor eval_activation(Activation kind, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt = {});
CaaTensor eval_softmax(const SoftmaxSpec& layer, const CaaTensor& x, const CaaContext& ctx,
                       const EngineOptions& opt = {});
CaaTensor eval_layer(const LayerSpec& layer, const CaaTensor& x, const CaaContext& ctx, const EngineOptions& opt = {});

struct RunResult {
    CaaTensor output;
    std::vector<LayerSummary> layers;
    std::vector<std::string> warnings;
};

RunResult run_model(const ModelSpec& model, const CaaTensor& input, const CaaContext& ctx,
                    const EngineOptions& opt = {});

}  // namespace caadnn
