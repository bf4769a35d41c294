#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace caadnn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of binary64 values.
struct TensorSpec {
    Shape shape;
    std::vector<double> data;
    // Number of entries given in decimal whose binary64 value is not exactly
    // the written number.
    std::size_t inexact_decimals = 0;

    std::size_t size() const noexcept { return data.size(); }
};

struct DenseSpec {
    TensorSpec weights;  // [m, n], applied to the last axis
    TensorSpec bias;     // [m]
};

enum class Padding { valid, same };

struct Conv2dSpec {
    TensorSpec kernel;  // [kh, kw, c_in, c_out]
    TensorSpec bias;    // [c_out]
    std::array<std::size_t, 2> stride{1, 1};
    Padding padding = Padding::valid;
};

enum class PoolKind { max, average };

struct Pool2dSpec {
    PoolKind kind = PoolKind::max;
    std::array<std::size_t, 2> pool{2, 2};
    std::array<std::size_t, 2> stride{2, 2};
};

struct BatchNormSpec {
    TensorSpec gamma;
    TensorSpec beta;
    TensorSpec moving_mean;
    TensorSpec moving_var;
    double epsilon = 1e-3;
};

enum class Activation { relu, sigmoid, tanh };

struct ActivationSpec {
    Activation kind = Activation::relu;
};

struct SoftmaxSpec {
    int axis = -1;
};

struct FlattenSpec {};

// Inference-time identity.
struct DropoutSpec {
    double rate = 0.0;
};

using LayerSpec =
    std::variant<DenseSpec, Conv2dSpec, Pool2dSpec, BatchNormSpec, ActivationSpec, SoftmaxSpec, FlattenSpec, DropoutSpec>;

// The "type" tag used in model JSON ("dense", "maxpool2d", "tanh", ...).
std::string layer_tag(const LayerSpec& layer);

struct ModelSpec {
    int format_version = 1;
    std::string name;
    Shape input_shape;
    std::vector<LayerSpec> layers;

    std::size_t parameter_count() const;
    std::size_t inexact_decimals() const;
};

// Output shape of `layer` on input `in`; ShapeError names `index`.
Shape output_shape(const LayerSpec& layer, const Shape& in, std::size_t index);

// Shapes after every layer; element 0 is the input shape.
std::vector<Shape> infer_shapes(const ModelSpec& model);

// Shape checks plus the structural rules (at most one softmax).
void validate(const ModelSpec& model);

ModelSpec parse_model(std::string_view json_text);
ModelSpec load_model(const std::string& path);
std::string model_to_json(const ModelSpec& model);
void save_model(const ModelSpec& model, const std::string& path);

/// Input tensor with per-element ranges. Without an explicit "range" every
/// element gets the point range at its own value.
struct InputTensor {
    TensorSpec tensor;
    std::vector<std::pair<double, double>> ranges;
    bool explicit_range = false;
};

InputTensor parse_tensor(std::string_view json_text);
InputTensor load_tensor(const std::string& path);

// Lowercase C99 hexadecimal float ("0x1.8p-3"); round-trips exactly.
std::string hex_float(double x);

// Accepts hex-float or decimal. `exact` (optional) reports whether the text
// denotes exactly the returned binary64 value.
double parse_real(std::string_view text, bool* exact = nullptr);

// Directed variant used for range endpoints: rounds toward -inf when
// `downward`, else toward +inf.
double parse_real_directed(std::string_view text, bool downward);

}  // namespace caadnn
