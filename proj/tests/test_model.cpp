#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "caadnn/error.hpp"
#include "caadnn/model.hpp"
#include "reference_model.hpp"

using namespace caadnn;

namespace {

const char* kSmallModel = R"({
  "format_version": 1,
  "name": "small",
  "input_shape": [3],
  "layers": [
    {"type": "dense", "weights": {"shape": [2, 3], "data": ["0x1p-1", 0.1, "-0x1.8p+1", 0, 1, 2]},
     "bias": {"shape": [2], "data": [0.25, "0x0p+0"]}},
    {"type": "tanh"},
    {"type": "dense", "weights": {"shape": [2, 2], "data": [1, -1, 0.5, 0.5]},
     "bias": {"shape": [2], "data": [0, 0]}},
    {"type": "softmax"}
  ]
})";

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Model, ParsesLayersAndCountsParameters) {
    ModelSpec m = parse_model(kSmallModel);
    EXPECT_EQ(m.name, "small");
    ASSERT_EQ(m.layers.size(), 4u);
    EXPECT_EQ(layer_tag(m.layers[1]), "tanh");
    EXPECT_EQ(m.parameter_count(), 6u + 2u + 4u + 2u);
    const auto& d = std::get<DenseSpec>(m.layers[0]);
    EXPECT_EQ(d.weights.data[0], 0.5);
    EXPECT_EQ(d.weights.data[2], -3.0);
    EXPECT_EQ(m.inexact_decimals(), 1u);  // the decimal 0.1
    EXPECT_EQ(infer_shapes(m).back(), Shape{2});
}

TEST(Model, RoundTripIsBitIdentical) {
    ModelSpec m = parse_model(kSmallModel);
    const std::string once = model_to_json(m);
    const std::string twice = model_to_json(parse_model(once));
    EXPECT_EQ(once, twice);
    const auto& d = std::get<DenseSpec>(parse_model(once).layers[0]);
    EXPECT_EQ(d.weights.data[1], 0.1);
}

TEST(Model, DenseMismatchNamesLayerZero) {
    ModelSpec m = parse_model(kSmallModel);
    m.input_shape = {4};
    const std::string msg = message_of([&] { validate(m); });
    EXPECT_NE(msg.find("layer 0"), std::string::npos) << msg;
    EXPECT_THROW(validate(m), ShapeError);
}

TEST(Model, SchemaErrorsCarryPaths) {
    std::string text = kSmallModel;
    text.replace(text.find("0.25"), 4, "\"abc\"");
    const std::string msg = message_of([&] { parse_model(text); });
    EXPECT_NE(msg.find("/layers/0/bias/data/0"), std::string::npos) << msg;

    std::string extra = kSmallModel;
    extra.replace(extra.find("\"name\""), 6, "\"colour\": 1, \"name\"");
    EXPECT_THROW(parse_model(extra), SchemaError);
    EXPECT_THROW(parse_model(R"({"format_version":1,"name":"x","input_shape":[2],"layers":[{"type":"attention"}]})"),
                 SchemaError);
    EXPECT_THROW(parse_model(R"({"format_version":1,"name":"x","input_shape":[2],
                                "layers":[{"type":"softmax"},{"type":"softmax"}]})"),
                 Error);
}

TEST(Model, MissingFileIsReported) {
    const std::string msg = message_of([] { load_model("/nonexistent/m.json"); });
    EXPECT_NE(msg.find("model file not found"), std::string::npos);
}

TEST(Model, SaveThenLoad) {
    const auto path = std::filesystem::temp_directory_path() / "caadnn_model_roundtrip.json";
    ModelSpec m = parse_model(kSmallModel);
    save_model(m, path.string());
    EXPECT_EQ(model_to_json(load_model(path.string())), model_to_json(m));
    std::filesystem::remove(path);
}

TEST(Tensor, ExamplesFromTheFormat) {
    InputTensor t = parse_tensor(R"({"shape":[2],"data":["0x1p0","0x1p1"]})");
    EXPECT_EQ(t.tensor.data, (std::vector<double>{1.0, 2.0}));
    EXPECT_FALSE(t.explicit_range);
    EXPECT_EQ(t.ranges[1], (std::pair<double, double>{2.0, 2.0}));

    InputTensor g = parse_tensor(R"({"shape":[3],"data":[0.5,-1.25,2],"range":[-6,6]})");
    for (const auto& r : g.ranges) EXPECT_EQ(r, (std::pair<double, double>{-6.0, 6.0}));

    EXPECT_THROW(parse_tensor(R"({"shape":[3],"data":[1,2]})"), SchemaError);
    EXPECT_THROW(parse_tensor(R"({"shape":[1],"data":[7],"range":[0,6]})"), Error);
}

TEST(Tensor, DecimalRangeEndpointsRoundOutward) {
    InputTensor t = parse_tensor(R"({"shape":[1],"data":[0.1],"range":["0.1","0.1"]})");
    EXPECT_LT(t.ranges[0].first, t.ranges[0].second);
    EXPECT_LE(t.ranges[0].first, t.tensor.data[0]);
    EXPECT_GE(t.ranges[0].second, t.tensor.data[0]);
}

TEST(Real, HexFloatRoundTrip) {
    EXPECT_EQ(hex_float(0.5), "0x1p-1");
    EXPECT_EQ(hex_float(0.1875), "0x1.8p-3");
    EXPECT_EQ(hex_float(0.0), "0x0p+0");
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double x = d(rng);
        bool exact = false;
        EXPECT_EQ(parse_real(hex_float(x), &exact), x);
        EXPECT_TRUE(exact);
    }
    bool exact = true;
    EXPECT_EQ(parse_real("0.1", &exact), 0.1);
    EXPECT_FALSE(exact);
    EXPECT_LT(parse_real_directed("0.1", true), parse_real_directed("0.1", false));
}

TEST(Model, RandomShapesPropagate) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        oracle::RandomModel rm = oracle::random_model(rng);
        EXPECT_NO_THROW(validate(rm.model));
        std::vector<Shape> shapes = infer_shapes(rm.model);
        ASSERT_EQ(shapes.size(), rm.model.layers.size() + 1);
        oracle::ReferenceModel ref{oracle::EmulatedRounding{24}};
        oracle::RefTensor t = ref.input(rm.model.input_shape, rm.input);
        for (std::size_t l = 0; l < rm.model.layers.size(); ++l) {
            t = ref.layer(rm.model.layers[l], t);
            ASSERT_EQ(t.shape, shapes[l + 1]) << layer_tag(rm.model.layers[l]);
            ASSERT_EQ(t.v.size(), element_count(t.shape));
        }
    }
}
