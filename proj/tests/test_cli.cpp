#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "caadnn/cli.hpp"

namespace fs = std::filesystem;
using caadnn::run_cli;

namespace {

const std::string kFixtures = CAADNN_FIXTURES_DIR;

struct Result {
    int code;
    std::string out, err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("caadnn_cli_" + name); }

}  // namespace

TEST(Cli, MissingModelFile) {
    Result r = cli({"analyze", "--model", "/nonexistent/model.json", "--input", "x.json"});
    EXPECT_EQ(r.code, caadnn::kExitError);
    EXPECT_NE(r.err.find("model file not found"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(cli({}).code, caadnn::kExitError);
    EXPECT_EQ(cli({"analyze", "--model", "m.json"}).code, caadnn::kExitError);
    Result r = cli({"analyze", "--model", kFixtures + "/micro/identity.json", "--input", "x", "--require-stable"});
    EXPECT_EQ(r.code, caadnn::kExitError);
    EXPECT_NE(r.err.find("--p-star"), std::string::npos);
    EXPECT_EQ(cli({"analyze", "--help"}).code, caadnn::kExitOk);
}

TEST(Cli, PrecisionBelowUMaxIsRejected) {
    const std::string model = kFixtures + "/pendulum/model.json";
    const std::string input = kFixtures + "/pendulum/input.json";
    EXPECT_EQ(cli({"analyze", "--model", model, "--input", input, "--emulate-k", "24", "--u-max", "2^-7"}).code,
              caadnn::kExitOk);
    Result r = cli({"analyze", "--model", model, "--input", input, "--emulate-k", "6", "--u-max", "2^-7"});
    EXPECT_EQ(r.code, caadnn::kExitError);
    EXPECT_EQ(cli({"analyze", "--model", model, "--input", input, "--u-max", "0.3"}).code, caadnn::kExitError);
}

TEST(Cli, PendulumReportHasNoRelativeBound) {
    const fs::path report = temp("pendulum.json");
    Result r = cli({"analyze", "--model", kFixtures + "/pendulum/model.json", "--input",
                    kFixtures + "/pendulum/input.json", "--u-max", "2^-7", "--emulate-k", "11", "--report",
                    report.string()});
    ASSERT_EQ(r.code, caadnn::kExitOk) << r.err;
    const std::string json = slurp(report);
    EXPECT_NE(json.find("\"max_rel_bound_u\": {\n    \"value\": null,\n    \"unbounded\": true"), std::string::npos);
    EXPECT_NE(json.find("\"margins\": null"), std::string::npos);
    fs::remove(report);
}

TEST(Cli, ClassificationRunIsDeterministic) {
    const fs::path a = temp("a.json"), b = temp("b.json");
    std::vector<std::string> args = {"analyze",     "--model", kFixtures + "/micro/conv.json",
                                     "--input",     kFixtures + "/micro/conv_input.json",
                                     "--u-max",     "2^-7",    "--emulate-k",
                                     "11",          "--p-star", "0.60"};
    auto with = [&](const fs::path& p, const std::string& threads) {
        std::vector<std::string> v = args;
        v.insert(v.end(), {"--report", p.string(), "--threads", threads});
        return cli(v);
    };
    Result r = with(a, "1");
    ASSERT_EQ(r.code, caadnn::kExitOk) << r.err;
    ASSERT_EQ(with(b, "3").code, caadnn::kExitOk);
    const std::string json = slurp(a);
    EXPECT_EQ(json, slurp(b));
    EXPECT_NE(json.find("\"nu\": \"9.0909"), std::string::npos);
    EXPECT_NE(r.out.find("nu = 0.0909"), std::string::npos) << r.out;
    fs::remove(a);
    fs::remove(b);
}

TEST(Cli, RequireStableExitsTwoWhenUnstable) {
    // Over the declared input box the micro classifier is not certifiable.
    Result r = cli({"analyze", "--model", kFixtures + "/micro/conv.json", "--input",
                    kFixtures + "/micro/conv_input.json", "--p-star", "0.6", "--require-stable"});
    EXPECT_EQ(r.code, caadnn::kExitUnstable) << r.out << r.err;
    EXPECT_NE(r.out.find("NOT provably stable"), std::string::npos);
}

TEST(Cli, ElementaryOverridesAreReported) {
    const fs::path report = temp("eps.json");
    Result r = cli({"analyze", "--model", kFixtures + "/pendulum/model.json", "--input",
                    kFixtures + "/pendulum/input.json", "--eps-op", "tanh=1", "--report", report.string()});
    ASSERT_EQ(r.code, caadnn::kExitOk) << r.err;
    EXPECT_NE(slurp(report).find("\"tanh\": \"1"), std::string::npos);
    EXPECT_EQ(cli({"analyze", "--model", kFixtures + "/pendulum/model.json", "--input",
                   kFixtures + "/pendulum/input.json", "--eps-op", "tanh=-1"})
                  .code,
              caadnn::kExitError);
    fs::remove(report);
}
