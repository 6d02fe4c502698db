#include "cli.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = eqport::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string config(const std::string& name)
{
    return std::string(EQPORT_CONFIG_DIR) + "/" + name;
}

class Cli : public ::testing::Test
{
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() / ("eqport_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& sub) const { return (dir_ / sub).string(); }

    fs::path dir_;
};

json read_json(const std::string& p)
{
    std::ifstream in(p);
    return json::parse(in);
}

std::vector<std::vector<std::string>> read_csv(const std::string& p)
{
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            cells.emplace_back();
        }
        rows.push_back(cells);
    }
    return rows;
}

const std::vector<std::string> kFastVerify = {"--paths", "20000", "--adjoint-paths", "5000", "--target-outer", "50",
                                              "--target-inner", "50"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace

TEST_F(Cli, SolveQuadraticWithRateMultiplierGivesZeroGain)
{
    const Outcome o = run_cli({"solve", "--utility", "quadratic", "--lambda-equals-r", "--config",
                               config("quadratic_flat.json"), "--out", path("solve")});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = read_csv(path("solve/coefficients.csv"));
    ASSERT_GT(rows.size(), 2u);
    std::size_t col = 0;
    while (rows[0][col] != "alpha_1") {
        ++col;
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(std::stod(rows[i][col]), 0.0);
    }
    EXPECT_TRUE(fs::exists(path("solve/residual.csv")));
    EXPECT_EQ(read_json(path("solve/run.json"))["resolved"]["lambda"], "r");
}

TEST_F(Cli, LambdaTerminalMismatchIsSolverError)
{
    const Outcome o = run_cli({"lambda", "--config", config("terminal_mismatch.json"), "--out", path("lambda")});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("terminal mismatch"), std::string::npos);
    std::ifstream diag(path("lambda/diagnostic.txt"));
    std::string text((std::istreambuf_iterator<char>(diag)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("NoSolution"), std::string::npos);
}

TEST_F(Cli, LambdaSmoothTarget)
{
    const Outcome o = run_cli({"lambda", "--config", config("quadratic_smooth.json"), "--out", path("lambda")});
    ASSERT_EQ(o.code, 0) << o.err;
    const auto rows = read_csv(path("lambda/lambda.csv"));
    EXPECT_EQ(rows.size(), 1025u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_LT(std::abs(std::stod(rows[i][2])), 1e-8);
    }
}

TEST_F(Cli, VerifyCubicParticularPasses)
{
    const Outcome o = run_cli(with({"verify", "--config", config("cubic_particular.json"), "--utility", "cubic",
                                    "--out", path("verify")},
                                   kFastVerify));
    EXPECT_EQ(o.code, 0) << o.out << o.err;
    const json r = read_json(path("verify/report.json"));
    EXPECT_EQ(r["verdict"], "PASS");
    const json side = read_json(path("verify/run.json"));
    EXPECT_EQ(side["seed"], 7);
    EXPECT_EQ(side["market"]["horizon"], 1.0);

    const Outcome rep = run_cli({"report", "--in", path("verify")});
    EXPECT_EQ(rep.code, 0);
    EXPECT_NE(rep.out.find("PASS"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("verify/report_curves.csv")));
    EXPECT_TRUE(fs::exists(path("verify/report_slopes.csv")));
}

TEST_F(Cli, CurvesRoundTripMatchesInProcess)
{
    for (const char* u : {"cubic", "quartic", "quadratic"}) {
        const std::string cfg = config(std::string(u) == "quadratic" ? "quadratic_smooth.json" : "quartic.json");
        ASSERT_EQ(run_cli({"solve", "--utility", u, "--config", cfg, "--out", path("s")}).code, 0);
        const std::vector<std::string> fast = {"--paths", "2000", "--adjoint-paths", "500", "--target-outer", "10",
                                               "--target-inner", "10"};
        run_cli(with({"verify", "--utility", u, "--config", cfg, "--out", path("a")}, fast));
        run_cli(with({"verify", "--utility", u, "--config", cfg, "--curves", path("s/coefficients.csv"), "--out",
                      path("b")},
                     fast));
        const json a = read_json(path("a/report.json"));
        const json b = read_json(path("b/report.json"));
        EXPECT_EQ(a["residual_sup"], b["residual_sup"]) << u;
        ASSERT_EQ(a["curves"].size(), b["curves"].size());
        for (std::size_t i = 0; i < a["curves"].size(); ++i) {
            EXPECT_EQ(a["curves"][i]["residual"], b["curves"][i]["residual"]) << u << " row " << i;
        }
    }
}

TEST_F(Cli, NegativePartExitCodes)
{
    EXPECT_EQ(run_cli({"verify", "--config", config("negpart_equal.json"), "--out", path("e")}).code, 0);
    EXPECT_EQ(run_cli({"verify", "--config", config("negpart_below.json"), "--out", path("b")}).code, 0);
    const Outcome f = run_cli({"verify", "--config", config("negpart_above.json"), "--out", path("a")});
    EXPECT_EQ(f.code, 3);
    EXPECT_EQ(read_json(path("a/report.json"))["negative_part"]["analytic"], "FAILS");
}

TEST_F(Cli, SimulateFlagsWinOverConfig)
{
    const Outcome o = run_cli({"simulate", "--config", config("two_asset.json"), "--paths", "64", "--steps", "8",
                               "--seed", "5", "--scheme", "euler", "--out", path("sim")});
    ASSERT_EQ(o.code, 0) << o.err;
    const json side = read_json(path("sim/run.json"));
    EXPECT_EQ(side["seed"], 5);
    EXPECT_EQ(side["resolved"]["paths"], 64);
    EXPECT_EQ(side["resolved"]["scheme"], "euler");
    EXPECT_EQ(side["resolved"]["antithetic"], true);
    const json summary = read_json(path("sim/summary.json"));
    EXPECT_EQ(summary["n_paths"], 64);
    EXPECT_EQ(read_csv(path("sim/paths.csv")).size(), 1u + 64u * 9u);

    ASSERT_EQ(run_cli({"simulate", "--config", config("two_asset.json"), "--paths", "64", "--steps", "8", "--seed",
                       "5", "--scheme", "euler", "--workers", "3", "--out", path("sim2")})
                  .code,
              0);
    std::ifstream a(path("sim/paths.csv"));
    std::ifstream b(path("sim2/paths.csv"));
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    EXPECT_EQ(sa, sb);
}

TEST_F(Cli, OutputDirectoryFromEnvironment)
{
    const std::string target = path("from_env");
    ::setenv("EQPORT_OUT_DIR", target.c_str(), 1);
    const Outcome o = run_cli({"solve", "--utility", "cubic", "--config", config("cubic_particular.json")});
    ::unsetenv("EQPORT_OUT_DIR");
    ASSERT_EQ(o.code, 0) << o.err;
    EXPECT_TRUE(fs::exists(target + "/coefficients.csv"));
}

TEST_F(Cli, ConfigErrors)
{
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--config", path("missing.json")}).code, 1);
    {
        std::ofstream bad(path("bad.json"));
        bad << "{\"horizon\": 1, \"r\": ";
    }
    EXPECT_EQ(run_cli({"solve", "--config", path("bad.json"), "--out", path("x")}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--utility", "quintic", "--config", config("cubic_particular.json"), "--out",
                       path("x")})
                  .code,
              1);
    EXPECT_EQ(run_cli({"solve", "--utility", "negative_part", "--config", config("cubic_particular.json"), "--out",
                       path("x")})
                  .code,
              1);
    EXPECT_EQ(run_cli({"report", "--in", dir_.string()}).code, 1);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}
