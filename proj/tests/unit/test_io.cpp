#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "mkit/experiments.hpp"

using namespace mkit;

namespace {

Json config(const std::string& name) { return load_json_file(std::string(MKIT_CONFIG_DIR) + "/" + name); }

RunOptions options() {
    RunOptions o;
    o.base_dir = MKIT_CONFIG_DIR;
    return o;
}

std::vector<std::string> data_rows(const std::string& csv) {
    std::vector<std::string> rows;
    std::istringstream in(csv);
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        rows.push_back(line);
    }
    return rows;
}

}  // namespace

TEST(Json, ExpressionRoundTrip) {
    const Json j = Json::parse(R"(["+", ["*", 2, ["var", 0]], ["sin", ["var", 1]], ["pow", ["var", 0], 3],
                                 ["-", ["var", 1]], ["/", 1, ["+", 1, ["var", 0]]], ["psi", 1.5, ["var", 1]]])");
    const Expr e = expr_from_json(j);
    const double v[2] = {0.4, 1.2};
    const double want = 0.8 + std::sin(1.2) + 0.064 - 1.2 + 1 / 1.4 + psi_bump(1.5, 1.2);
    EXPECT_NEAR(evaluate(e, v), want, 1e-14);
    EXPECT_NEAR(evaluate(expr_from_json(expr_to_json(e)), v), want, 1e-14);
    EXPECT_THROW((void)expr_from_json(Json::parse(R"(["frobnicate", 1])")), ConfigurationError);
    EXPECT_THROW((void)expr_from_json(Json::parse(R"("x")")), ConfigurationError);
}

TEST(Json, NoiseSpecs) {
    EXPECT_EQ(noise_from_json(Json::parse(R"({"standard_gaussian": 3})")).size(), 3u);
    EXPECT_EQ(noise_from_json(Json::parse(R"({"brownian_grid": {"drivers": 2, "level": 2}})")).size(), 8u);
    const NoiseSpec s = noise_from_json(Json::parse(
        R"({"components": [{"law": "gaussian", "mean": 1, "variance": 2}, {"law": "exponential", "rate": 3}],
            "weights": [{"kind": "constant", "value": 0.5}, {"kind": "cutoff", "center": 2, "inner": 0.5, "outer": 1}]})"));
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s.log_density_grad(1, 1.0), -3.0);
    EXPECT_DOUBLE_EQ(s.weight(0, 0.0), 0.5);
    const NoiseSpec back = noise_from_json(noise_to_json(s));
    EXPECT_DOUBLE_EQ(back.weight(1, 2.2), s.weight(1, 2.2));
    EXPECT_THROW((void)noise_from_json(Json::parse(R"({"components": [{"law": "cauchy"}]})")), ConfigurationError);
}

TEST(Json, JumpModel) {
    const JumpModel d = jump_model_from_json(Json("default"));
    EXPECT_NEAR(JumpSystem(d, 4).lambda(), 20.0, 1e-12);
    const JumpModel g = jump_model_from_json(Json::parse(
        R"({"dim": 1, "jump": [["var", 0]], "drift": [0], "marks": {"family": "gaussian", "scale": 1},
            "rate": 1, "rate_bound": 1, "x0": [0]})"));
    EXPECT_EQ(g.marks.family, MarkFamily::Gaussian);
}

TEST(Runner, DensityBatteryHasTenRowsAndIsReproducible) {
    Json cfg = config("gaussian_density.json");
    cfg["samples"] = 20000;
    cfg.erase("expected");
    const RunOutput a = run_density(cfg, options());
    EXPECT_EQ(data_rows(a.csv).size(), 10u);
    EXPECT_NE(a.csv.find("# seed=20240611"), std::string::npos);
    RunOptions o = options();
    o.workers = 3;
    EXPECT_EQ(run_density(cfg, o).csv, a.csv);
    o.seed = 5;
    const RunOutput c = run_density(cfg, o);
    EXPECT_NE(c.csv, a.csv);
    EXPECT_NE(c.csv.find("# seed=5"), std::string::npos);
}

TEST(Runner, SeedIsMandatory) {
    Json cfg = config("gaussian_density.json");
    cfg.erase("seed");
    EXPECT_THROW((void)run_density(cfg, options()), ConfigurationError);
}

TEST(Runner, MissingModelFile) {
    Json cfg = config("gaussian_density.json");
    cfg["noise"] = "no_such_model.json";
    EXPECT_THROW((void)run_density(cfg, options()), ConfigurationError);
}

TEST(Runner, IbpBatteryExitStatuses) {
    Json cfg = config("ibp_battery.json");
    cfg["samples"] = 20000;
    const RunOutput ok = run_ibp_suite(cfg, options());
    EXPECT_EQ(ok.status, 0) << ok.csv;
    EXPECT_EQ(data_rows(ok.csv).size(), cfg["tests"].size());
    Json neg = config("ibp_negative.json");
    neg["samples"] = 20000;
    EXPECT_EQ(run_ibp_suite(neg, options()).status, 1);
    EXPECT_THROW((void)run_ibp_suite(config("ibp_empty.json"), options()), ConfigurationError);
}

TEST(Runner, JumpSingleLevelAndHeader) {
    const RunOutput r = run_jump_convergence(config("jump_single.json"), options());
    const auto rows = data_rows(r.csv);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].substr(0, rows[0].find(',', rows[0].find(',') + 1)), "4,20");
    EXPECT_NE(r.csv.find("# seed=5"), std::string::npos);
    EXPECT_NE(r.csv.find("# lambda_M=4:20"), std::string::npos);
    EXPECT_NE(rows[0].find(",0,"), std::string::npos);
}

TEST(Runner, JumpDefaultLevels) {
    Json cfg = config("jump_default.json");
    cfg["paths"] = 2000;
    cfg["density_paths"] = 0;
    cfg["sobolev_paths"] = 0;
    cfg["profile_paths"] = 0;
    const RunOutput r = run_jump_convergence(cfg, options());
    EXPECT_EQ(data_rows(r.csv).size(), 4u);
    EXPECT_NE(r.csv.find("# lambda_M=2:12;4:20;6:28;8:36"), std::string::npos);
}

TEST(Runner, EulerConfigs) {
    Json cfg = config("euler_const.json");
    cfg["hist_samples"] = 20000;
    cfg["density_samples"] = 2000;
    const RunOutput r = run_euler_tv(cfg, options());
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(data_rows(r.csv).size(), 5u);
}

TEST(Runner, Diagnostics) {
    Json cfg = config("diagnostics.json");
    cfg["samples"] = 2000;
    const RunOutput r = run_diagnostics(cfg, options());
    EXPECT_NE(r.csv.find("\nU,"), std::string::npos);
    EXPECT_NE(r.csv.find("\nQ_pair,"), std::string::npos);
    EXPECT_NE(r.csv.find("unbounded,0"), std::string::npos);
}
