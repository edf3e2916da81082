#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "kbp/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double scalar_root = 0.82828797161884326468;

const fs::path config_dir{KBP_CONFIG_DIR};

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "kbp_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(KBP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const fs::path& dir, const json& doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

std::string solve_args(const std::string& config, const fs::path& out) {
    return "solve --config " + (config_dir / config).string() + " --out " + out.string();
}

}  // namespace

TEST(Cli, SolveCaseStudy) {
    const fs::path out = scratch("solve_case_study");
    ASSERT_EQ(run(solve_args("case_study.json", out)), 0);
    const json fp = read_json(out / "fixedpoint.json");
    EXPECT_EQ(fp.at("schema"), "kbp.fixedpoint/1");
    EXPECT_NEAR(fp.at("integral").get<double>(), 0.9273, 0.005);
    EXPECT_EQ(fp.at("derivative_condition").at("status"), "satisfied");
    const std::string fhat = slurp(out / "fhat.csv");
    EXPECT_EQ(fhat.rfind("# schema: kbp.fhat/1\nmidpoint,value\n", 0), 0u);
    EXPECT_FALSE(fs::exists(out / "trace.csv"));
}

TEST(Cli, TraceWrittenOnRequest) {
    const fs::path dir = scratch("trace");
    const fs::path cfg = write_config(dir, json{{"grid_cells", 100}, {"solver", {{"trace", true}}}});
    ASSERT_EQ(run("solve --config " + cfg.string() + " --out " + dir.string()), 0);
    const std::string trace = slurp(dir / "trace.csv");
    EXPECT_EQ(trace.rfind("# schema: kbp.trace/1\niteration,residual,integral\n", 0), 0u);
}

TEST(Cli, SolveZeroKernelAndScalar) {
    const fs::path a = scratch("solve_zero");
    ASSERT_EQ(run(solve_args("zero_kernel.json", a)), 0);
    EXPECT_NEAR(read_json(a / "fixedpoint.json").at("integral").get<double>(), 0.1, 1e-12);
    const fs::path b = scratch("solve_scalar");
    ASSERT_EQ(run(solve_args("scalar_rank1.json", b)), 0);
    EXPECT_NEAR(read_json(b / "fixedpoint.json").at("integral").get<double>(), scalar_root, 1e-8);
}

TEST(Cli, ConfigEchoReloads) {
    const fs::path out = scratch("echo");
    ASSERT_EQ(run(solve_args("scalar_rank1.json", out)), 0);
    const kbp::ExperimentConfig c = kbp::load_config(out / "config.resolved.json");
    EXPECT_EQ(c.kernel, "constant:2");
    EXPECT_EQ(kbp::to_json(c), read_json(out / "config.resolved.json"));
}

TEST(Cli, Resilience) {
    const fs::path out = scratch("resilience");
    ASSERT_EQ(run("resilience --config " + (config_dir / "resilience_constant.json").string() + " --out " +
                  out.string()),
              0);
    const json r = read_json(out / "resilience.json");
    EXPECT_EQ(r.at("verdict"), "resilient");
    EXPECT_NEAR(r.at("spectral_radius").get<double>(), 0.5, 1e-12);
}

TEST(Cli, ResilienceRejectsSeededConfiguration) {
    const fs::path out = scratch("resilience_seeded");
    EXPECT_EQ(run("resilience --config " + (config_dir / "case_study.json").string() + " --out " + out.string()), 2);
}

TEST(Cli, FiniteMatchesStepKernelAndSandwich) {
    const fs::path f = scratch("finite");
    ASSERT_EQ(run("finite --config " + (config_dir / "finite.json").string() + " --out " + f.string()), 0);
    const json fin = read_json(f / "finite.json");
    EXPECT_NEAR(fin.at("tau_hat").get<double>(), fin.at("step_kernel_integral").get<double>(), 1e-8);
    const fs::path s = scratch("sandwich");
    ASSERT_EQ(run("sandwich --config " + (config_dir / "sandwich.json").string() + " --out " + s.string()), 0);
    const json sw = read_json(s / "sandwich.json");
    const auto& levels = sw.at("levels");
    ASSERT_EQ(levels.size(), 3u);
    EXPECT_EQ(levels[0].at("level"), 10);
    EXPECT_NEAR(levels[0].at("lower_integral").get<double>(), fin.at("tau_hat").get<double>(), 1e-8);
    for (std::size_t i = 1; i < levels.size(); ++i)
        EXPECT_LT(levels[i].at("width").get<double>(), levels[i - 1].at("width").get<double>());
    EXPECT_EQ(slurp(s / "sandwich.csv").rfind("# schema: kbp.sandwich/1\n", 0), 0u);
}

TEST(Cli, ConfigErrorsExitTwo) {
    const fs::path dir = scratch("bad_config");
    EXPECT_EQ(run("solve --config " + write_config(dir, json{{"kernal", "x"}}).string() + " --out " + dir.string()), 2);
    EXPECT_EQ(run("solve --config " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(run("solve --config " + write_config(dir, json{{"kernel", "wavy"}}).string() + " --out " + dir.string()),
              2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("solve --config " + (config_dir / "case_study.json").string() + " --threads 0"), 2);
}

TEST(Cli, NumericFailureExitsThree) {
    const fs::path dir = scratch("numeric_failure");
    const fs::path cfg = write_config(dir, json{{"grid_cells", 50}, {"solver", {{"max_iterations", 3}}}});
    EXPECT_EQ(run("solve --config " + cfg.string() + " --out " + dir.string()), 3);
}

TEST(Cli, SimulateIsReproducible) {
    const fs::path dir = scratch("reproducible");
    const fs::path cfg = write_config(
        dir, json{{"grid_cells", 100}, {"simulation", {{"n", 2000}, {"runs", 1}, {"bins", 10}, {"base_seed", 5}}}});
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
    EXPECT_EQ(slurp(dir / "a" / "runs.csv"), slurp(dir / "b" / "runs.csv"));
    EXPECT_EQ(slurp(dir / "a" / "bins.csv"), slurp(dir / "b" / "bins.csv"));
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --seed 6 --out " + (dir / "c").string()), 0);
    EXPECT_NE(slurp(dir / "a" / "runs.csv"), slurp(dir / "c" / "runs.csv"));
    EXPECT_EQ(slurp(dir / "a" / "runs.csv").rfind("# schema: kbp.runs/1\nseed,n,final_fraction,rounds\n", 0), 0u);
}

TEST(Cli, SpreadShrinksWithN) {
    const fs::path dir = scratch("spread");
    const fs::path cfg = write_config(
        dir, json{{"grid_cells", 100},
                  {"simulation", {{"n", {200, 1000, 5000}}, {"runs", 40}, {"bins", 10}, {"sampler", "skip"}}}});
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + dir.string()), 0);
    const json s = read_json(dir / "summary.json");
    EXPECT_EQ(s.at("schema"), "kbp.summary/1");
    const auto& r = s.at("results");
    ASSERT_EQ(r.size(), 3u);
    EXPECT_GT(r[0].at("std").get<double>(), r[1].at("std").get<double>());
    EXPECT_GT(r[1].at("std").get<double>(), r[2].at("std").get<double>());
}

TEST(Cli, SimulateCaseStudy) {
    const fs::path out = scratch("simulate_case_study");
    ASSERT_EQ(run("simulate --config " + (config_dir / "case_study.json").string() + " --out " + out.string()), 0);
    const json s = read_json(out / "summary.json");
    const double mean = s.at("results")[0].at("mean").get<double>();
    EXPECT_GE(mean, 0.92);
    EXPECT_LE(mean, 0.935);
    EXPECT_EQ(slurp(out / "bins.csv").rfind("# schema: kbp.bins/1\n", 0), 0u);
}

TEST(Cli, OracleWritesReferenceValues) {
    const fs::path out = scratch("oracle");
    ASSERT_EQ(run("oracle --cells 1000 --out " + out.string()), 0);
    const json o = read_json(out / "oracle.json");
    EXPECT_NEAR(o.at("scalar_constant2_seed0.1_threshold1").get<double>(), scalar_root, 1e-14);
    EXPECT_EQ(o.at("rank_one_fixed_points").size(), 10u);
}
