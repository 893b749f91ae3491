#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "varhom/runner.hpp"

using namespace varhom;

namespace {

const std::filesystem::path kSource = VARHOM_SOURCE_DIR;

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / "varhom_cli_test" / name;
    std::filesystem::create_directories(p);
    return p;
}

std::filesystem::path write_config(const std::string& name, const std::string& text) {
    const auto p = scratch("configs") / name;
    std::ofstream(p) << text;
    return p;
}

struct Outcome {
    int code = -1;
    std::string output;
};

/// Runs the CLI with stderr folded into stdout.
Outcome cli(const std::string& args) {
    const std::string cmd = std::string(VARHOM_CLI) + " " + args + " 2>&1";
    Outcome o;
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) o.output += buf;
    const int status = pclose(pipe);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string last_line(const std::string& s) {
    auto end = s.find_last_not_of('\n');
    auto start = s.rfind('\n', end);
    return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

}  // namespace

TEST(Config, TypedGettersNameTheField) {
    const auto c = ExperimentConfig::parse("a = 1\nb = 'x'\n[s]\nrho = [0.5, 0.25]\n");
    EXPECT_EQ(c.number("a"), 1.0);
    EXPECT_EQ(c.integer("a"), 1);
    EXPECT_EQ(c.string("b"), "x");
    EXPECT_EQ(c.schedule("s.rho", true), (std::vector<double>{0.5, 0.25}));
    try {
        c.number("b");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
    try {
        c.schedule("s.rho", false);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'s.rho'"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("strictly increasing"), std::string::npos);
    }
    EXPECT_THROW(c.integer("missing"), ValidationError);
}

TEST(Config, ParseErrorIsValidation) {
    EXPECT_THROW(ExperimentConfig::parse("a = [1, \n"), ValidationError);
    EXPECT_THROW(ExperimentConfig::load("/nonexistent/file.toml"), ValidationError);
}

TEST(Config, BuildsIntegrandWithParams) {
    const auto c = ExperimentConfig::parse(R"(
[integrand]
name = "laminate_2d"
params = { a = [2.0, 3.0], m = 2 }
)");
    const auto L = c.integrand();
    EXPECT_EQ(L.dim(), 2);
    EXPECT_EQ(L.comps(), 2);
    EXPECT_DOUBLE_EQ(L.bounds().alpha, 2.0);
}

TEST(Config, SeedRequiredOnRandomizedPaths) {
    const auto c = ExperimentConfig::parse("operation = 'cell'\n[integrand]\nname = 'double_well_1d'\n[solver]\nmultistart = 4\n");
    EXPECT_THROW(run_operation(c, ""), ValidationError);
    const auto r = run_operation(c, "", RunOptions{std::uint64_t{3}});
    EXPECT_EQ(r.operation, "cell");
}

TEST(Config, SolverSectionValidated) {
    const auto c = ExperimentConfig::parse("[solver]\nquadrature = 'simpson'\n");
    EXPECT_THROW(c.solver(0), ValidationError);
    const auto d = ExperimentConfig::parse("[solver]\nbacktrack = 1.5\n");
    EXPECT_THROW(d.solver(0), ValidationError);
}

TEST(Runner, HomogenizeFinalRowIsHarmonicMean) {
    const auto c = ExperimentConfig::load(kSource / "configs" / "homogenize.toml");
    const auto r = run_operation(c, "");
    // columns: xi0,rho,n,resolution,value,converged
    const auto row = last_line(r.csv);
    const auto upto = row.substr(0, row.rfind(','));
    EXPECT_NEAR(std::stod(upto.substr(upto.rfind(',') + 1)), 1.6, 1e-3);
}

TEST(Runner, EveryOperationRunsOnItsSampleConfig) {
    for (const auto& f : std::filesystem::directory_iterator(kSource / "configs")) {
        if (f.path().extension() != ".toml") continue;
        const auto c = ExperimentConfig::load(f.path());
        const auto r = run_operation(c, "");
        EXPECT_FALSE(r.csv.empty()) << f.path();
        EXPECT_EQ(r.summary["operation"], r.operation) << f.path();
    }
}

TEST(Runner, UnknownOperation) {
    const auto c = ExperimentConfig::parse("operation = 'integrate'\n");
    EXPECT_THROW(run_operation(c, ""), ValidationError);
    EXPECT_THROW(run_operation(ExperimentConfig::parse(""), ""), ValidationError);
}

TEST(Cli, RunHomogenizeWritesArtifacts) {
    const auto out = scratch("homog");
    const auto o = cli("run " + (kSource / "configs" / "homogenize.toml").string() + " --out " + out.string());
    ASSERT_EQ(o.code, 0) << o.output;
    const auto csv = slurp(out / "homogenize.csv");
    const auto row = last_line(csv);
    const auto upto = row.substr(0, row.rfind(','));
    EXPECT_NEAR(std::stod(upto.substr(upto.rfind(',') + 1)), 1.6, 1e-3);
    EXPECT_TRUE(std::filesystem::exists(out / "homogenize.json"));
}

TEST(Cli, IncreasingRhoScheduleExitsTwo) {
    const auto p = write_config("bad_rho.toml", R"(
operation = "homogenize"
[integrand]
name = "quadratic_coeff_1d"
[homogenize]
mode = "h"
[geometry]
xi = [1.0]
points = [[0.5]]
[schedules]
rho = [0.25, 0.5]
t = [1.0, 2.0]
)");
    const auto o = cli("run " + p.string());
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.output.find("schedules.rho"), std::string::npos) << o.output;
}

TEST(Cli, NoncoerciveHomogenizeExitsTwo) {
    const auto p = write_config("noncoercive.toml", R"(
operation = "homogenize"
[integrand]
name = "double_well_1d"
[geometry]
xi = [1.0]
)");
    const auto o = cli("homogenize --config " + p.string());
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.output.find("not coercive"), std::string::npos) << o.output;
}

TEST(Cli, MissingFileExitsTwo) {
    const auto o = cli("run /nonexistent/config.toml");
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.output.find("not found"), std::string::npos);
}

TEST(Cli, SeedFlagOverridesConfig) {
    const auto p = write_config("needs_seed.toml", R"(
operation = "cell"
[integrand]
name = "double_well_1d"
[geometry]
center = [0.0]
resolution = 17
xi = [0.0]
[solver]
multistart = 4
)");
    EXPECT_EQ(cli("run " + p.string() + " --out " + scratch("seed").string()).code, 2);
    EXPECT_EQ(cli("cell --config " + p.string() + " --seed 4 --out " + scratch("seed").string()).code, 0);
}

TEST(Cli, VerifyConvexAndUnknownSuite) {
    const auto ok = cli("verify convex --seed 1");
    EXPECT_EQ(ok.code, 0) << ok.output;
    EXPECT_NE(ok.output.find("PASS criterion 1"), std::string::npos);
    EXPECT_EQ(cli("verify nope").code, 2);
}

TEST(Cli, IdenticalRunsGiveIdenticalCsv) {
    const auto cfg = (kSource / "configs" / "derivative.toml").string();
    ASSERT_EQ(cli("run " + cfg + " --out " + scratch("det1").string() + " --jobs 1").code, 0);
    ASSERT_EQ(cli("run " + cfg + " --out " + scratch("det2").string() + " --jobs 3").code, 0);
    EXPECT_EQ(slurp(scratch("det1") / "derivative.csv"), slurp(scratch("det2") / "derivative.csv"));
}
