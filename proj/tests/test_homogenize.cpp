#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "varhom/homogenize.hpp"

using namespace varhom;
using testing_support::params;

TEST(CellAverage, ConvexXIndependentEqualsL) {
    const auto L = make_builtin("p_power", params({{"p", 4.0}, {"d", 2}}));
    const std::vector<double> xi{0.5, -1.0};
    const double oracle = std::pow(1.25, 2.0);
    for (double t : {1.0, 3.0})
        for (double rho : {1.0, 0.25}) {
            const auto c = cell_average(L, xi, std::vector<double>{0.2, 0.7}, rho, t, 9);
            EXPECT_NEAR(c.value, oracle, 1e-8 * oracle) << "t=" << t << " rho=" << rho;
        }
}

TEST(CellAverage, LayeredIntegerScaling) {
    const auto L = testing_support::layered();
    for (int n : {1, 2, 3}) {
        const auto c = cell_average(L, std::vector<double>{1.0}, std::vector<double>{0.0}, 1.0, n, 33);
        EXPECT_NEAR(c.value, 1.6, 1e-6) << n;
    }
}

TEST(CellAverage, LaminateAlongLayersIsArithmeticMean) {
    const auto L = make_builtin("laminate_2d", params({}, {{"a", {1.0, 4.0}}}));
    const auto c = cell_average(L, std::vector<double>{0.0, 1.0}, std::vector<double>{0.0, 0.0}, 1.0, 1.0, 17);
    EXPECT_NEAR(c.value, testing_support::arithmetic_mean({1.0, 4.0}), 0.01 * 2.5);
}

TEST(CellAverage, RejectsNoncoerciveUnlessAllowed) {
    const auto L = make_builtin("double_well_1d");
    EXPECT_THROW(cell_average(L, std::vector<double>{0.0}, std::vector<double>{0.0}, 1.0, 1.0, 9), ValidationError);
    EXPECT_NO_THROW(cell_average(L, std::vector<double>{2.0}, std::vector<double>{0.0}, 1.0, 1.0, 9, {}, true));
}

TEST(Periodic, HarmonicMeanTimesSlopeSquared) {
    const auto L = testing_support::layered();
    PeriodicOptions opt;
    opt.n_max = 2;
    opt.resolution = 65;
    for (double xi : {-2.0, -1.0, 1.0, 2.0}) {
        const auto e = estimate_Lhom_periodic(L, std::vector<double>{xi}, opt);
        EXPECT_NEAR(e.estimate, 1.6 * xi * xi, 1e-3 * 1.6 * xi * xi) << xi;
        EXPECT_EQ(e.ns.size(), 2u);
        EXPECT_FALSE(e.richardson.has_value());
    }
}

TEST(Periodic, PPowerIsExact) {
    const auto L = make_builtin("p_power", params({{"p", 3.0}})).with_traits([] {
        IntegrandTraits t;
        t.periodic = true;
        return t;
    }());
    PeriodicOptions opt;
    opt.resolution = 17;
    const auto e = estimate_Lhom_periodic(L, std::vector<double>{1.5}, opt);
    EXPECT_NEAR(e.estimate, std::pow(1.5, 3.0), 1e-8);
}

TEST(Periodic, RequiresPeriodicDeclaration) {
    const auto L = make_builtin("p_power");
    EXPECT_THROW(estimate_Lhom_periodic(L, std::vector<double>{1.0}, PeriodicOptions{}), ValidationError);
}

TEST(Periodic, RichardsonIsReportedSeparately) {
    const auto L = make_builtin("laminate_2d", params({}, {{"a", {1.0, 4.0}}}));
    PeriodicOptions opt;
    opt.n_max = 2;
    opt.resolution = 17;
    opt.richardson = true;
    const auto e = estimate_Lhom_periodic(L, std::vector<double>{1.0, 0.0}, opt);
    ASSERT_TRUE(e.richardson.has_value());
    EXPECT_DOUBLE_EQ(*e.richardson, 2.0 * e.cells[1].value - e.cells[0].value);
    EXPECT_EQ(e.estimate, std::min(e.cells[0].value, e.cells[1].value));
}

TEST(XiGrid, TensorEnumeration) {
    const auto g = xi_grid({-1.0, 0.0}, {1.0, 2.0}, 3);
    ASSERT_EQ(g.size(), 9u);
    EXPECT_EQ(g[0], (std::vector<double>{-1.0, 0.0}));
    EXPECT_EQ(g[4], (std::vector<double>{0.0, 1.0}));
    EXPECT_EQ(g[8], (std::vector<double>{1.0, 2.0}));
    EXPECT_THROW(xi_grid({0.0}, {1.0}, 6), ValidationError);
}

TEST(HDiagnostic, PeriodicQuadraticIsCoherent) {
    const auto L = testing_support::layered();
    const std::vector<std::vector<double>> xs{{0.1}, {0.5}, {0.9}};
    HOptions opt;
    opt.resolution = 17;
    const auto rep = h_diagnostic(L, std::vector<double>{1.0}, xs, {0.5, 0.25}, {4.0, 8.0}, opt);
    EXPECT_TRUE(rep.numerically_h);
    EXPECT_LE(rep.max_gap, 1e-3);
    for (const auto& s : rep.samples) EXPECT_NEAR(s.upper, 1.6, 2e-3);
}

TEST(HDiagnostic, XIndependentHasZeroGap) {
    const auto L = make_builtin("p_power");
    HOptions opt;
    opt.resolution = 9;
    const auto rep = h_diagnostic(L, std::vector<double>{0.7}, {{0.2}, {0.6}}, {0.5, 0.25}, {1.0, 2.0}, opt);
    EXPECT_NEAR(rep.max_gap, 0.0, 1e-12);
}

TEST(HDiagnostic, PerturbationAwayFromOriginAveragesH) {
    // a in {1,4} plus h in {0, 2}: Dirichlet cells away from the bump see the
    // layered quadratic plus the mean of h
    const auto L = make_builtin("periodic_plus_perturbation",
                                params({{"bump_height", 10.0}, {"bump_radius", 0.01}}, {{"a", {1.0, 4.0}}, {"h", {0.0, 2.0}}}));
    HOptions opt;
    opt.resolution = 17;
    const auto rep = h_diagnostic(L, std::vector<double>{1.0}, {{0.3}, {0.7}}, {0.5, 0.25}, {4.0, 8.0}, opt);
    EXPECT_LE(rep.max_gap, opt.tolerance);
    for (const auto& s : rep.samples) EXPECT_NEAR(s.upper, 1.6 + 1.0, 2e-3);
}

TEST(HDiagnostic, ValidatesSchedules) {
    const auto L = testing_support::layered();
    EXPECT_THROW(h_diagnostic(L, std::vector<double>{1.0}, {{0.5}}, {0.25, 0.5}, {1.0}, HOptions{}), ValidationError);
    EXPECT_THROW(h_diagnostic(L, std::vector<double>{1.0}, {{0.5}}, {0.5}, {2.0, 1.0}, HOptions{}), ValidationError);
    EXPECT_THROW(h_diagnostic(L, std::vector<double>{1.0}, {}, {0.5}, {1.0}, HOptions{}), ValidationError);
}

TEST(Tables, HomogenizeCsvSchema) {
    const auto L = testing_support::layered();
    PeriodicOptions opt;
    opt.n_max = 2;
    opt.resolution = 9;
    const auto entries = homogenized_density(L, {{1.0}}, opt);
    const auto csv = homogenize_table(entries).str();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "xi0,rho,n,resolution,value,converged");
    EXPECT_EQ(homogenize_table(entries).size(), 2u);
}
