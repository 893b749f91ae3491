#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"

using namespace varhom;
using testing_support::eval1;
using testing_support::params;

TEST(Builtin, PPowerVanishesAtZeroSlope) {
    const auto L = make_builtin("p_power", params({{"p", 2.0}, {"d", 2}, {"m", 2}}));
    const double x[2] = {0.3, -1.7}, v[2] = {5.0, -2.0}, xi[4] = {0, 0, 0, 0};
    EXPECT_EQ(L(x, v, xi), 0.0);
    const double xi2[4] = {1, 2, 0, -1};
    EXPECT_DOUBLE_EQ(L(x, v, xi2), 6.0);
}

TEST(Builtin, LayeredCoefficientIsPiecewise) {
    const auto L = testing_support::layered();
    EXPECT_DOUBLE_EQ(eval1(L, 0.1, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(eval1(L, 0.6, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(eval1(L, 1.1, 1.0), 1.0);   // period 1
    EXPECT_DOUBLE_EQ(eval1(L, -0.4, 1.0), 4.0);  // -0.4 = 0.6 - 1
    EXPECT_TRUE(L.traits().periodic);
}

TEST(Builtin, DoubleWellZerosAndBarrier) {
    const auto L = make_builtin("double_well_1d");
    EXPECT_EQ(eval1(L, 0.0, 1.0), 0.0);
    EXPECT_EQ(eval1(L, 0.0, -1.0), 0.0);
    EXPECT_EQ(eval1(L, 0.0, 0.0), 1.0);
    EXPECT_FALSE(L.bounds().coercive());
    const auto Lc = make_builtin("double_well_1d", params({{"c0", 0.5}}));
    EXPECT_TRUE(Lc.bounds().coercive());
    EXPECT_DOUBLE_EQ(eval1(Lc, 0.0, 1.0), 0.5);
}

TEST(Builtin, UnknownNameAndBadParameters) {
    EXPECT_THROW(make_builtin("nope"), ValidationError);
    EXPECT_THROW(make_builtin("p_power", params({{"p", 1.0}})), ValidationError);
    EXPECT_THROW(make_builtin("p_power", params({{"d", 4}})), ValidationError);
    EXPECT_THROW(make_builtin("p_power", params({{"d", 1.5}})), ValidationError);
    EXPECT_THROW(make_builtin("double_well_1d", params({{"c0", -1.0}})), ValidationError);
}

TEST(Rescale, SubstitutesXOverEps) {
    const auto L = testing_support::layered();
    EXPECT_DOUBLE_EQ(eval1(L.rescaled(0.5), 0.3, 1.0), 4.0);  // a(0.6)
}

TEST(Rescale, IdentityAndComposition) {
    const auto L = testing_support::layered({1.0, 2.0, 7.0});
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const auto L1 = L.rescaled(1.0);
    const auto Lab = L.rescaled(0.5).rescaled(0.25);
    const auto Lc = L.rescaled(0.125);
    for (int i = 0; i < 200; ++i) {
        const double x = u(rng), xi = u(rng);
        EXPECT_EQ(eval1(L1, x, xi), eval1(L, x, xi));
        EXPECT_EQ(eval1(Lab, x, xi), eval1(Lc, x, xi));
    }
}

TEST(Rescale, XIndependentIntegrandUnchanged) {
    const auto L = make_builtin("p_power", params({{"p", 3.0}}));
    for (double eps : {1.0, 0.3, 1e-4}) EXPECT_EQ(eval1(L.rescaled(eps), 0.77, 1.3), eval1(L, 0.77, 1.3));
    EXPECT_THROW(L.rescaled(0.0), ValidationError);
}

TEST(Rescale, BreakpointsScale) {
    const auto L = testing_support::layered().rescaled(0.25);
    EXPECT_DOUBLE_EQ(L.coefficient_grid().spacing[0], 0.125);
}

TEST(Growth, PPowerEqualityCase) {
    const auto rep = check_growth(make_builtin("p_power", params({{"p", 2.0}})), 500, 3);
    EXPECT_TRUE(rep.pass);
    EXPECT_NEAR(rep.lower_margin, 0.0, 1e-12);
    EXPECT_NEAR(rep.upper_margin, 0.0, 1e-12);
}

TEST(Growth, DoubleWellWithQuadraticCoercivityFails) {
    const auto L = make_builtin("double_well_1d", params({{"alpha", 1.0}, {"p", 2.0}}));
    const auto rep = check_growth(L, 500, 3);
    EXPECT_FALSE(rep.pass);
    // the anchor xi = 1 gives L = 0 < alpha |xi|^2
    EXPECT_LE(rep.lower_margin, -1.0 + 1e-12);
}

TEST(Growth, LayeredWithTableBounds) {
    const auto L = make_builtin("quadratic_coeff_1d", params({{"alpha", 1.0}, {"beta", 4.0}}, {{"a", {1.0, 4.0}}}));
    EXPECT_TRUE(check_growth(L, 1000, 9).pass);
    const auto bad = make_builtin("quadratic_coeff_1d", params({{"alpha", 2.0}}, {{"a", {1.0, 4.0}}}));
    EXPECT_FALSE(check_growth(bad, 1000, 9).pass);
}

TEST(Gradient, AnalyticMatchesCentralDifferences) {
    const auto L = make_builtin("p_power", params({{"p", 3.0}, {"d", 2}, {"m", 2}}));
    const double x[2] = {0, 0}, v[2] = {0, 0};
    double xi[4] = {0.3, -1.2, 0.7, 2.0};
    double dv[2], dxi[4];
    L.gradient(x, v, xi, dv, dxi);
    for (int j = 0; j < 4; ++j) {
        double xp[4], xm[4];
        std::copy(xi, xi + 4, xp);
        std::copy(xi, xi + 4, xm);
        xp[j] += 1e-6;
        xm[j] -= 1e-6;
        EXPECT_NEAR(dxi[j], (L(x, v, xp) - L(x, v, xm)) / 2e-6, 1e-6);
    }
}

TEST(Perturbation, InverseSqrtBumpIsDominated) {
    const auto fam = inverse_sqrt_bump([](std::span<const double> x) { return 0.5 / std::sqrt(norm2(x) + 1.0); });
    for (int d = 1; d <= 3; ++d) EXPECT_TRUE(check_domination(fam, d, 2000, 5).pass);
    const double x0[1] = {0.05};
    EXPECT_DOUBLE_EQ(fam.phi(0.1, x0) - fam.phi(0.01, x0), 1.0 / std::sqrt(0.1));
}

TEST(Family, PerturbedAddsPhi) {
    const auto W = make_builtin("p_power");
    const auto fam = perturbed_family(W, inverse_sqrt_bump([](std::span<const double>) { return 0.25; }));
    const auto L = fam(0.04);
    EXPECT_DOUBLE_EQ(eval1(L, 0.01, 1.0), 1.0 + 5.0 + 0.25);
    EXPECT_DOUBLE_EQ(eval1(L, 0.5, 1.0), 1.0 + 0.25);
    EXPECT_TRUE(L.traits().x_dependent);
}

TEST(Frozen, FreezesPositionAndValue) {
    const auto L = make_builtin("periodic_plus_perturbation", params({}, {{"a", {1.0, 4.0}}, {"h", {0.0, 3.0}}}));
    const double x0[1] = {0.6}, v0[1] = {0.0};
    const auto F = frozen(L, x0, v0);
    EXPECT_FALSE(F.traits().x_dependent);
    EXPECT_DOUBLE_EQ(eval1(F, 0.1, 1.0), eval1(L, 0.6, 1.0));
    EXPECT_DOUBLE_EQ(eval1(F, 0.1, 1.0), 4.0 + 3.0);
}
