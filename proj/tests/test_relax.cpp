#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "varhom/relax.hpp"

using namespace varhom;
using testing_support::params;

namespace {

/// Convexification on a grid by checking every chord through each point.
std::vector<double> brute_convexification(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> out(ys);
    for (std::size_t k = 0; k < xs.size(); ++k)
        for (std::size_t i = 0; i <= k; ++i)
            for (std::size_t j = k; j < xs.size(); ++j) {
                if (i == j) continue;
                const double t = (xs[k] - xs[i]) / (xs[j] - xs[i]);
                out[k] = std::min(out[k], (1 - t) * ys[i] + t * ys[j]);
            }
    return out;
}

double double_well(double xi) { return (xi * xi - 1.0) * (xi * xi - 1.0); }

/// Grid convexification of the double well at xi (grid of 401 points on [-3,3]).
double double_well_envelope(double xi) {
    std::vector<double> xs, ys;
    for (int i = 0; i <= 400; ++i) {
        xs.push_back(-3.0 + 6.0 * i / 400.0);
        ys.push_back(double_well(xs.back()));
    }
    const auto env = brute_convexification(xs, ys);
    const auto k = static_cast<std::size_t>(std::lround((xi + 3.0) / 6.0 * 400.0));
    return env[k];
}

SolverConfig multistart(int n, std::uint64_t seed) {
    SolverConfig cfg;
    cfg.multistart_count = n;
    cfg.rng_seed = seed;
    return cfg;
}

}  // namespace

TEST(ConvexEnvelope, MatchesBruteForce) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> xs, ys;
    for (int i = 0; i < 60; ++i) {
        xs.push_back(i * 0.1);
        ys.push_back(std::sin(xs.back() * 2.0) + u(rng));
    }
    const auto a = lower_convex_envelope(xs, ys);
    const auto b = brute_convexification(xs, ys);
    for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12) << i;
}

TEST(L0Density, ConvexConstantFamilyIsL) {
    const auto L = make_builtin("p_power", params({{"p", 2.0}, {"d", 2}}));
    DensityOptions opt;
    opt.resolution = 9;
    const std::vector<double> x{0.5, 0.5}, v{0.0}, xi{1.0, -2.0};
    const auto e = l0_density(constant_family(L), x, v, xi, opt, {}, true);
    EXPECT_NEAR(e.value, 5.0, 5e-8);
    for (double r : e.rho_tail) EXPECT_NEAR(r, 5.0, 5e-8);
}

TEST(L0Density, DoubleWellAtZeroSlope) {
    const auto L = make_builtin("double_well_1d");
    DensityOptions opt;
    opt.resolution = 65;
    opt.rho_schedule = {0.5, 0.25};
    const auto e = l0_density(constant_family(L), std::vector<double>{0.5}, std::vector<double>{0.0},
                              std::vector<double>{0.0}, opt, multistart(6, 3), true);
    EXPECT_LE(e.value, 0.02);
    EXPECT_NEAR(e.value, double_well_envelope(0.0), 0.02);
}

TEST(L0Density, RescaledLayeredFamilyApproachesHarmonicMean) {
    const auto L = testing_support::layered();
    DensityOptions opt;
    opt.resolution = 33;
    opt.rho_schedule = {0.25};
    opt.eps_schedule = {0.25, 0.125, 0.0625};
    const auto e = l0_density(rescaled_family(L), std::vector<double>{0.3}, std::vector<double>{0.0},
                              std::vector<double>{1.0}, opt);
    EXPECT_NEAR(e.value, 1.6, 1e-3);
}

TEST(L0Density, ConstantFamilyTakesOneEps) {
    DensityOptions opt;
    opt.eps_schedule = {1.0, 0.5};
    EXPECT_THROW(l0_density(constant_family(make_builtin("p_power")), std::vector<double>{0.0},
                            std::vector<double>{0.0}, std::vector<double>{1.0}, opt, {}, true),
                 ValidationError);
}

TEST(L0Tilde, AffineFieldAgreesBitForBit) {
    const auto L = make_builtin("p_power", params({{"p", 3.0}}));
    const auto dom = CubeDomain::centered(std::vector<double>{0.5}, 1.0, 9);
    const auto u = DiscreteField::affine(dom, AffineData{{0.2}, {1.3}, {0.5}});
    DensityOptions opt;
    opt.resolution = 9;
    opt.rho_schedule = {0.25, 0.125};
    const std::vector<double> x{0.4};
    const auto a = l0_tilde_density(constant_family(L), u, x, opt, {}, true);
    std::vector<double> val(1), grad(1);
    u.evaluate(x, val, grad);
    const auto b = l0_density(constant_family(L), x, val, grad, opt, {}, true);
    EXPECT_EQ(a.value, b.value);
}

TEST(Qdac, ConvexIntegrandIsItself) {
    const auto L = make_builtin("p_power", params({{"p", 4.0}}));
    DensityOptions opt;
    opt.resolutions = {9, 17};
    const auto e = qdac_envelope(L, std::vector<double>{0.0}, std::vector<double>{0.0}, std::vector<double>{1.5}, opt);
    EXPECT_NEAR(e.value, std::pow(1.5, 4.0), 1e-8 * std::pow(1.5, 4.0));
}

TEST(Qdac, DoubleWellInsideAndOutsideTheWells) {
    const auto L = make_builtin("double_well_1d");
    DensityOptions opt;
    opt.resolutions = {33, 65};
    const auto cfg = multistart(8, 5);
    const auto inside = qdac_envelope(L, std::vector<double>{0.3}, std::vector<double>{1.0}, std::vector<double>{0.5}, opt, cfg);
    EXPECT_LE(inside.value, 0.02);
    EXPECT_NEAR(inside.value, double_well_envelope(0.5), 0.02);
    const auto outside = qdac_envelope(L, std::vector<double>{0.0}, std::vector<double>{0.0}, std::vector<double>{2.0}, opt, cfg);
    EXPECT_NEAR(outside.value, 9.0, 0.09);
}

TEST(Qdac, RequiresCaratheodory) {
    const auto L = make_builtin("p_power").with_traits([] {
        IntegrandTraits t;
        t.caratheodory = false;
        return t;
    }());
    EXPECT_THROW(qdac_envelope(L, std::vector<double>{0.0}, std::vector<double>{0.0}, std::vector<double>{1.0}, DensityOptions{}),
                 ValidationError);
}

TEST(FrozenCheck, IndependentIntegrandCoincides) {
    const auto L = make_builtin("p_power", params({{"p", 2.0}}));
    DensityOptions opt;
    opt.resolution = 17;
    opt.resolutions = {17};
    const auto rep = frozen_vs_unfrozen_check(L, {{{0.5}, {0.0}, {0.8}}}, opt);
    EXPECT_LE(rep.max_gap, 1e-8);
}

TEST(FrozenCheck, WeightedDoubleWellWithLowerOrderTerm) {
    // (1 + x^2)(xi^2 - 1)^2 + 0.1 v^2 at (x, v) = (0.5, 0), xi = 0
    const Integrand L(
        "weighted_double_well", 1, 1,
        [](std::span<const double> x, std::span<const double> v, std::span<const double> xi) {
            const double s = xi[0] * xi[0] - 1.0;
            return (1.0 + x[0] * x[0]) * s * s + 0.1 * v[0] * v[0];
        },
        GrowthBounds{0.0, 2.0, 4.0, [](std::span<const double>) { return 1.0; }},
        IntegrandTraits{.caratheodory = true, .x_dependent = true, .v_dependent = true});
    DensityOptions opt;
    opt.resolution = 65;
    opt.rho_schedule = {0.25, 0.125};
    opt.resolutions = {33, 65};
    const auto rep = frozen_vs_unfrozen_check(L, {{{0.5}, {0.0}, {0.0}}}, opt, multistart(8, 2));
    EXPECT_LE(rep.max_gap, 5e-3);
}

TEST(FrozenCheck, SmoothConvexWithVDependence) {
    const Integrand L(
        "convex_v", 1, 1,
        [](std::span<const double> x, std::span<const double> v, std::span<const double> xi) {
            return xi[0] * xi[0] + 0.5 * (1.0 + x[0]) * v[0] * v[0];
        },
        GrowthBounds{1.0, 2.0, 2.0, [](std::span<const double>) { return 0.0; }},
        IntegrandTraits{.caratheodory = true, .x_dependent = true, .v_dependent = true});
    DensityOptions opt;
    opt.resolution = 17;
    opt.rho_schedule = {0.1, 0.05, 0.025};
    opt.resolutions = {17};
    const auto rep = frozen_vs_unfrozen_check(L, {{{0.2}, {1.0}, {0.5}}}, opt);
    const double oracle = 0.25 + 0.5 * 1.2;
    EXPECT_NEAR(rep.frozen[0].value, oracle, 1e-8);
    EXPECT_NEAR(rep.unfrozen[0].value, oracle, 5e-3);
}

TEST(Relaxed, ConvexHasNoGap) {
    const auto L = make_builtin("p_power", params({{"d", 2}}));
    const auto dom = CubeDomain::centered(std::vector<double>{0.5, 0.5}, 1.0, 9);
    const auto u = DiscreteField::affine(dom, AffineData{{0.0}, {1.0, 2.0}, {0.5, 0.5}});
    RelaxOptions opt;
    opt.density.resolution = 9;
    opt.density.rho_schedule = {0.25};
    const auto rf = relaxed_functional(constant_family(L), u, opt);
    EXPECT_NEAR(rf.total, 5.0, 1e-7);
    EXPECT_NEAR(rf.direct_energy, 5.0, 1e-12);
    EXPECT_NEAR(rf.relaxation_gap, 0.0, 1e-7);
}

TEST(Relaxed, DoubleWellZeroSlopeRelaxesToNearlyZero) {
    const auto L = make_builtin("double_well_1d");
    const auto dom = CubeDomain::centered(std::vector<double>{0.5}, 1.0, 9);
    const auto u = DiscreteField::affine(dom, AffineData{{0.0}, {0.0}, {0.5}});
    RelaxOptions opt;
    opt.density.resolution = 65;
    opt.density.rho_schedule = {0.25};
    opt.points_per_axis = 2;
    const auto rf = relaxed_functional(constant_family(L), u, opt, multistart(6, 1));
    EXPECT_LE(rf.total, 0.02);
    EXPECT_NEAR(rf.direct_energy, 1.0, 1e-12);
    EXPECT_NEAR(rf.relaxation_gap, 1.0, 0.02);
}

TEST(Relaxed, EpsFamilyOfLayeredQuadratic) {
    const auto L = testing_support::layered();
    const auto dom = CubeDomain::centered(std::vector<double>{0.5}, 1.0, 9);
    const auto u = DiscreteField::affine(dom, AffineData{{0.0}, {1.0}, {0.5}});
    RelaxOptions opt;
    opt.method = DensityMethod::EpsFamily;
    opt.density.resolution = 33;
    opt.density.rho_schedule = {0.25};
    opt.density.eps_schedule = {0.25, 0.125};
    opt.points_per_axis = 4;
    opt.midpoint = true;
    const auto rf = relaxed_functional(rescaled_family(L), u, opt);
    EXPECT_NEAR(rf.total, 1.6, 1e-3);
}

TEST(Tables, DensityCsvSchema) {
    const auto L = make_builtin("p_power");
    DensityOptions opt;
    opt.resolution = 5;
    opt.rho_schedule = {0.5, 0.25};
    const auto e = l0_density(constant_family(L), std::vector<double>{0.0}, std::vector<double>{0.0},
                              std::vector<double>{1.0}, opt, {}, true);
    const auto csv = density_table({e}).str();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "x0,v0,xi0,method,rho,eps,value");
    EXPECT_EQ(density_table({e}).size(), 2u);
}
