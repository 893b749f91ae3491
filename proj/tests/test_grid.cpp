#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "varhom/grid.hpp"

using namespace varhom;
using testing_support::params;

namespace {

DiscreteField affine_on(const CubeDomain& dom, std::vector<double> xi, int m = 1) {
    return DiscreteField::affine(dom, AffineData::slope(std::move(xi), m, dom.dim()));
}

}  // namespace

TEST(Energy, UnitSlopeOnUnitCube) {
    for (int d = 1; d <= 3; ++d) {
        const auto L = make_builtin("p_power", params({{"d", d}}));
        std::vector<double> xi(d, 0.0);
        xi[0] = 1.0;
        const auto dom = CubeDomain::centered(std::vector<double>(d, 0.0), 1.0, 5);
        EXPECT_NEAR(energy(L, affine_on(dom, xi)), 1.0, 1e-14) << "d=" << d;
        EXPECT_EQ(energy(L, affine_on(dom, std::vector<double>(d, 0.0))), 0.0);
    }
}

TEST(Energy, LayeredAlignedMeshIsExact) {
    const auto L = testing_support::layered();
    const auto dom = CubeDomain::from_corner(std::vector<double>{0.0}, 1.0, 9);
    ASSERT_TRUE(mesh_aligned(L, dom));
    EXPECT_NEAR(energy(L, affine_on(dom, {1.0})), 2.5, 1e-14);
}

TEST(Energy, MisalignedMeshPicksMidpointAndSuggestsResolution) {
    const auto L = testing_support::layered();
    const auto dom = CubeDomain::from_corner(std::vector<double>{0.0}, 1.0, 4);  // h = 1/3
    EXPECT_FALSE(mesh_aligned(L, dom));
    EXPECT_EQ(select_rule(L, dom).kind, QuadratureRule::Kind::Midpoint);
    const auto r = aligned_resolution(L, dom, 4, 4);
    ASSERT_TRUE(r.has_value());
    EXPECT_TRUE(mesh_aligned(L, dom.with_resolution(*r)));
}

TEST(Gradient, VanishesAtAffineMinimizerOfQuadratic) {
    const auto L = make_builtin("p_power", params({{"d", 2}, {"m", 2}}));
    const auto dom = CubeDomain::centered(std::vector<double>{0.0, 0.0}, 1.0, 9);
    const auto f = affine_on(dom, {0.3, -1.0, 2.0, 0.5}, 2);
    const auto g = energy_gradient(L, f, QuadratureRule::gauss2(2));
    double mx = 0.0;
    for (double v : g) mx = std::max(mx, std::abs(v));
    EXPECT_LE(mx, 1e-10 * 4.0 * dom.spacing());
}

TEST(Gradient, MatchesFiniteDifferences) {
    const auto L = make_builtin("p_power", params({{"p", 3.0}, {"d", 2}}));
    const auto dom = CubeDomain::centered(std::vector<double>{0.0, 0.0}, 1.0, 7);
    auto f = affine_on(dom, {0.4, -0.8});
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    auto dofs = f.interior_dofs();
    for (auto& v : dofs) v = u(rng);
    f.set_interior_dofs(dofs);
    const auto rule = QuadratureRule::gauss2(2);
    const auto g = energy_gradient(L, f, rule);
    std::uniform_int_distribution<std::size_t> pick(0, dofs.size() - 1);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const std::size_t i = pick(rng);
        const double h = 1e-6;
        auto fp = f, fm = f;
        auto dp = dofs, dm = dofs;
        dp[i] += h;
        dm[i] -= h;
        fp.set_interior_dofs(dp);
        fm.set_interior_dofs(dm);
        const double fd = (energy(L, fp, rule) - energy(L, fm, rule)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-3, std::abs(g[i])));
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(Gradient, LocalToPerturbedNodeNeighbourhood) {
    const auto L = make_builtin("p_power", params({{"d", 2}}));
    const auto dom = CubeDomain::centered(std::vector<double>{0.0, 0.0}, 1.0, 9);
    auto f = affine_on(dom, {1.0, 0.0});
    auto dofs = f.interior_dofs();
    const std::size_t mid = dofs.size() / 2;  // interior node (4,4) in a 7x7 interior grid
    dofs[mid] = 0.1;
    f.set_interior_dofs(dofs);
    const auto g = energy_gradient(L, f, QuadratureRule::gauss2(2));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const int di = static_cast<int>(i % 7) - 3, dj = static_cast<int>(i / 7) - 3;
        if (std::abs(di) > 1 || std::abs(dj) > 1) {
            EXPECT_NEAR(g[i], 0.0, 1e-14) << i;
        }
    }
    EXPECT_GT(std::abs(g[mid]), 0.0);
}

TEST(Refine, AffineStaysAffineWithSameEnergy) {
    const auto L = testing_support::layered();
    const auto dom = CubeDomain::from_corner(std::vector<double>{0.0}, 2.0, 9);
    const auto f = affine_on(dom, {1.0});
    const auto r = f.refined();
    EXPECT_EQ(r.resolution(), 17);
    EXPECT_NEAR(energy(L, r), energy(L, f), 1e-13);
    for (double p : r.perturbation()) EXPECT_EQ(p, 0.0);
}

TEST(Refine, TwiceEqualsFourfoldAndNests) {
    const auto dom = CubeDomain::centered(std::vector<double>{0.0, 0.0}, 1.0, 5);
    auto f = affine_on(dom, {0.2, 0.1});
    auto dofs = f.interior_dofs();
    for (std::size_t i = 0; i < dofs.size(); ++i) dofs[i] = 0.01 * static_cast<double>(i);
    f.set_interior_dofs(dofs);
    const auto r2 = f.refined().refined();
    EXPECT_EQ(r2.resolution(), 17);
    // coarse nodes coincide with every fourth fine node
    std::vector<double> xc(2), vc(1), vf(1);
    for (std::size_t n = 0; n < f.node_count(); ++n) {
        f.node_coord(n, xc);
        r2.evaluate(xc, vf);
        EXPECT_NEAR(vf[0], f.value(n, 0), 1e-15);
    }
    // and the fine field is the same multilinear function
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int k = 0; k < 50; ++k) {
        const std::vector<double> x{u(rng), u(rng)};
        f.evaluate(x, vc);
        r2.evaluate(x, vf);
        EXPECT_NEAR(vc[0], vf[0], 1e-14);
    }
}

TEST(Field, PoincareOnZeroTraceFields) {
    // sharp constant on the unit interval: int phi^2 <= pi^-2 int phi'^2 for zero end values;
    // Q1 fields form a subspace and Gauss2 integrates both sides exactly
    const auto dom = CubeDomain::from_corner(std::vector<double>{0.0}, 1.0, 33);
    auto f = affine_on(dom, {0.0});
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        auto dofs = f.interior_dofs();
        for (auto& v : dofs) v = u(rng);
        f.set_interior_dofs(dofs);
        const auto [lp, glp] = lp_norms_pow(f, 2.0, QuadratureRule::gauss2(1));
        EXPECT_LE(lp, glp / (M_PI * M_PI) * (1.0 + 1e-9));
    }
}

TEST(Domain, ValidatesInput) {
    EXPECT_THROW(CubeDomain(std::vector<double>{0.0}, 0.5, 1), ValidationError);
    EXPECT_THROW(CubeDomain(std::vector<double>{0.0}, -1.0, 5), ValidationError);
    EXPECT_THROW(CubeDomain(std::vector<double>(4, 0.0), 0.5, 5), ValidationError);
    const auto d = CubeDomain::centered(std::vector<double>{0.5, 0.5}, 1.0, 5);
    EXPECT_DOUBLE_EQ(d.inner_margin(std::vector<double>{0.25, 0.5}), 0.25);
}
