// Cross-checks between the Dirichlet recovery construction and the density
// integral, and the pointwise chain of derivative bounds.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "varhom/relax.hpp"
#include "varhom/setfn.hpp"

namespace varhom {

struct RecoveryResult {
    double value = 0.0;  // sum over subcubes of m_eps(u_c; Q_i)
    std::vector<CubeDomain> cubes;
    std::vector<double> cell_values;
    bool converged = true;
};

/// Splits u's domain into k^d congruent subcubes and solves each with the
/// tangent map of u at the subcube centre as Dirichlet data.
inline RecoveryResult partition_recovery(const IntegrandFamily& family, const DiscreteField& u, int k, double eps,
                                         int resolution, const SolverConfig& cfg = {}) {
    require(k >= 1, "partition_recovery: k must be >= 1");
    require(eps > 0.0, "partition_recovery: eps must be > 0");
    const CubeDomain& O = u.domain();
    const int d = O.dim(), m = u.comps();
    const double side = O.side() / k;
    std::size_t total = 1;
    for (int a = 0; a < d; ++a) total *= static_cast<std::size_t>(k);
    const Integrand L = family(eps);
    require(L.dim() == d && L.comps() == m, "partition_recovery: field and integrand dimensions differ");

    RecoveryResult res;
    for (std::size_t i = 0; i < total; ++i) {
        std::vector<double> c(d);
        std::size_t rest = i;
        for (int a = 0; a < d; ++a) {
            c[a] = O.lower(a) + side * (static_cast<double>(rest % k) + 0.5);
            rest /= k;
        }
        res.cubes.push_back(detail::density_cube(L, c, side, resolution));
    }
    const auto sols = parallel_map(total, [&](std::size_t i) {
        const auto& q = res.cubes[i];
        std::vector<double> val(m), grad(static_cast<std::size_t>(m) * d);
        u.evaluate(q.center, val, grad);
        AffineData data{val, grad, q.center};
        const auto s = solve_cell(CellProblem{L, q, BoundaryData::from_affine(std::move(data)), cfg});
        return std::pair<double, bool>{s.value, s.converged};
    });
    for (const auto& [v, conv] : sols) {
        res.cell_values.push_back(v);
        res.value += v;
        res.converged = res.converged && conv;
    }
    return res;
}

struct GapReport {
    double dirichlet = 0.0;  // partition recovery
    double free = 0.0;       // integral of the density estimates
    double direct = 0.0;     // F(u; O)
    double relative_gap = 0.0;
    RecoveryResult recovery;
    RelaxedFunctional relaxed;
};

/// |recovery - density integral| / max(|recovery|, |density integral|, F(u;O)).
/// The direct energy in the denominator keeps the ratio meaningful when both
/// relaxed values vanish.
inline GapReport dirichlet_free_gap(const IntegrandFamily& family, const DiscreteField& u, int k,
                                    const RelaxOptions& opt, const SolverConfig& cfg = {}) {
    GapReport rep;
    const double eps = opt.density.eps_schedule.back();
    rep.recovery = partition_recovery(family, u, k, eps, opt.density.resolution, cfg);
    rep.relaxed = relaxed_functional(family, u, opt, cfg);
    rep.dirichlet = rep.recovery.value;
    rep.free = rep.relaxed.total;
    rep.direct = rep.relaxed.direct_energy;
    const double denom = std::max({std::abs(rep.dirichlet), std::abs(rep.free), std::abs(rep.direct)});
    rep.relative_gap = denom > 0.0 ? std::abs(rep.dirichlet - rep.free) / denom : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Pointwise chain

struct ChainSite {
    std::vector<double> x;
    /// lower derivative of m(u; .) <= liminf m(u; Q_rho)/rho^d
    /// <= limsup m(u_x; Q_rho)/rho^d <= liminf m(u_x; Q_rho)/rho^d
    std::array<double, 4> links{};
    std::vector<double> trace_values, tangent_values;  // per rho
    double violation = 0.0;  // largest excess of a link over its successor, minus tolerance
    bool flagged = false;
};

struct SandwichReport {
    std::vector<ChainSite> sites;
    double max_violation = 0.0;
    double tolerance_abs = 0.0, tolerance_rel = 0.0;
    bool pass = true;
};

struct SandwichOptions {
    std::vector<double> rho_schedule{0.25, 0.125, 0.0625};
    double eps = 1.0;
    int resolution = 17;
    std::size_t derivative_samples = 4;
    std::uint64_t seed = 0;
    std::size_t tail = 3;
    double tolerance_abs = 1e-6;
    double tolerance_rel = 1e-2;
};

inline SandwichReport sandwich_chain(const IntegrandFamily& family, const DiscreteField& u,
                                     const std::vector<std::vector<double>>& xs, const SandwichOptions& opt,
                                     const SolverConfig& cfg = {}) {
    require_strictly_monotone(opt.rho_schedule, true, "rho schedule");
    const Integrand L = family(opt.eps);
    const int m = u.comps(), d = u.dim();
    const auto trace = BoundaryData::from_trace(m, [&u, m](std::span<const double> y, std::span<double> out) {
        u.evaluate(y, out.first(static_cast<std::size_t>(m)));
    });
    const Cube ambient = Cube::from_domain(u.domain());
    CubeSetFunction G(
        [&](const Cube& q) {
            const CubeDomain dom = detail::density_cube(L, q.center().span(), q.side, opt.resolution);
            return solve_cell(CellProblem{L, dom, trace, cfg}).value;
        },
        ambient, true);

    SandwichReport rep;
    rep.tolerance_abs = opt.tolerance_abs;
    rep.tolerance_rel = opt.tolerance_rel;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        const auto& x = xs[s];
        ChainSite site;
        site.x = x;
        std::vector<double> val(m), grad(static_cast<std::size_t>(m) * d);
        u.evaluate(x, val, grad);
        const auto tangent = BoundaryData::from_affine(AffineData{val, grad, x});
        for (double rho : opt.rho_schedule) {
            const CubeDomain dom = detail::density_cube(L, x, rho, opt.resolution);
            site.trace_values.push_back(G(Cube::from_domain(dom)) / dom.volume());
            site.tangent_values.push_back(solve_cell(CellProblem{L, dom, tangent, cfg}).normalized_value);
        }
        // the centred cube has diameter rho * sqrt(d) here, so the derivative
        // schedule is expressed in diameters
        std::vector<double> diam;
        for (double r : opt.rho_schedule) diam.push_back(r * std::sqrt(static_cast<double>(d)));
        const auto der = lower_derivative(G, x, diam, opt.derivative_samples, opt.seed + s);
        site.links = {der.lower, tail_min(site.trace_values, opt.tail), tail_max(site.tangent_values, opt.tail),
                      tail_min(site.tangent_values, opt.tail)};
        for (int i = 0; i < 3; ++i) {
            const double tol = opt.tolerance_abs + opt.tolerance_rel * std::max(std::abs(site.links[i]), std::abs(site.links[i + 1]));
            const double excess = site.links[i] - site.links[i + 1] - tol;
            site.violation = std::max(site.violation, excess);
        }
        site.flagged = site.violation > 0.0;
        rep.max_violation = std::max(rep.max_violation, site.violation);
        rep.pass = rep.pass && !site.flagged;
        rep.sites.push_back(std::move(site));
    }
    return rep;
}

}  // namespace varhom
