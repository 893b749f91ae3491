// Relaxed densities: the cell-problem estimator of the Gamma-limit density,
// the frozen-variable (quasiconvex) envelope, and assembly of the relaxed
// functional over a cube.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "varhom/dirichlet.hpp"
#include "varhom/io.hpp"
#include "varhom/parallel.hpp"

namespace varhom {

enum class DensityMethod { ConstantFamily, EpsFamily, FrozenDac };

inline const char* method_name(DensityMethod m) {
    switch (m) {
        case DensityMethod::ConstantFamily: return "constant_family";
        case DensityMethod::EpsFamily: return "eps_family";
        case DensityMethod::FrozenDac: return "frozen_dac";
    }
    return "?";
}

inline DensityMethod parse_method(const std::string& s) {
    if (s == "constant_family") return DensityMethod::ConstantFamily;
    if (s == "eps_family") return DensityMethod::EpsFamily;
    if (s == "frozen_dac") return DensityMethod::FrozenDac;
    throw ValidationError("unknown density method '" + s + "'");
}

struct DensityEstimate {
    std::vector<double> x, v, xi;
    double value = kInf;
    DensityMethod method = DensityMethod::ConstantFamily;
    std::vector<double> rho_schedule;            // or resolutions for frozen_dac
    std::vector<double> eps_schedule;
    std::vector<std::vector<double>> eps_tails;  // [rho][eps] normalized cell values
    std::vector<double> rho_tail;                // per rho: eps limsup proxy
    bool converged = true;
};

struct DensityOptions {
    std::vector<double> rho_schedule{0.5, 0.25, 0.125};  // strictly decreasing
    std::vector<double> eps_schedule{1.0};               // strictly decreasing
    int resolution = 33;                                 // nodes per edge of Q_rho(x)
    std::vector<int> resolutions{17, 33, 65};            // frozen_dac: strictly increasing
    std::size_t tail = 3;
};

namespace detail {

inline CubeDomain density_cube(const Integrand& L, std::span<const double> x, double rho, int resolution) {
    CubeDomain dom = CubeDomain::centered(x, rho, resolution);
    if (L.traits().x_dependent && L.coefficient_grid().any() && !mesh_aligned(L, dom))
        if (auto r = aligned_resolution(L, dom, resolution, 4)) dom = dom.with_resolution(*r);
    return dom;
}

inline void check_point(const Integrand& L, std::span<const double> x, std::span<const double> v,
                        std::span<const double> xi) {
    require(static_cast<int>(x.size()) == L.dim(), "density: x has the wrong dimension");
    require(static_cast<int>(v.size()) == L.comps(), "density: v has the wrong dimension");
    require(static_cast<int>(xi.size()) == L.dim() * L.comps(), "density: xi must have m*d entries");
}

}  // namespace detail

/// limsup_rho limsup_eps of the normalized cell infimum on Q_rho(x) with
/// affine data v + xi (y - x). The competitor's zeroth-order argument moves
/// with y; nothing is frozen. For a constant family pass a single eps.
inline DensityEstimate l0_density(const IntegrandFamily& family, std::span<const double> x, std::span<const double> v,
                                  std::span<const double> xi, const DensityOptions& opt, const SolverConfig& cfg = {},
                                  bool constant_family = false) {
    require_strictly_monotone(opt.rho_schedule, true, "rho schedule");
    require_strictly_monotone(opt.eps_schedule, true, "eps schedule");
    for (double r : opt.rho_schedule) require(r > 0.0, "rho schedule: values must be > 0");
    for (double e : opt.eps_schedule) require(e > 0.0, "eps schedule: values must be > 0");
    require(!constant_family || opt.eps_schedule.size() == 1, "l0_density: a constant family takes a single eps");
    require(opt.tail >= 1, "l0_density: tail length must be >= 1");

    DensityEstimate est;
    est.x.assign(x.begin(), x.end());
    est.v.assign(v.begin(), v.end());
    est.xi.assign(xi.begin(), xi.end());
    est.method = constant_family ? DensityMethod::ConstantFamily : DensityMethod::EpsFamily;
    est.rho_schedule = opt.rho_schedule;
    est.eps_schedule = opt.eps_schedule;
    const std::size_t nr = opt.rho_schedule.size(), ne = opt.eps_schedule.size();

    const auto sols = parallel_map(nr * ne, [&](std::size_t i) {
        const double rho = opt.rho_schedule[i / ne], eps = opt.eps_schedule[i % ne];
        const Integrand L = family(eps);
        detail::check_point(L, x, v, xi);
        AffineData data{std::vector<double>(v.begin(), v.end()), std::vector<double>(xi.begin(), xi.end()),
                        std::vector<double>(x.begin(), x.end())};
        const CubeDomain dom = detail::density_cube(L, x, rho, opt.resolution);
        const auto s = solve_cell(CellProblem{L, dom, BoundaryData::from_affine(std::move(data)), cfg});
        return std::pair<double, bool>{s.normalized_value, s.converged};
    });
    for (std::size_t r = 0; r < nr; ++r) {
        std::vector<double> tail;
        for (std::size_t e = 0; e < ne; ++e) {
            tail.push_back(sols[r * ne + e].first);
            est.converged = est.converged && sols[r * ne + e].second;
        }
        est.rho_tail.push_back(tail_max(tail, opt.tail));
        est.eps_tails.push_back(std::move(tail));
    }
    est.value = tail_max(est.rho_tail, opt.tail);
    return est;
}

/// Same limits with the field u itself as Dirichlet data on Q_rho(x) instead
/// of its tangent map. For an affine u both coincide, and this routes through
/// l0_density so the two results agree bit for bit.
inline DensityEstimate l0_tilde_density(const IntegrandFamily& family, const DiscreteField& u,
                                        std::span<const double> x, const DensityOptions& opt,
                                        const SolverConfig& cfg = {}, bool constant_family = false) {
    const int d = u.dim(), m = u.comps();
    std::vector<double> val(m), grad(static_cast<std::size_t>(m) * d);
    u.evaluate(x, val, grad);
    const auto pert = u.perturbation();
    const bool affine = u.affine_data() && std::all_of(pert.begin(), pert.end(), [](double p) { return p == 0.0; });
    if (affine) return l0_density(family, x, val, grad, opt, cfg, constant_family);

    require_strictly_monotone(opt.rho_schedule, true, "rho schedule");
    require_strictly_monotone(opt.eps_schedule, true, "eps schedule");
    require(!constant_family || opt.eps_schedule.size() == 1, "l0_density: a constant family takes a single eps");
    DensityEstimate est;
    est.x.assign(x.begin(), x.end());
    est.v = val;
    est.xi = grad;
    est.method = constant_family ? DensityMethod::ConstantFamily : DensityMethod::EpsFamily;
    est.rho_schedule = opt.rho_schedule;
    est.eps_schedule = opt.eps_schedule;
    const std::size_t nr = opt.rho_schedule.size(), ne = opt.eps_schedule.size();
    auto trace = BoundaryData::from_trace(m, [&u, m](std::span<const double> y, std::span<double> out) {
        u.evaluate(y, out.first(static_cast<std::size_t>(m)));
    });
    const auto sols = parallel_map(nr * ne, [&](std::size_t i) {
        const double rho = opt.rho_schedule[i / ne], eps = opt.eps_schedule[i % ne];
        const Integrand L = family(eps);
        const CubeDomain dom = detail::density_cube(L, x, rho, opt.resolution);
        require(u.domain().contains(dom.center, 0.0) && u.domain().inner_margin(dom.center) >= 0.5 * rho - 1e-12,
                "l0_tilde_density: Q_rho(x) must lie inside u's domain");
        const auto s = solve_cell(CellProblem{L, dom, trace, cfg});
        return std::pair<double, bool>{s.normalized_value, s.converged};
    });
    for (std::size_t r = 0; r < nr; ++r) {
        std::vector<double> tail;
        for (std::size_t e = 0; e < ne; ++e) {
            tail.push_back(sols[r * ne + e].first);
            est.converged = est.converged && sols[r * ne + e].second;
        }
        est.rho_tail.push_back(tail_max(tail, opt.tail));
        est.eps_tails.push_back(std::move(tail));
    }
    est.value = tail_max(est.rho_tail, opt.tail);
    return est;
}

/// Unit-cell infimum of L(x, v, xi + grad phi) with (x, v) frozen, at each
/// resolution of the schedule; the value is the smallest (all are upper bounds).
inline DensityEstimate qdac_envelope(const Integrand& L, std::span<const double> x, std::span<const double> v,
                                     std::span<const double> xi, const DensityOptions& opt,
                                     const SolverConfig& cfg = {}) {
    require(L.traits().caratheodory,
            "qdac_envelope: integrand '" + L.name() +
                "' is not Caratheodory; the frozen-variable formula does not apply, use l0_density instead");
    detail::check_point(L, x, v, xi);
    require(!opt.resolutions.empty(), "qdac_envelope: resolution schedule must be nonempty");
    for (std::size_t i = 1; i < opt.resolutions.size(); ++i)
        require(opt.resolutions[i] > opt.resolutions[i - 1], "resolution schedule must be strictly increasing");
    const Integrand F = frozen(L, x, v);
    DensityEstimate est;
    est.x.assign(x.begin(), x.end());
    est.v.assign(v.begin(), v.end());
    est.xi.assign(xi.begin(), xi.end());
    est.method = DensityMethod::FrozenDac;
    const std::vector<double> origin(L.dim(), 0.0);
    const auto sols = parallel_map(opt.resolutions.size(), [&](std::size_t i) {
        auto data = AffineData::slope(std::vector<double>(xi.begin(), xi.end()), L.comps(), L.dim());
        const CubeDomain dom(origin, 0.5, opt.resolutions[i]);
        const auto s = solve_cell(CellProblem{F, dom, BoundaryData::from_affine(std::move(data)), cfg});
        return std::pair<double, bool>{s.normalized_value, s.converged};
    });
    for (std::size_t i = 0; i < sols.size(); ++i) {
        est.rho_schedule.push_back(opt.resolutions[i]);
        est.rho_tail.push_back(sols[i].first);
        est.value = std::min(est.value, sols[i].first);
        est.converged = est.converged && sols[i].second;
    }
    est.eps_tails.push_back(est.rho_tail);
    return est;
}

struct FrozenCheckSample {
    std::vector<double> x, v, xi;
};

struct FrozenCheckReport {
    std::vector<DensityEstimate> unfrozen, frozen;
    std::vector<double> gaps;  // max over the rho tail of |unfrozen(rho) - frozen|
    double max_gap = 0.0;
};

inline FrozenCheckReport frozen_vs_unfrozen_check(const Integrand& L, const std::vector<FrozenCheckSample>& samples,
                                                  const DensityOptions& opt, const SolverConfig& cfg = {}) {
    FrozenCheckReport rep;
    DensityOptions single = opt;
    single.eps_schedule = {1.0};
    for (const auto& s : samples) {
        auto u = l0_density(constant_family(L), s.x, s.v, s.xi, single, cfg, true);
        auto f = qdac_envelope(L, s.x, s.v, s.xi, opt, cfg);
        double gap = 0.0;
        for (double r : u.rho_tail) gap = std::max(gap, std::abs(r - f.value));
        rep.gaps.push_back(gap);
        rep.max_gap = std::max(rep.max_gap, gap);
        rep.unfrozen.push_back(std::move(u));
        rep.frozen.push_back(std::move(f));
    }
    return rep;
}

/// Lower convex envelope of sampled points (xs increasing), evaluated at the
/// sample abscissae.
inline std::vector<double> lower_convex_envelope(const std::vector<double>& xs, const std::vector<double>& ys) {
    require(xs.size() == ys.size() && !xs.empty(), "convex envelope: sample arrays must match and be nonempty");
    for (std::size_t i = 1; i < xs.size(); ++i) require(xs[i] > xs[i - 1], "convex envelope: xs must increase");
    std::vector<std::size_t> hull;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        while (hull.size() >= 2) {
            const std::size_t a = hull[hull.size() - 2], b = hull.back();
            const double cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a]);
            if (cross <= 0.0) hull.pop_back();
            else break;
        }
        hull.push_back(i);
    }
    std::vector<double> out(xs.size());
    std::size_t seg = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        while (seg + 1 < hull.size() - 1 && xs[hull[seg + 1]] < xs[i]) ++seg;
        if (hull.size() == 1) {
            out[i] = ys[hull[0]];
            continue;
        }
        const std::size_t a = hull[seg], b = hull[seg + 1];
        const double t = (xs[i] - xs[a]) / (xs[b] - xs[a]);
        out[i] = (1.0 - t) * ys[a] + t * ys[b];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Relaxed functional

struct RelaxedFunctional {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
    std::vector<DensityEstimate> densities;
    double total = 0.0;
    double direct_energy = 0.0;  // F(u; O) with the finest family member
    double relaxation_gap = 0.0;  // direct_energy - total
};

struct RelaxOptions {
    DensityMethod method = DensityMethod::ConstantFamily;
    DensityOptions density;
    int points_per_axis = 2;  // tensor points per axis over O
    bool midpoint = false;    // cell midpoints of a uniform grid instead of Gauss-Legendre
};

namespace detail {

inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    // nodes/weights on [0,1]
    require(n >= 1 && n <= 8, "quadrature: points per axis must be in [1,8]");
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0;
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[n - 1 - i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
}

}  // namespace detail

/// Integrates the chosen density along (x, u(x), grad u(x)) over the cube of
/// u's domain.
inline RelaxedFunctional relaxed_functional(const IntegrandFamily& family, const DiscreteField& u,
                                            const RelaxOptions& opt, const SolverConfig& cfg = {}) {
    const CubeDomain& O = u.domain();
    const int d = O.dim(), m = u.comps();
    std::vector<double> gn, gw;
    if (opt.midpoint) {
        require(opt.points_per_axis >= 1, "relaxed_functional: points per axis must be >= 1");
        for (int i = 0; i < opt.points_per_axis; ++i) {
            gn.push_back((i + 0.5) / opt.points_per_axis);
            gw.push_back(1.0 / opt.points_per_axis);
        }
    } else {
        detail::gauss_legendre(opt.points_per_axis, gn, gw);
    }
    RelaxedFunctional rf;
    const int n = opt.points_per_axis;
    int total = 1;
    for (int k = 0; k < d; ++k) total *= n;
    for (int i = 0; i < total; ++i) {
        std::vector<double> x(d);
        double w = O.volume();
        int rest = i;
        for (int k = 0; k < d; ++k) {
            const int j = rest % n;
            rest /= n;
            x[k] = O.lower(k) + O.side() * gn[j];
            w *= gw[j];
        }
        rf.points.push_back(std::move(x));
        rf.weights.push_back(w);
    }
    const double eps_fine = opt.density.eps_schedule.back();
    const Integrand Lfine = family(eps_fine);
    require(Lfine.dim() == d && Lfine.comps() == m, "relaxed_functional: field and integrand dimensions differ");
    if (opt.method == DensityMethod::ConstantFamily)
        require(opt.density.eps_schedule.size() == 1, "relaxed_functional: constant_family takes a single eps");

    rf.densities = parallel_map(rf.points.size(), [&](std::size_t i) {
        std::vector<double> val(m), grad(static_cast<std::size_t>(m) * d);
        u.evaluate(rf.points[i], val, grad);
        switch (opt.method) {
            case DensityMethod::FrozenDac: return qdac_envelope(Lfine, rf.points[i], val, grad, opt.density, cfg);
            case DensityMethod::ConstantFamily:
                return l0_density(family, rf.points[i], val, grad, opt.density, cfg, true);
            case DensityMethod::EpsFamily: break;
        }
        return l0_density(family, rf.points[i], val, grad, opt.density, cfg, false);
    });
    for (std::size_t i = 0; i < rf.points.size(); ++i) {
        if (!std::isfinite(rf.densities[i].value))
            throw SolverError("relaxed_functional: non-finite density at sample " + std::to_string(i));
        rf.total += rf.weights[i] * rf.densities[i].value;
    }
    rf.direct_energy = energy(Lfine, u);
    rf.relaxation_gap = rf.direct_energy - rf.total;
    return rf;
}

/// CSV: x, v, xi, method, rho, eps, value (one row per cell solve).
inline CsvTable density_table(const std::vector<DensityEstimate>& ests) {
    if (ests.empty()) return CsvTable({"method", "rho", "eps", "value"});
    std::vector<std::string> header;
    const auto& e0 = ests.front();
    for (std::size_t k = 0; k < e0.x.size(); ++k) header.push_back("x" + std::to_string(k));
    for (std::size_t k = 0; k < e0.v.size(); ++k) header.push_back("v" + std::to_string(k));
    for (std::size_t k = 0; k < e0.xi.size(); ++k) header.push_back("xi" + std::to_string(k));
    for (const char* h : {"method", "rho", "eps", "value"}) header.emplace_back(h);
    CsvTable t(header);
    for (const auto& e : ests)
        for (std::size_t r = 0; r < e.eps_tails.size(); ++r)
            for (std::size_t k = 0; k < e.eps_tails[r].size(); ++k) {
                t.row();
                for (double a : e.x) t.add(a);
                for (double a : e.v) t.add(a);
                for (double a : e.xi) t.add(a);
                t.add(method_name(e.method));
                if (e.method == DensityMethod::FrozenDac) {
                    // frozen runs: rho column carries the resolution, eps is 1
                    t.add(e.rho_schedule[k]).add(1.0);
                } else {
                    t.add(e.rho_schedule[r]).add(e.eps_schedule[k]);
                }
                t.add(e.eps_tails[r][k]);
            }
    return t;
}

}  // namespace varhom
