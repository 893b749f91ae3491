// Scaled cell averages S_xi(tQ)/lambda(tQ), the periodic homogenization
// formula and the limsup/liminf diagnostic for homogenizable integrands.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "varhom/dirichlet.hpp"
#include "varhom/io.hpp"
#include "varhom/parallel.hpp"

namespace varhom {

struct CellAverage {
    double value = kInf;  // S_xi(tQ_rho(x)) / lambda(tQ_rho(x))
    double t = 1.0;
    double rho = 1.0;
    int resolution = 0;   // nodes per edge actually used on tQ_rho(x)
    bool converged = false;
    double grad_norm = kInf;
};

namespace detail {

/// Nodes per edge for the scaled cube: the reference cube's mesh spacing is
/// kept, then nudged upwards to resolve coefficient breakpoints if possible.
inline CubeDomain scaled_cube(const Integrand& L, std::span<const double> x, double rho, double t, int resolution) {
    require(resolution >= 2, "cell average: resolution must be >= 2");
    std::vector<double> c(x.begin(), x.end());
    for (auto& v : c) v *= t;
    const double cells = std::round(t * static_cast<double>(resolution - 1));
    require(cells + 1.0 <= kMaxResolution, "cell average: t * resolution exceeds the resolution cap");
    CubeDomain dom(std::move(c), 0.5 * t * rho, static_cast<int>(std::max(1.0, cells)) + 1);
    if (L.traits().x_dependent && L.coefficient_grid().any() && !mesh_aligned(L, dom))
        if (auto r = aligned_resolution(L, dom, dom.resolution, 4)) dom = dom.with_resolution(*r);
    return dom;
}

}  // namespace detail

/// Dirichlet cell problem on tQ_rho(x) with affine data of slope xi (m x d),
/// normalized by the volume.
inline CellAverage cell_average(const Integrand& L, std::span<const double> xi, std::span<const double> x, double rho,
                                double t, int resolution, const SolverConfig& cfg = {},
                                bool allow_noncoercive = false) {
    require(t > 0.0, "cell average: t must be > 0");
    require(rho > 0.0, "cell average: rho must be > 0");
    require(static_cast<int>(x.size()) == L.dim(), "cell average: x has the wrong dimension");
    require(static_cast<int>(xi.size()) == L.dim() * L.comps(), "cell average: xi must have m*d entries");
    require(allow_noncoercive || L.bounds().coercive(),
            "cell average: integrand '" + L.name() + "' is not coercive (alpha = 0)");
    const CubeDomain dom = detail::scaled_cube(L, x, rho, t, resolution);
    auto data = AffineData::slope(std::vector<double>(xi.begin(), xi.end()), L.comps(), L.dim());
    const auto sol = solve_cell(CellProblem{L, dom, BoundaryData::from_affine(std::move(data)), cfg});
    CellAverage out;
    out.value = sol.normalized_value;
    out.t = t;
    out.rho = rho;
    out.resolution = dom.resolution;
    out.converged = sol.converged;
    out.grad_norm = sol.grad_norm;
    return out;
}

/// One entry of the homogenized density: inf over n <= n_max of S_xi(nY)/n^d.
struct HomogenizedEntry {
    std::vector<double> xi;
    std::vector<int> ns;
    std::vector<CellAverage> cells;  // per n
    double estimate = kInf;          // minimum over the tail
    int argmin_n = 0;
    /// Extrapolation of the last two values assuming an O(1/n) boundary layer;
    /// only filled when requested and never used as the estimate.
    std::optional<double> richardson;
    bool converged = false;          // every cell solve converged
};

struct PeriodicOptions {
    int n_max = 1;
    int resolution = 65;  // nodes per edge of the unit cell
    bool richardson = false;
    bool allow_noncoercive = false;
};

inline HomogenizedEntry estimate_Lhom_periodic(const Integrand& L, std::span<const double> xi,
                                               const PeriodicOptions& opt, const SolverConfig& cfg = {}) {
    require(L.traits().periodic, "estimate_Lhom_periodic: integrand '" + L.name() + "' is not declared periodic");
    require(opt.n_max >= 1, "estimate_Lhom_periodic: n_max must be >= 1");
    HomogenizedEntry e;
    e.xi.assign(xi.begin(), xi.end());
    const std::vector<double> origin(L.dim(), 0.0);
    e.cells = parallel_map(static_cast<std::size_t>(opt.n_max), [&](std::size_t i) {
        return cell_average(L, xi, origin, 1.0, static_cast<double>(i + 1), opt.resolution, cfg,
                            opt.allow_noncoercive);
    });
    e.converged = true;
    for (int n = 1; n <= opt.n_max; ++n) {
        const auto& c = e.cells[n - 1];
        e.ns.push_back(n);
        if (c.value < e.estimate) {
            e.estimate = c.value;
            e.argmin_n = n;
        }
        e.converged = e.converged && c.converged;
    }
    if (opt.richardson && opt.n_max >= 2) {
        const double n = opt.n_max, m = opt.n_max - 1;
        e.richardson = (n * e.cells[n - 1].value - m * e.cells[m - 1].value) / (n - m);
    }
    return e;
}

/// Tensor grid of matrices: entry j ranges over `points` equispaced values in
/// [lo[j], hi[j]] (a single point uses lo[j]).
inline std::vector<std::vector<double>> xi_grid(const std::vector<double>& lo, const std::vector<double>& hi,
                                                int points) {
    require(lo.size() == hi.size() && !lo.empty(), "xi grid: bounds must have matching nonzero length");
    require(points >= 1 && points <= 5, "xi grid: points per entry must be in [1,5]");
    for (std::size_t j = 0; j < lo.size(); ++j) require(lo[j] <= hi[j], "xi grid: lower bound exceeds upper bound");
    std::size_t total = 1;
    for (std::size_t j = 0; j < lo.size(); ++j) total *= static_cast<std::size_t>(points);
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < total; ++i) {
        std::vector<double> xi(lo.size());
        std::size_t rest = i;
        for (std::size_t j = 0; j < lo.size(); ++j) {
            const std::size_t k = rest % points;
            rest /= points;
            xi[j] = points == 1 ? lo[j] : lo[j] + (hi[j] - lo[j]) * static_cast<double>(k) / (points - 1);
        }
        out.push_back(std::move(xi));
    }
    return out;
}

inline std::vector<HomogenizedEntry> homogenized_density(const Integrand& L,
                                                         const std::vector<std::vector<double>>& grid,
                                                         const PeriodicOptions& opt, const SolverConfig& cfg = {}) {
    return parallel_map(grid.size(), [&](std::size_t i) { return estimate_Lhom_periodic(L, grid[i], opt, cfg); });
}

/// CSV: xi entries, rho, n, resolution, value, converged.
inline CsvTable homogenize_table(const std::vector<HomogenizedEntry>& entries) {
    std::vector<std::string> header;
    const std::size_t nx = entries.empty() ? 0 : entries.front().xi.size();
    for (std::size_t j = 0; j < nx; ++j) header.push_back("xi" + std::to_string(j));
    for (const char* h : {"rho", "n", "resolution", "value", "converged"}) header.emplace_back(h);
    CsvTable t(header);
    for (const auto& e : entries)
        for (std::size_t i = 0; i < e.cells.size(); ++i) {
            t.row();
            for (double v : e.xi) t.add(v);
            t.add(e.cells[i].rho).add(e.ns[i]).add(e.cells[i].resolution).add(e.cells[i].value).add(e.cells[i].converged);
        }
    return t;
}

// ---------------------------------------------------------------------------
// Homogenizability diagnostic

struct HSample {
    std::vector<double> x;
    std::vector<std::vector<CellAverage>> table;  // [rho index][t index]
    std::vector<double> upper_t, lower_t;          // per rho: tail max / min over t
    double upper = kInf;                           // limsup-limsup proxy
    double lower = -kInf;                          // liminf-liminf proxy
    double gap = kInf;
};

struct HReport {
    std::vector<double> xi;
    std::vector<double> rho_schedule, t_schedule;
    std::vector<HSample> samples;
    double max_gap = 0.0;
    double tolerance = 0.0;
    bool numerically_h = false;
    std::size_t tail = 3;
};

struct HOptions {
    int resolution = 33;   // nodes per edge of the reference cube Q_rho(x)
    std::size_t tail = 3;  // K for the tail max / min proxies
    double tolerance = 1e-3;
    bool allow_noncoercive = false;
};

/// For every sample x, the table S_xi(tQ_rho(x))/lambda over the schedules,
/// then upper = tail max over rho of tail max over t, lower likewise with min.
inline HReport h_diagnostic(const Integrand& L, std::span<const double> xi,
                            const std::vector<std::vector<double>>& xs, const std::vector<double>& rho_schedule,
                            const std::vector<double>& t_schedule, const HOptions& opt, const SolverConfig& cfg = {}) {
    require(!xs.empty(), "h_diagnostic: sample set must be nonempty");
    require_strictly_monotone(rho_schedule, true, "rho schedule");
    require_strictly_monotone(t_schedule, false, "t schedule");
    require(opt.tail >= 1, "h_diagnostic: tail length must be >= 1");
    HReport rep;
    rep.xi.assign(xi.begin(), xi.end());
    rep.rho_schedule = rho_schedule;
    rep.t_schedule = t_schedule;
    rep.tolerance = opt.tolerance;
    rep.tail = opt.tail;
    const std::size_t nr = rho_schedule.size(), nt = t_schedule.size();
    const auto flat = parallel_map(xs.size() * nr * nt, [&](std::size_t i) {
        const std::size_t s = i / (nr * nt), r = (i / nt) % nr, t = i % nt;
        return cell_average(L, xi, xs[s], rho_schedule[r], t_schedule[t], opt.resolution, cfg, opt.allow_noncoercive);
    });
    rep.numerically_h = true;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        HSample hs;
        hs.x = xs[s];
        for (std::size_t r = 0; r < nr; ++r) {
            std::vector<CellAverage> row(flat.begin() + static_cast<std::ptrdiff_t>((s * nr + r) * nt),
                                         flat.begin() + static_cast<std::ptrdiff_t>((s * nr + r + 1) * nt));
            std::vector<double> vals;
            for (const auto& c : row) vals.push_back(c.value);
            hs.upper_t.push_back(tail_max(vals, opt.tail));
            hs.lower_t.push_back(tail_min(vals, opt.tail));
            hs.table.push_back(std::move(row));
        }
        hs.upper = tail_max(hs.upper_t, opt.tail);
        hs.lower = tail_min(hs.lower_t, opt.tail);
        hs.gap = hs.upper - hs.lower;
        rep.max_gap = std::max(rep.max_gap, hs.gap);
        if (!(hs.gap <= opt.tolerance)) rep.numerically_h = false;
        rep.samples.push_back(std::move(hs));
    }
    return rep;
}

/// CSV: sample index, x, rho, t, resolution, value, converged.
inline CsvTable h_diagnostic_table(const HReport& rep) {
    std::vector<std::string> header{"sample"};
    const std::size_t d = rep.samples.empty() ? 0 : rep.samples.front().x.size();
    for (std::size_t k = 0; k < d; ++k) header.push_back("x" + std::to_string(k));
    for (const char* h : {"rho", "t", "resolution", "value", "converged"}) header.emplace_back(h);
    CsvTable t(header);
    for (std::size_t s = 0; s < rep.samples.size(); ++s)
        for (const auto& row : rep.samples[s].table)
            for (const auto& c : row) {
                t.row().add(s);
                for (double v : rep.samples[s].x) t.add(v);
                t.add(c.rho).add(c.t).add(c.resolution).add(c.value).add(c.converged);
            }
    return t;
}

}  // namespace varhom
