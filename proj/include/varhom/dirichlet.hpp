// Local Dirichlet infima m_eps(u; O): minimise the energy over boundary data
// plus zero-trace Q1 perturbations on a cube, with multistart L-BFGS and
// nested refinement levels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "varhom/grid.hpp"
#include "varhom/integrand.hpp"
#include "varhom/lbfgs.hpp"

namespace varhom {

struct SolverConfig {
    int max_iterations = 20000;
    double gradient_tolerance = 1e-8;  // on max |dE/du_i| / h^d
    int lbfgs_memory = 12;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    int multistart_count = 1;
    std::uint64_t rng_seed = 0;
    int refinement_levels = 1;
    double stagnation = 1e-3;        // relative inter-level decrease for `converged`
    double random_amplitude = 0.5;   // random starts: |phi| <= amplitude * h * max(1, |xi0|)
    QuadratureChoice quadrature = QuadratureChoice::Auto;
    double value_tolerance = 1e-6;   // per unit volume; used by consistency checks

    void validate() const {
        require(max_iterations >= 1, "solver: max_iterations must be >= 1");
        require(gradient_tolerance > 0.0, "solver: gradient_tolerance must be > 0");
        require(multistart_count >= 1, "solver: multistart_count must be >= 1");
        require(refinement_levels >= 1, "solver: refinement_levels must be >= 1");
        require(lbfgs_memory >= 1, "solver: lbfgs memory must be >= 1");
        require(armijo_c1 > 0.0 && armijo_c1 < 1.0, "solver: armijo_c1 must be in (0,1)");
        require(backtrack > 0.0 && backtrack < 1.0, "solver: backtrack factor must be in (0,1)");
        require(stagnation >= 0.0, "solver: stagnation threshold must be >= 0");
        require(value_tolerance >= 0.0, "solver: value_tolerance must be >= 0");
    }
};

/// Dirichlet data: either an affine map or a sampled trace.
struct BoundaryData {
    std::optional<AffineData> affine;
    int comps = 1;
    DiscreteField::SampleFn trace;

    static BoundaryData from_affine(AffineData a) {
        a.validate();
        BoundaryData b;
        b.comps = a.comps();
        b.affine = std::move(a);
        return b;
    }
    static BoundaryData from_trace(int m, DiscreteField::SampleFn fn) {
        BoundaryData b;
        b.comps = m;
        b.trace = std::move(fn);
        return b;
    }

    DiscreteField field(const CubeDomain& dom) const {
        if (affine) return DiscreteField::affine(dom, *affine);
        require(static_cast<bool>(trace), "boundary data: neither affine data nor a trace was given");
        return DiscreteField::from_function(dom, comps, trace);
    }

    double slope_scale() const {
        if (affine) return std::max(1.0, norm2(affine->xi0));
        return 1.0;
    }
};

struct CellProblem {
    Integrand integrand;
    CubeDomain domain;
    BoundaryData boundary;
    SolverConfig config;
    /// Additional initial fields (start id -2), used at the level whose mesh
    /// they share. Their boundary values are replaced by the problem's data.
    std::vector<DiscreteField> extra_starts = {};
};

struct StartRecord {
    int level = 0;
    int resolution = 0;
    int start_id = 0;  // -1: warm start from the previous level, -2: caller-supplied field
    double value = kInf;
    double normalized_value = kInf;
    double grad_norm = kInf;
    int iterations = 0;
    bool converged = false;
};

struct CellSolution {
    double value = kInf;             // best discrete energy (upper bound on the infimum)
    double normalized_value = kInf;  // value / rho^d
    DiscreteField minimizer;
    std::vector<double> level_values = {};  // best value per refinement level
    std::vector<StartRecord> runs = {};
    bool converged = false;
    double grad_norm = kInf;
    double side = 0.0;
    double eps = 1.0;
    int best_start = 0;
};

namespace detail {

/// Piecewise-linear zero-mean-slope profile along one axis: slope (1-theta)s on
/// a fraction theta of each 4-cell period, slope -theta s on the rest.
struct SawtoothPattern {
    double theta;
    double slope;
    int axis;
    int comp;
};

inline SawtoothPattern sawtooth_pattern(int j, int d, int m) {
    static constexpr double thetas[] = {0.5, 0.25, 0.75};
    static constexpr double slopes[] = {2.0, 1.0, 4.0};
    SawtoothPattern p{};
    p.theta = thetas[j % 3];
    p.slope = slopes[(j / 3) % 3];
    p.axis = (j / 9) % d;
    p.comp = (j / (9 * d)) % m;
    return p;
}

inline void apply_sawtooth(DiscreteField& f, const SawtoothPattern& p, double scale) {
    constexpr int period = 4;
    const double h = f.domain().spacing();
    const int m = f.comps();
    auto pert = f.perturbation_mut();
    std::array<int, kMaxDim> idx{};
    for (std::size_t n : f.interior_nodes()) {
        f.node_index(n, idx);
        const int t = idx[p.axis] % period;
        const double q = static_cast<double>(t) / period;
        const double up = (1.0 - p.theta) * p.slope * scale;
        const double down = p.theta * p.slope * scale;
        double val;
        if (q <= p.theta) val = up * q * period * h;
        else val = up * p.theta * period * h - down * (q - p.theta) * period * h;
        pert[n * m + p.comp] = val;
    }
}

inline void apply_random(DiscreteField& f, std::uint64_t seed, int start_id, int level, double amplitude) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(start_id), static_cast<std::uint32_t>(level), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(-amplitude, amplitude);
    const int m = f.comps();
    auto pert = f.perturbation_mut();
    for (std::size_t n : f.interior_nodes())
        for (int c = 0; c < m; ++c) pert[n * m + c] = unif(rng);
}

/// Runs L-BFGS from the perturbation currently stored in `f`; leaves the result in `f`.
inline LbfgsResult descend(const Integrand& L, DiscreteField& f, const QuadratureRule& rule, const SolverConfig& cfg) {
    LbfgsOptions opt;
    opt.max_iterations = cfg.max_iterations;
    opt.memory = cfg.lbfgs_memory;
    opt.gradient_tolerance = cfg.gradient_tolerance;
    opt.armijo_c1 = cfg.armijo_c1;
    opt.backtrack = cfg.backtrack;
    opt.grad_scale = 1.0 / std::pow(f.domain().spacing(), f.dim());
    const int m = f.comps();
    const auto interior = f.interior_nodes();
    std::vector<double> nodal;
    DiscreteField work = f;
    Objective obj = [&](std::span<const double> x, std::span<double> g) {
        work.set_interior_dofs(x);
        const double e = energy_with_nodal_gradient(L, work, rule, nodal);
        for (std::size_t i = 0; i < interior.size(); ++i)
            for (int c = 0; c < m; ++c) g[i * m + c] = nodal[interior[i] * m + c];
        if (!std::isfinite(e) || !all_finite(g)) return kInf;
        return e;
    };
    auto res = lbfgs_minimize(obj, f.interior_dofs(), opt);
    f.set_interior_dofs(res.x);
    return res;
}

}  // namespace detail

/// Best value over multistart descents and refinement levels. The returned
/// value is an upper bound on the continuum infimum.
inline CellSolution solve_cell(const CellProblem& problem) {
    const auto& cfg = problem.config;
    cfg.validate();
    problem.domain.validate();
    const Integrand& L = problem.integrand;
    require(problem.boundary.comps == L.comps(), "solve_cell: boundary data has the wrong number of components");
    require(problem.domain.dim() == L.dim(), "solve_cell: domain dimension does not match the integrand");

    const double vol = problem.domain.volume();
    CellSolution sol{.minimizer = problem.boundary.field(problem.domain)};
    sol.side = problem.domain.side();
    std::optional<DiscreteField> best;
    double best_value = kInf;
    const int d = L.dim(), m = L.comps();

    for (int level = 0; level < cfg.refinement_levels; ++level) {
        DiscreteField proto = level == 0 ? problem.boundary.field(problem.domain) : best->refined();
        if (level > 0 && !proto.affine_data() && problem.boundary.trace) {
            // resample the exact trace at the finer boundary nodes
            auto exact = problem.boundary.field(proto.domain());
            auto pert = proto.perturbation();
            std::vector<double> keep(pert.begin(), pert.end());
            proto = std::move(exact);
            std::copy(keep.begin(), keep.end(), proto.perturbation_mut().begin());
        }
        const QuadratureRule rule = select_rule(L, proto.domain(), cfg.quadrature);
        const double h = proto.domain().spacing();
        double level_best = kInf;

        std::vector<int> starts;
        if (level > 0) starts.push_back(-1);
        for (int s = (level > 0 ? 1 : 0); s < cfg.multistart_count; ++s) starts.push_back(s);
        std::vector<const DiscreteField*> supplied;
        for (const auto& e : problem.extra_starts)
            if (e.resolution() == proto.resolution() && e.comps() == m) {
                supplied.push_back(&e);
                starts.push_back(-2);
            }
        std::size_t next_supplied = 0;

        for (int sid : starts) {
            DiscreteField f = proto;
            if (sid == -2) {
                const auto src = supplied[next_supplied++]->perturbation();
                std::copy(src.begin(), src.end(), f.perturbation_mut().begin());
                for (std::size_t nd = 0; nd < f.node_count(); ++nd)
                    if (f.is_boundary(nd))
                        for (int c = 0; c < m; ++c) f.perturbation_mut()[nd * m + c] = 0.0;
            } else if (sid == 0) {
                f.clear_perturbation();
            } else if (sid > 0 && sid % 2 == 1) {
                f.clear_perturbation();
                detail::apply_sawtooth(f, detail::sawtooth_pattern((sid - 1) / 2, d, m), 1.0);
            } else if (sid > 0) {
                detail::apply_random(f, cfg.rng_seed, sid, level,
                                     cfg.random_amplitude * h * problem.boundary.slope_scale());
            }
            const double e0 = detail::integrate(f, rule, [&](auto x, auto u, auto du) { return L(x, u, du); });
            if (!std::isfinite(e0)) {
                if (sid == 0 || sid == -1) throw SolverError("solve_cell: non-finite energy of the initial field");
                continue;
            }
            const auto res = detail::descend(L, f, rule, cfg);
            StartRecord rec;
            rec.level = level;
            rec.resolution = f.resolution();
            rec.start_id = sid;
            rec.value = res.value;
            rec.normalized_value = res.value / vol;
            rec.grad_norm = res.grad_norm;
            rec.iterations = res.iterations;
            rec.converged = res.converged;
            sol.runs.push_back(rec);
            level_best = std::min(level_best, res.value);
            if (res.value < best_value) {
                best_value = res.value;
                best = f;
                sol.grad_norm = res.grad_norm;
                sol.best_start = sid;
            }
        }
        if (!best) throw SolverError("solve_cell: no admissible start produced a finite energy");
        sol.level_values.push_back(level_best);
    }

    sol.value = best_value;
    sol.normalized_value = best_value / vol;
    sol.minimizer = std::move(*best);
    bool grad_ok = sol.grad_norm <= cfg.gradient_tolerance;
    bool settled = true;
    if (sol.level_values.size() >= 2) {
        const double prev = sol.level_values[sol.level_values.size() - 2];
        const double last = sol.level_values.back();
        const double dec = prev - last;
        settled = dec <= cfg.stagnation * std::abs(prev) || dec <= 1e-12 * vol;
    }
    sol.converged = grad_ok && settled;
    return sol;
}

/// m_eps(u; O): solve_cell on the integrand x -> L(x/eps, v, xi).
inline CellSolution m_eps(const BoundaryData& u_data, const CubeDomain& O, const Integrand& L, double eps,
                          const SolverConfig& cfg = {}) {
    require(eps > 0.0, "m_eps: eps must be > 0");
    auto sol = solve_cell(CellProblem{L.rescaled(eps), O, u_data, cfg});
    sol.eps = eps;
    return sol;
}

/// CSV rows: rho, eps, resolution, start_id, value, normalized_value, grad_norm, converged.
inline void write_cell_csv_header(std::ostream& os) {
    os << "rho,eps,resolution,start_id,value,normalized_value,grad_norm,converged\n";
}

inline void write_cell_csv_rows(std::ostream& os, const CellSolution& sol) {
    char buf[256];
    for (const auto& r : sol.runs) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%d,%.17g,%.17g,%.6e,%d\n", sol.side, sol.eps, r.resolution,
                      r.start_id, r.value, r.normalized_value, r.grad_norm, r.converged ? 1 : 0);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Subadditivity

namespace detail {

inline bool cubes_overlap(const CubeDomain& a, const CubeDomain& b) {
    for (int k = 0; k < a.dim(); ++k) {
        const double lo = std::max(a.lower(k), b.lower(k));
        const double hi = std::min(a.upper(k), b.upper(k));
        if (hi - lo <= 1e-12 * std::max(a.side(), b.side())) return false;
    }
    return true;
}

inline bool cube_inside(const CubeDomain& inner, const CubeDomain& outer) {
    const double tol = 1e-12 * outer.side();
    for (int k = 0; k < inner.dim(); ++k)
        if (inner.lower(k) < outer.lower(k) - tol || inner.upper(k) > outer.upper(k) + tol) return false;
    return true;
}

}  // namespace detail

struct SubadditivityReport {
    double whole = kInf;                // m(u; V)
    std::vector<double> parts;          // m(u; Q_i)
    double sum_parts = 0.0;
    double remainder = 0.0;             // F(u; V \ union Q_i), an upper bound for m on the remainder
    double rhs = 0.0;
    double margin = 0.0;                // rhs - whole
    double tolerance = 0.0;
    bool holds = false;
    bool refinement_monotone = true;    // level values of V non-increasing
    std::vector<double> whole_levels;
};

namespace detail {

/// Index offset of cube q's lower corner on V's node lattice of spacing h, if
/// q's corner and side are lattice-aligned.
inline std::optional<std::array<int, kMaxDim>> lattice_offset(const CubeDomain& V, const CubeDomain& q, double h) {
    std::array<int, kMaxDim> off{};
    const double tol = 1e-9;
    const double cells = q.side() / h;
    if (std::abs(cells - std::round(cells)) > tol * std::max(1.0, cells) || std::round(cells) < 1.0) return std::nullopt;
    for (int k = 0; k < V.dim(); ++k) {
        const double o = (q.lower(k) - V.lower(k)) / h;
        if (std::abs(o - std::round(o)) > tol * std::max(1.0, std::abs(o))) return std::nullopt;
        off[k] = static_cast<int>(std::lround(o));
    }
    return off;
}

}  // namespace detail

/// m(u;V) <= sum_i m(u;Q_i) + m(u; V \ union Q_i) for pairwise disjoint cubes
/// Q_i inside V. The remainder term is bounded by the energy of u itself.
/// When the parts are aligned with V's mesh they are solved with V's spacing
/// and the field glued from their minimisers is offered to the V solve as an
/// extra start, which is the discrete form of the competitor in the proof.
inline SubadditivityReport subadditivity_check(const BoundaryData& u_data, const std::vector<CubeDomain>& parts,
                                               const CubeDomain& V, const Integrand& L, double eps,
                                               const SolverConfig& cfg_in = {}) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
        require(detail::cube_inside(parts[i], V), "subadditivity_check: cube " + std::to_string(i) + " is not inside V");
        for (std::size_t j = i + 1; j < parts.size(); ++j)
            require(!detail::cubes_overlap(parts[i], parts[j]),
                    "subadditivity_check: cubes " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
    }
    require(eps > 0.0, "subadditivity_check: eps must be > 0");
    const Integrand Le = L.rescaled(eps);
    // one quadrature rule for every solve so that energies add up exactly
    SolverConfig cfg = cfg_in;
    cfg.quadrature = select_rule(Le, V, cfg_in.quadrature).kind == QuadratureRule::Kind::Midpoint
                         ? QuadratureChoice::Midpoint
                         : QuadratureChoice::Gauss2;
    const double h = V.spacing();

    SubadditivityReport rep;
    rep.tolerance = 1e-6 + cfg.value_tolerance * V.volume();
    std::vector<std::optional<std::array<int, kMaxDim>>> offsets;
    std::vector<DiscreteField> minimizers;
    bool aligned = true;
    for (const auto& q : parts) {
        auto off = detail::lattice_offset(V, q, h);
        CubeDomain dom = q;
        if (off) dom = q.with_resolution(static_cast<int>(std::lround(q.side() / h)) + 1);
        aligned = aligned && off.has_value();
        offsets.push_back(off);
        auto s = solve_cell(CellProblem{Le, dom, u_data, cfg});
        rep.parts.push_back(s.value);
        rep.sum_parts += s.value;
        rep.tolerance += cfg.value_tolerance * q.volume();
        minimizers.push_back(std::move(s.minimizer));
    }

    CellProblem whole{Le, V, u_data, cfg};
    if (aligned && !parts.empty()) {
        // glue at every level resolution reachable by refining all minimisers
        for (int level = 0; level < cfg.refinement_levels; ++level) {
            const int res = (V.resolution - 1) * (1 << level) + 1;
            const int factor = 1 << level;
            DiscreteField glued = u_data.field(V.with_resolution(res));
            bool ok = true;
            for (std::size_t i = 0; i < parts.size() && ok; ++i) {
                DiscreteField part = minimizers[i];
                const int want = static_cast<int>(std::lround(parts[i].side() / h)) * factor + 1;
                while (part.resolution() < want) part = part.refined();
                if (part.resolution() != want) {
                    ok = false;
                    break;
                }
                const int m = part.comps();
                const auto src = part.perturbation();
                auto dst = glued.perturbation_mut();
                std::array<int, kMaxDim> idx{};
                for (std::size_t n = 0; n < part.node_count(); ++n) {
                    part.node_index(n, idx);
                    std::size_t gi = 0, stride = 1;
                    for (int k = 0; k < V.dim(); ++k) {
                        gi += static_cast<std::size_t>(idx[k] + (*offsets[i])[k] * factor) * stride;
                        stride *= static_cast<std::size_t>(res);
                    }
                    for (int c = 0; c < m; ++c) dst[gi * m + c] = src[n * m + c];
                }
            }
            if (ok) whole.extra_starts.push_back(std::move(glued));
        }
    }
    const auto ws = solve_cell(whole);
    rep.whole = ws.value;
    rep.whole_levels = ws.level_values;
    for (std::size_t k = 1; k < ws.level_values.size(); ++k)
        if (ws.level_values[k] > ws.level_values[k - 1] + 1e-10) rep.refinement_monotone = false;

    const auto ubd = u_data.field(V);
    rep.remainder = energy(Le, ubd, select_rule(Le, V, cfg.quadrature), [&](std::span<const double> c) {
        for (const auto& q : parts)
            if (q.contains(c)) return false;
        return true;
    });
    rep.rhs = rep.sum_parts + rep.remainder;
    rep.margin = rep.rhs - rep.whole;
    rep.holds = rep.margin >= -rep.tolerance;
    return rep;
}

}  // namespace varhom
