// Operations driven by an ExperimentConfig. Each one returns its CSV table, a
// JSON summary and a one-line message; write_artifacts puts them on disk.
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "varhom/config.hpp"
#include "varhom/gammadiag.hpp"
#include "varhom/homogenize.hpp"
#include "varhom/io.hpp"
#include "varhom/relax.hpp"
#include "varhom/setfn.hpp"

namespace varhom {

struct RunOptions {
    std::optional<std::uint64_t> seed;  // overrides the config
};

struct RunResult {
    std::string operation;
    std::string csv;
    nlohmann::json summary;
    std::string message;
};

namespace detail {

inline void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw SolverError(what + " is not finite");
}

inline std::vector<double> zeros(int n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); }

inline std::string joined(std::span<const double> v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt_double(v[i]);
    return s;
}

/// Shared geometry: cube O, affine data v + xi (y - center).
struct Geometry {
    CubeDomain domain;
    AffineData data;
};

inline Geometry geometry(const ExperimentConfig& c, const Integrand& L, int default_resolution) {
    const int d = L.dim(), m = L.comps();
    auto center = c.numbers("geometry.center", zeros(d));
    require(static_cast<int>(center.size()) == d, "config: field 'geometry.center' must have " + std::to_string(d) + " entries");
    const double side = c.number("geometry.side", 1.0);
    require(side > 0.0, "config: field 'geometry.side' must be > 0");
    const auto res = c.integer("geometry.resolution", default_resolution);
    require(res >= 2 && res <= kMaxResolution, "config: field 'geometry.resolution' must be in [2, " + std::to_string(kMaxResolution) + "]");
    auto v = c.numbers("geometry.v", zeros(m));
    require(static_cast<int>(v.size()) == m, "config: field 'geometry.v' must have " + std::to_string(m) + " entries");
    auto xi = c.numbers("geometry.xi", zeros(m * d));
    require(static_cast<int>(xi.size()) == m * d, "config: field 'geometry.xi' must have m*d = " + std::to_string(m * d) + " entries");
    CubeDomain dom(center, 0.5 * side, static_cast<int>(res));
    return Geometry{std::move(dom), AffineData{std::move(v), std::move(xi), std::move(center)}};
}

inline std::vector<std::vector<double>> sample_points(const ExperimentConfig& c, int d) {
    auto pts = c.points("geometry.points");
    require(!pts.empty(), "config: field 'geometry.points' must be nonempty");
    for (const auto& p : pts)
        require(static_cast<int>(p.size()) == d, "config: field 'geometry.points' entries must have " + std::to_string(d) + " coordinates");
    return pts;
}

inline DensityOptions density_options(const ExperimentConfig& c) {
    DensityOptions o;
    o.rho_schedule = c.schedule("schedules.rho", true, o.rho_schedule);
    o.eps_schedule = c.schedule("schedules.eps", true, o.eps_schedule);
    o.resolution = static_cast<int>(c.integer("geometry.resolution", o.resolution));
    require(o.resolution >= 2, "config: field 'geometry.resolution' must be >= 2");
    if (c.has("schedules.resolutions")) {
        const auto r = c.schedule("schedules.resolutions", false);
        o.resolutions.clear();
        for (double v : r) {
            require(v == std::floor(v) && v >= 2, "config: field 'schedules.resolutions' must contain integers >= 2");
            o.resolutions.push_back(static_cast<int>(v));
        }
    }
    o.tail = static_cast<std::size_t>(c.integer("schedules.tail", 3));
    require(o.tail >= 1, "config: field 'schedules.tail' must be >= 1");
    return o;
}

inline RelaxOptions relax_options(const ExperimentConfig& c) {
    RelaxOptions o;
    o.method = parse_method(c.string("density.method", c.constant_family_selected() ? "constant_family" : "eps_family"));
    o.density = density_options(c);
    o.points_per_axis = static_cast<int>(c.integer("relax.points_per_axis", o.points_per_axis));
    require(o.points_per_axis >= 1 && o.points_per_axis <= 8, "config: field 'relax.points_per_axis' must be in [1,8]");
    o.midpoint = c.boolean("relax.midpoint", false);
    return o;
}

/// [setfn] kind = "density" (constant / affine / halfspace point density,
/// integrated exactly enough by Gauss-Legendre) or "dirichlet" (Q -> m(u; Q)
/// for the configured integrand and affine data).
inline CubeSetFunction set_function(const ExperimentConfig& c, const SolverConfig& scfg) {
    const std::string kind = c.string("setfn.kind", "density");
    if (kind == "dirichlet") {
        const Integrand L = c.family()(c.number("geometry.eps", 1.0));
        const Geometry g = geometry(c, L, 17);
        const Cube ambient = Cube::from_domain(g.domain);
        const auto data = BoundaryData::from_affine(g.data);
        const int res = static_cast<int>(c.integer("setfn.resolution", 17));
        require(res >= 2, "config: field 'setfn.resolution' must be >= 2");
        return CubeSetFunction(
            [L, data, res, scfg](const Cube& q) {
                const CubeDomain dom = density_cube(L, q.center().span(), q.side, res);
                return solve_cell(CellProblem{L, dom, data, scfg}).value;
            },
            ambient, true);
    }
    require(kind == "density", "config: field 'setfn.kind' must be density or dirichlet");
    const int d = static_cast<int>(c.integer("setfn.dim", 1));
    require(d >= 1 && d <= kMaxDim, "config: field 'setfn.dim' must be in {1,2,3}");
    auto lower = c.numbers("geometry.lower", zeros(d));
    require(static_cast<int>(lower.size()) == d, "config: field 'geometry.lower' must have setfn.dim entries");
    const double side = c.number("geometry.side", 1.0);
    require(side > 0.0, "config: field 'geometry.side' must be > 0");
    Cube ambient;
    ambient.dim = d;
    ambient.side = side;
    for (int k = 0; k < d; ++k) ambient.lower[k] = lower[k];

    const std::string density = c.string("setfn.density", "constant");
    const double value = c.number("setfn.value", 1.0);
    PointFn f;
    if (density == "constant") {
        f = [value](std::span<const double>) { return value; };
    } else if (density == "affine") {
        auto grad = c.numbers("setfn.gradient", zeros(d));
        require(static_cast<int>(grad.size()) == d, "config: field 'setfn.gradient' must have setfn.dim entries");
        f = [value, grad](std::span<const double> y) {
            double s = value;
            for (std::size_t k = 0; k < grad.size(); ++k) s += grad[k] * y[k];
            return s;
        };
    } else if (density == "halfspace") {
        const auto axis = c.integer("setfn.axis", 0);
        require(axis >= 0 && axis < d, "config: field 'setfn.axis' must be a valid axis");
        const double thr = c.number("setfn.threshold", 0.5);
        f = [value, axis, thr](std::span<const double> y) { return y[axis] < thr ? value : 0.0; };
    } else {
        throw ValidationError("config: field 'setfn.density' must be constant, affine or halfspace");
    }
    return density_set_function(std::move(f), ambient, static_cast<int>(c.integer("setfn.quadrature_points", 4)));
}

// ---------------------------------------------------------------------------

inline RunResult run_cell(const ExperimentConfig& c, const SolverConfig& scfg) {
    const double eps = c.number("geometry.eps", 1.0);
    require(eps > 0.0, "config: field 'geometry.eps' must be > 0");
    const Integrand L = c.family()(eps);
    const Geometry g = geometry(c, L, 33);
    auto sol = solve_cell(CellProblem{L, g.domain, BoundaryData::from_affine(g.data), scfg});
    sol.eps = eps;
    require_finite(sol.value, "cell value");
    std::ostringstream csv;
    write_cell_csv_header(csv);
    write_cell_csv_rows(csv, sol);
    RunResult r;
    r.csv = csv.str();
    r.summary = {{"value", sol.value},         {"normalized_value", sol.normalized_value},
                 {"converged", sol.converged}, {"grad_norm", sol.grad_norm},
                 {"level_values", sol.level_values}, {"best_start", sol.best_start}};
    r.message = "m = " + fmt_double(sol.value) + ", normalized " + fmt_double(sol.normalized_value) +
                (sol.converged ? "" : " (not converged)");
    return r;
}

inline void require_coercive(const Integrand& L, bool allow, const std::string& op) {
    require(allow || L.bounds().coercive(),
            "config: integrand '" + L.name() + "' has alpha = 0 (not coercive); operation '" + op +
                "' needs a coercive integrand (set allow_noncoercive = true to run it anyway)");
}

inline RunResult run_homogenize(const ExperimentConfig& c, const SolverConfig& scfg) {
    const Integrand L = c.integrand();
    const bool allow = c.boolean("allow_noncoercive", false);
    require_coercive(L, allow, "homogenize");
    const std::string mode = c.string("homogenize.mode", "periodic");
    const int md = L.dim() * L.comps();
    std::vector<std::vector<double>> xis;
    if (c.has("geometry.xi_list")) {
        xis = c.points("geometry.xi_list");
    } else if (c.has("geometry.xi_lo")) {
        xis = xi_grid(c.numbers("geometry.xi_lo"), c.numbers("geometry.xi_hi"),
                      static_cast<int>(c.integer("geometry.xi_points", 3)));
    } else {
        xis = {c.numbers("geometry.xi")};
    }
    for (const auto& xi : xis)
        require(static_cast<int>(xi.size()) == md, "config: slopes must have m*d = " + std::to_string(md) + " entries");
    RunResult r;
    if (mode == "periodic") {
        PeriodicOptions opt;
        opt.n_max = static_cast<int>(c.integer("schedules.n_max", 1));
        require(opt.n_max >= 1, "config: field 'schedules.n_max' must be >= 1");
        opt.resolution = static_cast<int>(c.integer("geometry.resolution", opt.resolution));
        opt.richardson = c.boolean("homogenize.richardson", false);
        opt.allow_noncoercive = allow;
        const auto entries = homogenized_density(L, xis, opt, scfg);
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : entries) {
            require_finite(e.estimate, "homogenized estimate");
            nlohmann::json j{{"xi", e.xi}, {"estimate", e.estimate}, {"argmin_n", e.argmin_n}, {"converged", e.converged}};
            if (e.richardson) j["richardson"] = *e.richardson;
            arr.push_back(std::move(j));
        }
        r.csv = homogenize_table(entries).str();
        r.summary = {{"mode", "periodic"}, {"n_max", opt.n_max}, {"entries", arr}};
        r.message = std::to_string(entries.size()) + " slopes, last estimate " + fmt_double(entries.back().estimate);
        return r;
    }
    require(mode == "h", "config: field 'homogenize.mode' must be periodic or h");
    require(xis.size() == 1, "config: the h diagnostic takes a single slope");
    const auto xs = sample_points(c, L.dim());
    const auto rho = c.schedule("schedules.rho", true);
    const auto t = c.schedule("schedules.t", false);
    HOptions opt;
    opt.resolution = static_cast<int>(c.integer("geometry.resolution", opt.resolution));
    opt.tail = static_cast<std::size_t>(c.integer("schedules.tail", 3));
    opt.tolerance = c.number("homogenize.tolerance", opt.tolerance);
    opt.allow_noncoercive = allow;
    const auto rep = h_diagnostic(L, xis.front(), xs, rho, t, opt, scfg);
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : rep.samples) {
        require_finite(s.upper, "h diagnostic upper proxy");
        require_finite(s.lower, "h diagnostic lower proxy");
        samples.push_back({{"x", s.x}, {"upper", s.upper}, {"lower", s.lower}, {"gap", s.gap}});
    }
    r.csv = h_diagnostic_table(rep).str();
    r.summary = {{"mode", "h"}, {"xi", rep.xi}, {"max_gap", rep.max_gap}, {"tolerance", rep.tolerance},
                 {"numerically_h", rep.numerically_h}, {"samples", samples}};
    r.message = std::string("max gap ") + fmt_double(rep.max_gap) + (rep.numerically_h ? ", numerically H" : ", not H at tolerance");
    return r;
}

inline RunResult run_envelope(const ExperimentConfig& c, const SolverConfig& scfg) {
    const auto G = set_function(c, scfg);
    const double fineness = c.number("setfn.fineness");
    const auto depth = c.integer("setfn.max_depth", -1);
    const double slack = c.number("setfn.slack", 0.0);
    require(slack >= 0.0 && slack < 1.0, "config: field 'setfn.slack' must be in [0,1)");
    const bool sgn = c.boolean("setfn.signed", false);
    const auto env = sgn ? signed_envelope(G, fineness, slack, static_cast<int>(depth))
                         : vitali_envelope(G, fineness, slack, static_cast<int>(depth));
    require_finite(env.value, "envelope value");
    std::ostringstream csv;
    write_packing_csv(csv, env.packing);
    RunResult r;
    r.csv = csv.str();
    r.summary = {{"value", env.value},
                 {"cubes", env.packing.size()},
                 {"uncovered_volume", env.packing.uncovered_volume},
                 {"evaluations", env.evaluations},
                 {"valid_packing", validate_packing(env.packing)}};
    r.message = "envelope " + fmt_double(env.value) + " over " + std::to_string(env.packing.size()) + " cubes";
    return r;
}

inline std::size_t derivative_samples(const ExperimentConfig& c) {
    const auto s = c.integer("setfn.samples", 16);
    require(s >= 0, "config: field 'setfn.samples' must be >= 0");
    return static_cast<std::size_t>(s);
}

inline RunResult run_derivative(const ExperimentConfig& c, const SolverConfig& scfg, std::uint64_t seed) {
    const auto G = set_function(c, scfg);
    const auto xs = sample_points(c, G.ambient().dim);
    const auto sched = c.schedule("schedules.diameter", true, {0.25, 0.125, 0.0625, 0.03125});
    const std::size_t samples = derivative_samples(c);
    CsvTable t({"point", "stage", "diameter", "raw_inf", "raw_sup", "inf", "sup"});
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto e = derivative_estimate(G, xs[i], sched, samples, seed + i);
        require_finite(e.lower, "lower derivative");
        for (std::size_t k = 0; k < e.rho_schedule.size(); ++k)
            t.row().add(i).add(k).add(e.rho_schedule[k]).add(e.raw_inf[k]).add(e.raw_sup[k]).add(e.inf_values[k]).add(e.sup_values[k]);
        arr.push_back({{"x", xs[i]}, {"lower", e.lower}, {"upper", e.upper}});
    }
    RunResult r;
    r.csv = t.str();
    r.summary = {{"points", arr}, {"samples_per_stage", samples}, {"seed", seed}};
    r.message = std::to_string(xs.size()) + " points, first lower derivative " + fmt_double(arr.front()["lower"].get<double>());
    return r;
}

inline RunResult run_density(const ExperimentConfig& c, const SolverConfig& scfg) {
    const auto family = c.family();
    const auto opt = relax_options(c);
    const Integrand L = family(opt.density.eps_schedule.back());
    const int m = L.comps(), d = L.dim();
    const auto xs = sample_points(c, d);
    const auto v = c.numbers("geometry.v", zeros(m));
    const auto xi = c.numbers("geometry.xi");
    std::vector<DensityEstimate> ests;
    for (const auto& x : xs) {
        switch (opt.method) {
            case DensityMethod::FrozenDac: ests.push_back(qdac_envelope(L, x, v, xi, opt.density, scfg)); break;
            case DensityMethod::ConstantFamily: ests.push_back(l0_density(family, x, v, xi, opt.density, scfg, true)); break;
            case DensityMethod::EpsFamily: ests.push_back(l0_density(family, x, v, xi, opt.density, scfg, false)); break;
        }
        require_finite(ests.back().value, "density estimate");
    }
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : ests) arr.push_back({{"x", e.x}, {"value", e.value}, {"converged", e.converged}});
    RunResult r;
    r.csv = density_table(ests).str();
    r.summary = {{"method", method_name(opt.method)}, {"points", arr}};
    r.message = std::string(method_name(opt.method)) + " density at " + std::to_string(ests.size()) +
                " points, first " + fmt_double(ests.front().value);
    return r;
}

inline RunResult run_relax(const ExperimentConfig& c, const SolverConfig& scfg) {
    const auto family = c.family();
    const auto opt = relax_options(c);
    const Integrand L = family(opt.density.eps_schedule.back());
    const Geometry g = geometry(c, L, 9);
    const auto u = DiscreteField::affine(g.domain, g.data);
    const auto rf = relaxed_functional(family, u, opt, scfg);
    require_finite(rf.total, "relaxed functional");
    RunResult r;
    r.csv = density_table(rf.densities).str();
    r.summary = {{"method", method_name(opt.method)}, {"total", rf.total}, {"direct_energy", rf.direct_energy},
                 {"relaxation_gap", rf.relaxation_gap}, {"weights", rf.weights}};
    r.message = "relaxed " + fmt_double(rf.total) + ", direct " + fmt_double(rf.direct_energy);
    return r;
}

inline RunResult run_gamma_gap(const ExperimentConfig& c, const SolverConfig& scfg) {
    const auto family = c.family();
    const auto opt = relax_options(c);
    const Integrand L = family(opt.density.eps_schedule.back());
    const Geometry g = geometry(c, L, 9);
    const auto u = DiscreteField::affine(g.domain, g.data);
    const auto k = c.integer("gap.k", 2);
    require(k >= 1 && k <= 16, "config: field 'gap.k' must be in [1,16]");
    const auto rep = dirichlet_free_gap(family, u, static_cast<int>(k), opt, scfg);
    require_finite(rep.dirichlet, "recovery value");
    require_finite(rep.free, "density integral");
    CsvTable t({"source", "index", "center", "weight", "value"});
    for (std::size_t i = 0; i < rep.recovery.cubes.size(); ++i)
        t.row().add("recovery").add(i).add(joined(rep.recovery.cubes[i].center)).add(rep.recovery.cubes[i].volume()).add(rep.recovery.cell_values[i]);
    for (std::size_t i = 0; i < rep.relaxed.points.size(); ++i)
        t.row().add("density").add(i).add(joined(rep.relaxed.points[i])).add(rep.relaxed.weights[i]).add(rep.relaxed.densities[i].value);
    RunResult r;
    r.csv = t.str();
    r.summary = {{"dirichlet", rep.dirichlet}, {"free", rep.free}, {"direct", rep.direct},
                 {"relative_gap", rep.relative_gap}, {"k", k}, {"recovery_converged", rep.recovery.converged}};
    r.message = "recovery " + fmt_double(rep.dirichlet) + ", density integral " + fmt_double(rep.free) +
                ", relative gap " + fmt_double(rep.relative_gap);
    return r;
}

}  // namespace detail

inline const std::vector<std::string>& operation_names() {
    static const std::vector<std::string> names{"cell", "homogenize", "envelope", "derivative", "density", "relax", "gamma-gap"};
    return names;
}

/// Validates and runs one operation. Throws ValidationError / SolverError.
inline RunResult run_operation(const ExperimentConfig& c, std::string op, const RunOptions& ro = {}) {
    if (op.empty()) op = c.operation();
    require(!op.empty(), "config: field 'operation' is required");
    const auto& names = operation_names();
    require(std::find(names.begin(), names.end(), op) != names.end(), "config: unknown operation '" + op + "'");
    const bool randomized = c.solver_randomized() || (op == "derivative" && detail::derivative_samples(c) > 0);
    const std::uint64_t seed = c.seed(ro.seed, randomized);
    const SolverConfig scfg = c.solver(seed);

    RunResult r;
    if (op == "cell") r = detail::run_cell(c, scfg);
    else if (op == "homogenize") r = detail::run_homogenize(c, scfg);
    else if (op == "envelope") r = detail::run_envelope(c, scfg);
    else if (op == "derivative") r = detail::run_derivative(c, scfg, seed);
    else if (op == "density") r = detail::run_density(c, scfg);
    else if (op == "relax") r = detail::run_relax(c, scfg);
    else r = detail::run_gamma_gap(c, scfg);
    r.operation = op;
    r.summary["operation"] = op;
    r.summary["integrand"] = c.has("integrand.name") ? c.string("integrand.name") : "";
    return r;
}

/// <dir>/<op>.csv and <dir>/<op>.json, each replaced atomically.
inline std::pair<std::filesystem::path, std::filesystem::path> write_artifacts(const RunResult& r,
                                                                               const std::filesystem::path& dir) {
    const auto csv = dir / (r.operation + ".csv");
    const auto json = dir / (r.operation + ".json");
    write_file_atomic(csv, r.csv);
    write_file_atomic(json, r.summary.dump(2) + "\n");
    return {csv, json};
}

}  // namespace varhom
