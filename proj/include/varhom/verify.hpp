// Verification suites: closed-form and oracle checks of the library's
// identities. Each suite returns per-check verdicts and a CSV table whose bytes
// depend only on the seed.
#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "varhom/gammadiag.hpp"
#include "varhom/homogenize.hpp"
#include "varhom/relax.hpp"
#include "varhom/setfn.hpp"

namespace varhom {

struct Check {
    int criterion = 0;  // 0 for informational checks
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct SuiteResult {
    std::string suite;
    std::vector<Check> checks;
    CsvTable table{{"check", "quantity", "value", "oracle", "tolerance", "pass"}};

    bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"convex", "homog1d", "laminate2d", "doublewell", "vitali", "sandwich"};
    return names;
}

namespace detail {

class CheckScope {
public:
    CheckScope(SuiteResult& s, int criterion, std::string name)
        : suite_(s), start_(std::chrono::steady_clock::now()) {
        check_.criterion = criterion;
        check_.name = std::move(name);
        check_.pass = true;
    }
    /// Records one comparison; `ok` is the verdict for this quantity.
    bool record(const std::string& quantity, double value, double oracle, double tol, bool ok) {
        suite_.table.row().add(check_.name).add(quantity).add(value).add(oracle).add(tol).add(ok);
        if (!ok) {
            check_.pass = false;
            if (!check_.detail.empty()) check_.detail += "; ";
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s=%.9g (oracle %.9g, tol %.3g)", quantity.c_str(), value, oracle, tol);
            check_.detail += buf;
        }
        return ok;
    }
    bool relative(const std::string& q, double value, double oracle, double tol) {
        return record(q, value, oracle, tol, std::abs(value - oracle) <= tol * std::abs(oracle));
    }
    bool absolute(const std::string& q, double value, double oracle, double tol) {
        return record(q, value, oracle, tol, std::abs(value - oracle) <= tol);
    }
    bool at_most(const std::string& q, double value, double bound) {
        return record(q, value, bound, 0.0, value <= bound);
    }
    /// Reported quantity without a verdict.
    void info(const std::string& quantity, double value) {
        suite_.table.row().add(check_.name).add(quantity).add(value).add("").add("").add("info");
    }
    void note(const std::string& text) {
        if (!check_.detail.empty()) check_.detail += "; ";
        check_.detail += text;
    }
    ~CheckScope() {
        check_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        suite_.checks.push_back(std::move(check_));
    }
    void runtime_limit(double seconds) {
        const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        if (t > seconds) {
            check_.pass = false;
            note("runtime " + std::to_string(t) + " s exceeds " + std::to_string(seconds) + " s");
        }
    }

private:
    SuiteResult& suite_;
    Check check_;
    std::chrono::steady_clock::time_point start_;
};

inline ParamRecord params(std::map<std::string, double> s, std::map<std::string, std::vector<double>> t = {}) {
    return ParamRecord{std::move(s), std::move(t)};
}

}  // namespace detail

/// Normalized cell values of |xi|^p equal |xi0|^p.
inline SuiteResult verify_convex(std::uint64_t seed) {
    SuiteResult out;
    out.suite = "convex";
    detail::CheckScope c(out, 1, "jensen_identity");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    SolverConfig cfg;
    for (double p : {2.0, 4.0})
        for (int d : {1, 2})
            for (int m : {1, 2}) {
                const auto L = make_builtin("p_power", detail::params({{"p", p}, {"d", d}, {"m", m}}));
                for (int k = 0; k < 5; ++k) {
                    std::vector<double> xi(static_cast<std::size_t>(m * d));
                    for (auto& e : xi) e = unif(rng);
                    const std::vector<double> x(d, 0.25);
                    auto data = AffineData::slope(xi, m, d);
                    const auto s = solve_cell(CellProblem{L, CubeDomain::centered(x, 0.5, 9),
                                                          BoundaryData::from_affine(data), cfg});
                    char q[64];
                    std::snprintf(q, sizeof q, "p%g_d%d_m%d_#%d", p, d, m, k);
                    c.relative(q, s.normalized_value, pow_norm(xi, p), 1e-8);
                }
            }
    c.runtime_limit(10.0);
    return out;
}

/// Harmonic mean for the 1-D two-phase coefficient, and the H diagnostic.
inline SuiteResult verify_homog1d(std::uint64_t) {
    SuiteResult out;
    out.suite = "homog1d";
    const auto L = make_builtin("quadratic_coeff_1d", detail::params({}, {{"a", {1.0, 4.0}}}));
    SolverConfig cfg;
    {
        detail::CheckScope c(out, 2, "harmonic_mean");
        PeriodicOptions opt;
        opt.n_max = 4;
        opt.resolution = 129;
        std::vector<std::vector<double>> grid{{-2.0}, {-1.0}, {1.0}, {2.0}};
        const auto entries = homogenized_density(L, grid, opt, cfg);
        for (const auto& e : entries) c.relative("xi=" + fmt_double(e.xi[0]), e.estimate, 1.6 * e.xi[0] * e.xi[0], 1e-3);
        c.runtime_limit(30.0);
    }
    {
        detail::CheckScope c(out, 9, "h_diagnostic_gap");
        HOptions opt;
        opt.resolution = 33;
        opt.tolerance = 1e-3;
        const std::vector<double> xi{1.0};
        const std::vector<std::vector<double>> xs{{0.1}, {0.3}, {0.5}, {0.7}, {0.9}};
        const auto rep = h_diagnostic(L, xi, xs, {0.5, 0.25}, {8.0, 16.0, 32.0}, opt, cfg);
        for (std::size_t s = 0; s < rep.samples.size(); ++s) {
            c.at_most("gap@x=" + fmt_double(xs[s][0]), rep.samples[s].gap, 1e-3);
            c.relative("upper@x=" + fmt_double(xs[s][0]), rep.samples[s].upper, 1.6, 1e-3);
        }
        c.runtime_limit(120.0);
    }
    return out;
}

/// Two-phase laminate: harmonic mean across the layers, arithmetic along.
inline SuiteResult verify_laminate2d(std::uint64_t) {
    SuiteResult out;
    out.suite = "laminate2d";
    detail::CheckScope c(out, 3, "laminate_closed_form");
    const auto L = make_builtin("laminate_2d", detail::params({}, {{"a", {1.0, 4.0}}}));
    PeriodicOptions opt;
    opt.n_max = 2;
    opt.resolution = 65;
    opt.richardson = true;
    const auto entries = homogenized_density(L, {{1.0, 0.0}, {0.0, 1.0}}, opt, SolverConfig{});
    c.relative("L_hom(e1)", entries[0].estimate, 1.6, 0.02);
    c.relative("L_hom(e2)", entries[1].estimate, 2.5, 0.02);
    for (const auto& e : entries) {
        for (std::size_t i = 0; i < e.cells.size(); ++i)
            c.info("xi=(" + fmt_double(e.xi[0]) + ";" + fmt_double(e.xi[1]) + ") n=" + std::to_string(e.ns[i]),
                   e.cells[i].value);
        if (e.richardson)
            c.info("richardson xi=(" + fmt_double(e.xi[0]) + ";" + fmt_double(e.xi[1]) + ")", *e.richardson);
    }
    c.runtime_limit(300.0);
    return out;
}

/// Brute-force lower convex envelope on a uniform grid: for each node the
/// minimum over all chords through it.
inline std::vector<double> brute_force_convexification(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    std::vector<double> out(ys);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i <= k; ++i)
            for (std::size_t j = k; j < n; ++j) {
                if (i == j) continue;
                const double t = (xs[k] - xs[i]) / (xs[j] - xs[i]);
                out[k] = std::min(out[k], (1.0 - t) * ys[i] + t * ys[j]);
            }
    return out;
}

/// Frozen-variable cell infimum of the double well against the grid
/// convexification.
inline SuiteResult verify_doublewell(std::uint64_t seed) {
    SuiteResult out;
    out.suite = "doublewell";
    detail::CheckScope c(out, 4, "quasiconvexification");
    const auto L = make_builtin("double_well_1d");
    std::vector<double> gx, gy;
    for (int i = 0; i < 400; ++i) {
        gx.push_back(-3.0 + 6.0 * i / 399.0);
        gy.push_back(L(std::vector<double>{0.0}, std::vector<double>{0.0}, std::vector<double>{gx.back()}));
    }
    const auto env = brute_force_convexification(gx, gy);
    auto oracle = [&](double xi) {
        // linear interpolation of the envelope on the grid
        const double s = (xi + 3.0) / 6.0 * 399.0;
        const std::size_t i = std::min<std::size_t>(398, static_cast<std::size_t>(std::floor(s)));
        const double t = s - static_cast<double>(i);
        return (1.0 - t) * env[i] + t * env[i + 1];
    };
    SolverConfig cfg;
    cfg.multistart_count = 8;
    cfg.rng_seed = seed;
    DensityOptions opt;
    opt.resolutions = {33, 65};
    for (double xi : {0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0}) {
        const auto e = qdac_envelope(L, std::vector<double>{0.3}, std::vector<double>{0.0}, std::vector<double>{xi}, opt, cfg);
        c.absolute("xi=" + fmt_double(xi), e.value, oracle(xi), 0.02);
    }
    c.runtime_limit(60.0);
    return out;
}

/// Vitali envelope of an absolutely continuous measure, derivative integral
/// and the sign lemma.
inline SuiteResult verify_vitali(std::uint64_t seed) {
    SuiteResult out;
    out.suite = "vitali";
    const Cube O = Cube::unit(2);
    {
        detail::CheckScope c(out, 5, "vitali_identity");
        const auto H = density_set_function([](std::span<const double> y) { return y[0]; }, O);
        const auto env = vitali_envelope(H, 0.05, 0.0, 10);
        c.relative("envelope", env.value, 0.5, 5e-3);
        c.record("packing_valid", validate_packing(env.packing) ? 1.0 : 0.0, 1.0, 0.0, validate_packing(env.packing));
        // midpoint rule over an 8x8 grid of lower-derivative estimates
        const int n = 8;
        std::vector<double> sched;
        for (int k = 4; k <= 12; ++k) sched.push_back(std::ldexp(1.0, -k));
        double integral = 0.0;
        for (int i = 0; i < n * n; ++i) {
            const std::vector<double> x{(i % n + 0.5) / n, (i / n + 0.5) / n};
            integral += lower_derivative(H, x, sched, 64, seed + static_cast<std::uint64_t>(i)).lower / (n * n);
        }
        c.relative("derivative_integral", integral, env.value, 5e-3);
        c.runtime_limit(60.0);
    }
    {
        detail::CheckScope c(out, 6, "sign_lemma");
        const double slack = 1e-3;
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 16; ++i) pts.push_back({(i % 4 + 0.5) / 4.0, (i / 4 + 0.5) / 4.0});
        const std::vector<double> sched{0.125, 0.0625, 0.03125, 0.015625};
        struct Case {
            const char* name;
            PointFn f;
            int expected_sign;  // +1: nonnegative premise, -1: nonpositive, 0: neither
        };
        const std::vector<Case> cases{{"density_plus_one", [](std::span<const double>) { return 1.0; }, 1},
                                      {"density_minus_one", [](std::span<const double>) { return -1.0; }, -1},
                                      {"mixed_zero_integral", [](std::span<const double> y) { return y[0] - 0.5; }, 0}};
        for (std::size_t k = 0; k < cases.size(); ++k) {
            const auto& cs = cases[k];
            const auto G = density_set_function(cs.f, O);
            const auto sc = sign_check(G, pts, sched, 16, seed + 1000 * (k + 1), 0.05, slack, 6);
            const std::string nm = cs.name;
            const bool premise_ok = cs.expected_sign > 0   ? sc.nonnegative_premise && !sc.nonpositive_premise
                                    : cs.expected_sign < 0 ? sc.nonpositive_premise && !sc.nonnegative_premise
                                                           : !sc.nonnegative_premise && !sc.nonpositive_premise;
            c.record(nm + ":premise", cs.expected_sign, cs.expected_sign, 0.0, premise_ok);
            c.record(nm + ":lemma", sc.envelope, 0.0, sc.slack_bound, sc.pass);
            if (cs.expected_sign == 0) c.absolute(nm + ":envelope", sc.envelope, 0.0, slack);
        }
        c.runtime_limit(30.0);
    }
    return out;
}

namespace detail {

struct SplitInstance {
    std::string label;
    Integrand L;
    CubeDomain V;
    std::vector<CubeDomain> parts;
    BoundaryData data;
    double eps;
};

inline SplitInstance random_split(std::size_t i, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.5, 1.5);
    std::uniform_int_distribution<int> coin(0, 1);
    const int kind = static_cast<int>(i % 5);
    Integrand L = [&] {
        switch (kind) {
            case 0: return make_builtin("p_power", params({{"p", 4.0}, {"d", 2}, {"m", 1}}));
            case 1: return make_builtin("quadratic_coeff_1d");
            case 2: return make_builtin("laminate_2d");
            case 3: return make_builtin("double_well_1d");
            default:
                return make_builtin("periodic_plus_perturbation",
                                    params({{"bump_height", 1.0}, {"bump_radius", 0.2}}, {{"h", {0.0, 0.5}}}));
        }
    }();
    const int d = L.dim();
    const double side = coin(rng) ? 1.0 : 2.0;
    std::vector<double> center(d);
    for (auto& c : center) c = 0.25 * std::round(unif(rng) * 2.0);
    const int res = d == 1 ? 65 : 17;
    CubeDomain V(center, 0.5 * side, res);
    const int lev = 1 + coin(rng);
    const int per = 1 << lev;
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(per);
    std::vector<CubeDomain> parts;
    while (parts.empty()) {
        for (std::size_t j = 0; j < total; ++j) {
            if (!coin(rng)) continue;
            std::vector<double> lower(d);
            std::size_t rest = j;
            for (int k = 0; k < d; ++k) {
                lower[k] = V.lower(k) + side / per * static_cast<double>(rest % per);
                rest /= per;
            }
            parts.push_back(CubeDomain::from_corner(lower, side / per, res));
        }
    }
    std::vector<double> xi(d), v0(1), x0(d);
    for (auto& e : xi) e = unif(rng);
    v0[0] = unif(rng);
    for (auto& e : x0) e = unif(rng);
    const double eps = std::ldexp(1.0, -static_cast<int>(rng() % 3));
    return {L.name() + "#" + std::to_string(i), L, V, parts, BoundaryData::from_affine(AffineData{v0, xi, x0}), eps};
}

}  // namespace detail

/// Subadditivity, Dirichlet-versus-free gap, and the pointwise chain.
inline SuiteResult verify_sandwich(std::uint64_t seed) {
    SuiteResult out;
    out.suite = "sandwich";
    {
        detail::CheckScope c(out, 7, "subadditivity");
        std::mt19937_64 rng(seed);
        std::vector<detail::SplitInstance> inst;
        for (std::size_t i = 0; i < 20; ++i) inst.push_back(detail::random_split(i, rng));
        SolverConfig cfg;
        cfg.multistart_count = 3;
        cfg.rng_seed = seed;
        const auto reps = parallel_map(inst.size(), [&](std::size_t i) {
            return subadditivity_check(inst[i].data, inst[i].parts, inst[i].V, inst[i].L, inst[i].eps, cfg);
        });
        for (std::size_t i = 0; i < reps.size(); ++i)
            c.record(inst[i].label + ":margin", reps[i].margin, 0.0, reps[i].tolerance, reps[i].holds);
        c.runtime_limit(120.0);
    }
    {
        detail::CheckScope c(out, 8, "dirichlet_free_gap");
        SolverConfig cfg;
        cfg.multistart_count = 2;
        cfg.rng_seed = seed;
        // convex
        {
            const auto L = make_builtin("p_power", detail::params({{"d", 2}}));
            auto u = DiscreteField::affine(CubeDomain({0.5, 0.5}, 0.5, 9),
                                           AffineData{{0.2}, {0.7, -0.4}, {0.5, 0.5}});
            RelaxOptions opt;
            opt.density.rho_schedule = {0.25, 0.125};
            opt.density.resolution = 9;
            const auto g = dirichlet_free_gap(constant_family(L), u, 2, opt, cfg);
            c.at_most("convex", g.relative_gap, 1e-2);
        }
        // periodic homogenization
        {
            const auto L = make_builtin("quadratic_coeff_1d");
            auto u = DiscreteField::affine(CubeDomain({0.5}, 0.5, 33), AffineData{{0.0}, {1.0}, {0.0}});
            RelaxOptions opt;
            opt.method = DensityMethod::EpsFamily;
            opt.density.rho_schedule = {0.25, 0.125};
            opt.density.eps_schedule = {0.125, 0.0625};
            opt.density.resolution = 65;
            opt.points_per_axis = 4;
            opt.midpoint = true;
            const auto g = dirichlet_free_gap(rescaled_family(L), u, 4, opt, cfg);
            c.at_most("homogenization", g.relative_gap, 1e-2);
            c.relative("homogenization:recovery", g.dirichlet, 1.6, 1e-2);
        }
        // double well
        {
            const auto L = make_builtin("double_well_1d");
            auto u = DiscreteField::affine(CubeDomain({0.5}, 0.5, 33), AffineData{{0.0}, {0.0}, {0.0}});
            RelaxOptions opt;
            opt.density.rho_schedule = {0.25, 0.125};
            opt.density.resolution = 65;
            opt.points_per_axis = 4;
            opt.midpoint = true;
            const auto g = dirichlet_free_gap(constant_family(L), u, 4, opt, cfg);
            c.at_most("double_well", g.relative_gap, 5e-2);
        }
        c.runtime_limit(300.0);
    }
    {
        detail::CheckScope c(out, 0, "derivative_chain");
        const auto L = make_builtin("p_power", detail::params({{"p", 2.0}}));
        auto u = DiscreteField::from_function(CubeDomain({0.5}, 0.5, 65), 1, [](std::span<const double> x,
                                                                                 std::span<double> o) {
            o[0] = x[0] + 0.5 * x[0] * x[0];
        });
        SandwichOptions opt;
        opt.rho_schedule = {0.25, 0.125, 0.0625};
        opt.resolution = 17;
        opt.seed = seed;
        const auto rep = sandwich_chain(constant_family(L), u, {{0.4}, {0.6}}, opt, SolverConfig{});
        for (std::size_t s = 0; s < rep.sites.size(); ++s)
            c.record("site" + std::to_string(s) + ":violation", rep.sites[s].violation, 0.0, 0.0,
                     !rep.sites[s].flagged);
    }
    return out;
}

inline SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
    if (name == "convex") return verify_convex(seed);
    if (name == "homog1d") return verify_homog1d(seed);
    if (name == "laminate2d") return verify_laminate2d(seed);
    if (name == "doublewell") return verify_doublewell(seed);
    if (name == "vitali") return verify_vitali(seed);
    if (name == "sandwich") return verify_sandwich(seed);
    throw ValidationError("unknown verify suite '" + name + "'");
}

}  // namespace varhom
