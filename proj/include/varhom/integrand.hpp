// Integrands L(x, v, xi) with growth metadata, the built-in library, rescaling
// x -> x/eps and random-sampling growth checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "varhom/common.hpp"

namespace varhom {

using Scalar = double;
using PointFn = std::function<double(std::span<const double>)>;

/// Two-sided bounds alpha |xi|^p <= L(x,v,xi) <= beta (a(x) + |v|^p + |xi|^p).
/// alpha == 0 marks a non-coercive integrand.
struct GrowthBounds {
    double alpha = 1.0;
    double beta = 1.0;
    double p = 2.0;
    PointFn a_density = [](std::span<const double>) { return 0.0; };

    bool coercive() const { return alpha > 0.0; }

    void validate() const {
        require(alpha >= 0.0 && std::isfinite(alpha), "growth bounds: alpha must be >= 0");
        require(beta > 0.0 && std::isfinite(beta), "growth bounds: beta must be > 0");
        require(p > 1.0 && std::isfinite(p), "growth bounds: p must be > 1");
    }
};

/// Uniform partition of each axis into cells of width `spacing` shifted by
/// `offset`. Coefficients of x-dependent integrands are constant on these
/// cells; a spacing of 0 means the axis carries no breakpoints.
struct CoefficientGrid {
    std::array<double, kMaxDim> spacing{};
    std::array<double, kMaxDim> offset{};

    bool any() const {
        return std::any_of(spacing.begin(), spacing.end(), [](double s) { return s > 0.0; });
    }
};

struct IntegrandTraits {
    bool caratheodory = true;   // continuous in (v, xi)
    bool x_dependent = false;
    bool v_dependent = false;
    bool periodic = false;      // 1-periodic in x (before rescaling)
    bool rough_in_x = false;    // discontinuities not captured by CoefficientGrid
};

/// Pointwise-evaluable density L(x, v, xi). x in R^d, v in R^m, xi an m x d
/// matrix flattened row-major. Immutable; copies share the callables.
class Integrand {
public:
    using EvalFn = std::function<double(std::span<const double> x, std::span<const double> v,
                                        std::span<const double> xi)>;
    /// Writes dL/dv (m entries) and dL/dxi (m*d entries).
    using GradFn = std::function<void(std::span<const double> x, std::span<const double> v,
                                      std::span<const double> xi, std::span<double> dv,
                                      std::span<double> dxi)>;

    Integrand(std::string name, int dim, int comps, EvalFn eval, GrowthBounds bounds,
              IntegrandTraits traits = {}, GradFn grad = {}, CoefficientGrid grid = {})
        : name_(std::move(name)),
          dim_(dim),
          comps_(comps),
          eval_(std::make_shared<EvalFn>(std::move(eval))),
          grad_(grad ? std::make_shared<GradFn>(std::move(grad)) : nullptr),
          bounds_(std::move(bounds)),
          traits_(traits),
          grid_(grid) {
        require(dim >= 1 && dim <= kMaxDim, "integrand: dimension d must be in {1,2,3}");
        require(comps >= 1 && comps <= kMaxComp, "integrand: components m must be in {1,2,3}");
        require(static_cast<bool>(*eval_), "integrand: eval callable is empty");
        bounds_.validate();
    }

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    int comps() const { return comps_; }
    const GrowthBounds& bounds() const { return bounds_; }
    const IntegrandTraits& traits() const { return traits_; }
    bool has_analytic_gradient() const { return grad_ != nullptr; }
    double x_scale() const { return scale_; }

    /// Breakpoints in physical coordinates (after rescaling).
    CoefficientGrid coefficient_grid() const {
        CoefficientGrid g = grid_;
        for (int k = 0; k < kMaxDim; ++k) {
            g.spacing[k] *= scale_;
            g.offset[k] *= scale_;
        }
        return g;
    }

    double operator()(std::span<const double> x, std::span<const double> v,
                      std::span<const double> xi) const {
        if (scale_ == 1.0) return (*eval_)(x, v, xi);
        SmallVec y(static_cast<int>(x.size()));
        for (int k = 0; k < y.size; ++k) y[k] = x[k] / scale_;
        return (*eval_)(y.span(), v, xi);
    }

    /// dL/dv and dL/dxi; central differences when no analytic gradient exists.
    void gradient(std::span<const double> x, std::span<const double> v,
                  std::span<const double> xi, std::span<double> dv, std::span<double> dxi) const {
        SmallVec y(x);
        if (scale_ != 1.0)
            for (int k = 0; k < y.size; ++k) y[k] = x[k] / scale_;
        if (grad_) {
            (*grad_)(y.span(), v, xi, dv, dxi);
            return;
        }
        SmallVec vv(v);
        SmallVec xx(xi);
        auto central = [&](double& slot) {
            const double orig = slot;
            const double step = 1e-6 * std::max(1.0, std::abs(orig));
            slot = orig + step;
            const double fp = (*eval_)(y.span(), vv.span(), xx.span());
            slot = orig - step;
            const double fm = (*eval_)(y.span(), vv.span(), xx.span());
            slot = orig;
            return (fp - fm) / (2.0 * step);
        };
        for (int c = 0; c < vv.size; ++c) dv[c] = traits_.v_dependent ? central(vv[c]) : 0.0;
        for (int j = 0; j < xx.size; ++j) dxi[j] = central(xx[j]);
    }

    /// Same density evaluated at x / eps; growth weight becomes a(x / eps).
    Integrand rescaled(double eps) const {
        require(eps > 0.0 && std::isfinite(eps), "rescale: eps must be > 0");
        Integrand out = *this;
        out.scale_ = scale_ * eps;
        if (traits_.x_dependent) {
            auto a = bounds_.a_density;
            const double s = eps;
            out.bounds_.a_density = [a, s](std::span<const double> x) {
                SmallVec y(x);
                for (int k = 0; k < y.size; ++k) y[k] = x[k] / s;
                return a(y.span());
            };
        }
        return out;
    }

    Integrand with_bounds(GrowthBounds b) const {
        b.validate();
        Integrand out = *this;
        out.bounds_ = std::move(b);
        return out;
    }

    Integrand with_traits(IntegrandTraits t) const {
        Integrand out = *this;
        out.traits_ = t;
        return out;
    }

private:
    std::string name_;
    int dim_;
    int comps_;
    std::shared_ptr<const EvalFn> eval_;
    std::shared_ptr<const GradFn> grad_;
    GrowthBounds bounds_;
    IntegrandTraits traits_;
    CoefficientGrid grid_;
    double scale_ = 1.0;
};

inline Integrand rescale(const Integrand& L, double eps) { return L.rescaled(eps); }

/// Integrand (x, w, eta) -> L(x0, v0, eta): x and v frozen.
inline Integrand frozen(const Integrand& L, std::span<const double> x0, std::span<const double> v0) {
    require(static_cast<int>(x0.size()) == L.dim() && static_cast<int>(v0.size()) == L.comps(),
            "frozen: point dimensions do not match the integrand");
    // Freezing operates on physical coordinates, so capture the rescaled integrand.
    SmallVec xs(x0), vs(v0);
    auto base = L;
    Integrand::GradFn grad = [base, xs, vs](std::span<const double>, std::span<const double>,
                                            std::span<const double> xi, std::span<double> dv,
                                            std::span<double> dxi) {
        SmallVec tmp(static_cast<int>(dv.size()));
        base.gradient(xs.span(), vs.span(), xi, tmp.span(), dxi);
        for (auto& d : dv) d = 0.0;
    };
    GrowthBounds b = L.bounds();
    const double av = b.a_density(xs.span()) + pow_norm(vs.span(), b.p);
    b.a_density = [av](std::span<const double>) { return av; };
    IntegrandTraits t = L.traits();
    t.x_dependent = false;
    t.v_dependent = false;
    t.periodic = true;
    t.rough_in_x = false;
    return Integrand(L.name() + "[frozen]", L.dim(), L.comps(),
                     [base, xs, vs](std::span<const double>, std::span<const double>,
                                    std::span<const double> xi) { return base(xs.span(), vs.span(), xi); },
                     b, t, grad);
}

// ---------------------------------------------------------------------------
// Periodic piecewise-constant coefficient tables

/// 1-periodic coefficient, constant on k equal sub-intervals of [0,1). At a
/// breakpoint the value of the cell to the left is taken.
class PeriodicTable {
public:
    PeriodicTable() = default;
    explicit PeriodicTable(std::vector<double> values, bool positive = true)
        : values_(std::move(values)) {
        require(!values_.empty(),
                "coefficient table must be nonempty (one value per uniform cell of the unit period)");
        for (double a : values_) {
            require(std::isfinite(a), "coefficient table entries must be finite");
            if (positive) require(a > 0.0, "coefficient table entries must be positive");
            else require(a >= 0.0, "coefficient table entries must be nonnegative");
        }
    }

    double operator()(double y) const {
        const auto k = static_cast<long>(values_.size());
        const double frac = y - std::floor(y);
        long idx = static_cast<long>(std::ceil(frac * static_cast<double>(k))) - 1;
        if (idx < 0) idx = k - 1;
        if (idx >= k) idx = k - 1;
        return values_[static_cast<std::size_t>(idx)];
    }

    std::size_t cells() const { return values_.size(); }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    double mean() const {
        return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
    }
    double harmonic_mean() const {
        double s = 0.0;
        for (double a : values_) s += 1.0 / a;
        return static_cast<double>(values_.size()) / s;
    }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> values_{1.0};
};

// ---------------------------------------------------------------------------
// Built-in library

enum class BuiltinKind { PPower, QuadraticCoeff1d, Laminate2d, DoubleWell1d, PeriodicPlusPerturbation };

inline BuiltinKind parse_builtin(const std::string& name) {
    if (name == "p_power") return BuiltinKind::PPower;
    if (name == "quadratic_coeff_1d") return BuiltinKind::QuadraticCoeff1d;
    if (name == "laminate_2d") return BuiltinKind::Laminate2d;
    if (name == "double_well_1d") return BuiltinKind::DoubleWell1d;
    if (name == "periodic_plus_perturbation") return BuiltinKind::PeriodicPlusPerturbation;
    throw ValidationError("unknown built-in integrand '" + name + "'");
}

/// Scalar and table parameters of a built-in, as read from a config file.
struct ParamRecord {
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> tables;

    bool has(const std::string& k) const { return scalars.count(k) != 0; }
    double get(const std::string& k, double fallback) const {
        auto it = scalars.find(k);
        return it == scalars.end() ? fallback : it->second;
    }
    std::vector<double> table(const std::string& k, std::vector<double> fallback) const {
        auto it = tables.find(k);
        return it == tables.end() ? std::move(fallback) : it->second;
    }
    int get_int(const std::string& k, int fallback) const {
        const double v = get(k, fallback);
        require(v == std::floor(v), "parameter '" + k + "' must be an integer");
        return static_cast<int>(v);
    }
};

namespace detail {

inline void apply_overrides(GrowthBounds& b, const ParamRecord& params, bool p_is_declared) {
    if (params.has("alpha")) b.alpha = params.get("alpha", b.alpha);
    if (params.has("beta")) b.beta = params.get("beta", b.beta);
    if (p_is_declared && params.has("p")) b.p = params.get("p", b.p);
    b.validate();
}

inline long gcd_long(long a, long b) { return b == 0 ? a : gcd_long(b, a % b); }

inline Integrand make_p_power(const ParamRecord& params) {
    const double p = params.get("p", 2.0);
    require(p > 1.0, "p_power: exponent p must be > 1");
    const int d = params.get_int("d", 1);
    const int m = params.get_int("m", 1);
    GrowthBounds b{1.0, 1.0, p, [](std::span<const double>) { return 0.0; }};
    apply_overrides(b, params, false);
    auto eval = [p](std::span<const double>, std::span<const double>, std::span<const double> xi) {
        return pow_norm(xi, p);
    };
    auto grad = [p](std::span<const double>, std::span<const double>, std::span<const double> xi,
                    std::span<double> dv, std::span<double> dxi) {
        for (auto& g : dv) g = 0.0;
        const double n = norm2(xi);
        const double f = n > 0.0 ? p * std::pow(n, p - 2.0) : 0.0;
        for (std::size_t j = 0; j < xi.size(); ++j) dxi[j] = f * xi[j];
    };
    return Integrand("p_power", d, m, eval, b, IntegrandTraits{}, grad);
}

/// a(y_1) |xi|^2 with a periodic table along the first axis.
inline Integrand make_layered_quadratic(std::string name, int d, int m, const PeriodicTable& a,
                                        const ParamRecord& params) {
    GrowthBounds b{a.min(), a.max(), 2.0, [](std::span<const double>) { return 0.0; }};
    apply_overrides(b, params, false);
    auto eval = [a](std::span<const double> x, std::span<const double>, std::span<const double> xi) {
        double s = 0.0;
        for (double e : xi) s += e * e;
        return a(x[0]) * s;
    };
    auto grad = [a](std::span<const double> x, std::span<const double>, std::span<const double> xi,
                    std::span<double> dv, std::span<double> dxi) {
        for (auto& g : dv) g = 0.0;
        const double c = 2.0 * a(x[0]);
        for (std::size_t j = 0; j < xi.size(); ++j) dxi[j] = c * xi[j];
    };
    IntegrandTraits t;
    t.x_dependent = a.cells() > 1;
    t.periodic = true;
    CoefficientGrid grid;
    if (a.cells() > 1) grid.spacing[0] = 1.0 / static_cast<double>(a.cells());
    return Integrand(std::move(name), d, m, eval, b, t, grad, grid);
}

inline Integrand make_double_well(const ParamRecord& params) {
    const double c0 = params.get("c0", 0.0);
    require(c0 >= 0.0 && std::isfinite(c0), "double_well_1d: offset c0 must be >= 0");
    // (xi^2-1)^2 + c0 >= c0/(1+c0) |xi|^4, and <= (1+c0)(1+|xi|^4).
    GrowthBounds b{c0 / (1.0 + c0), 1.0 + c0, 4.0, [](std::span<const double>) { return 1.0; }};
    apply_overrides(b, params, true);
    auto eval = [c0](std::span<const double>, std::span<const double>, std::span<const double> xi) {
        const double s = xi[0] * xi[0] - 1.0;
        return s * s + c0;
    };
    auto grad = [](std::span<const double>, std::span<const double>, std::span<const double> xi,
                   std::span<double> dv, std::span<double> dxi) {
        for (auto& g : dv) g = 0.0;
        dxi[0] = 4.0 * xi[0] * (xi[0] * xi[0] - 1.0);
    };
    return Integrand("double_well_1d", 1, 1, eval, b, IntegrandTraits{}, grad);
}

inline Integrand make_periodic_plus_perturbation(const ParamRecord& params) {
    const int d = params.get_int("d", 1);
    const int m = params.get_int("m", 1);
    const PeriodicTable a(params.table("a", {1.0, 4.0}));
    const PeriodicTable h(params.table("h", {0.0}), false);
    const double height = params.get("bump_height", 0.0);
    const double radius = params.get("bump_radius", 0.0);
    require(height >= 0.0 && radius >= 0.0, "periodic_plus_perturbation: bump must be nonnegative");
    auto phi = [h, height, radius](std::span<const double> x) {
        double bump = 0.0;
        if (height > 0.0 && norm2(x) < radius) bump = height;
        return bump + h(x[0]);
    };
    const double beta = std::max(a.max(), 1.0);
    GrowthBounds b{a.min(), beta, 2.0, [phi, beta](std::span<const double> x) { return phi(x) / beta; }};
    apply_overrides(b, params, false);
    auto eval = [a, phi](std::span<const double> x, std::span<const double>, std::span<const double> xi) {
        double s = 0.0;
        for (double e : xi) s += e * e;
        return a(x[0]) * s + phi(x);
    };
    auto grad = [a](std::span<const double> x, std::span<const double>, std::span<const double> xi,
                    std::span<double> dv, std::span<double> dxi) {
        for (auto& g : dv) g = 0.0;
        const double c = 2.0 * a(x[0]);
        for (std::size_t j = 0; j < xi.size(); ++j) dxi[j] = c * xi[j];
    };
    IntegrandTraits t;
    t.x_dependent = true;
    t.periodic = height == 0.0 || radius == 0.0;
    t.rough_in_x = !t.periodic;
    CoefficientGrid grid;
    const long ka = static_cast<long>(a.cells());
    const long kh = static_cast<long>(h.cells());
    const long lcm = ka / gcd_long(ka, kh) * kh;
    if (lcm > 1) grid.spacing[0] = 1.0 / static_cast<double>(lcm);
    return Integrand("periodic_plus_perturbation", d, m, eval, b, t, grad, grid);
}

}  // namespace detail

/// Built-in integrand by kind. Optional "alpha"/"beta" parameters override
/// the declared growth constants (the density itself is unchanged).
inline Integrand make_builtin(BuiltinKind kind, const ParamRecord& params = {}) {
    switch (kind) {
        case BuiltinKind::PPower: return detail::make_p_power(params);
        case BuiltinKind::QuadraticCoeff1d:
            return detail::make_layered_quadratic("quadratic_coeff_1d", 1, 1,
                                                  PeriodicTable(params.table("a", {1.0, 4.0})), params);
        case BuiltinKind::Laminate2d:
            return detail::make_layered_quadratic("laminate_2d", 2, params.get_int("m", 1),
                                                  PeriodicTable(params.table("a", {1.0, 4.0})), params);
        case BuiltinKind::DoubleWell1d: return detail::make_double_well(params);
        case BuiltinKind::PeriodicPlusPerturbation: return detail::make_periodic_plus_perturbation(params);
    }
    throw ValidationError("unknown built-in integrand");
}

inline Integrand make_builtin(const std::string& name, const ParamRecord& params = {}) {
    return make_builtin(parse_builtin(name), params);
}

// ---------------------------------------------------------------------------
// Growth check

struct GrowthReport {
    std::size_t samples = 0;
    double lower_margin = kInf;   // min of L - alpha |xi|^p
    double upper_margin = kInf;   // min of beta (a + |v|^p + |xi|^p) - L
    double min_value = kInf;      // min of L itself
    std::vector<double> worst_lower_xi;
    bool pass = false;
};

/// Samples x in [-2,2]^d, v in [-2,2]^m, xi in [-2,2]^{m x d} plus the anchors
/// (0,0,0) and (0,0,1) and reports the worst margins of both growth bounds.
inline GrowthReport check_growth(const Integrand& L, std::size_t samples, std::uint64_t seed) {
    require(samples >= 1, "check_growth: samples must be >= 1");
    const auto& b = L.bounds();
    const int d = L.dim(), m = L.comps();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    GrowthReport rep;
    SmallVec x(d), v(m), xi(m * d);
    auto visit = [&] {
        const double val = L(x.span(), v.span(), xi.span());
        const double nxi = pow_norm(xi.span(), b.p);
        const double lower = val - b.alpha * nxi;
        const double upper = b.beta * (b.a_density(x.span()) + pow_norm(v.span(), b.p) + nxi) - val;
        if (lower < rep.lower_margin) {
            rep.lower_margin = lower;
            rep.worst_lower_xi.assign(xi.span().begin(), xi.span().end());
        }
        rep.upper_margin = std::min(rep.upper_margin, upper);
        rep.min_value = std::min(rep.min_value, val);
        ++rep.samples;
    };
    visit();
    for (int j = 0; j < m * d; ++j) xi[j] = 1.0;
    visit();
    for (std::size_t s = 0; s < samples; ++s) {
        for (int k = 0; k < d; ++k) x[k] = unif(rng);
        for (int c = 0; c < m; ++c) v[c] = unif(rng);
        for (int j = 0; j < m * d; ++j) xi[j] = unif(rng);
        visit();
    }
    constexpr double tol = 1e-12;
    rep.pass = rep.lower_margin >= -tol && rep.upper_margin >= -tol && rep.min_value >= 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Perturbation families and eps-indexed integrand families

/// Phi_eps(x) >= 0 together with an integrable majorant g.
struct PerturbationFamily {
    std::function<double(double, std::span<const double>)> phi;
    PointFn dominating_g;
};

/// Phi_eps(x) = eps^{-1/2} 1_{B_eps(0)}(x) + h(x) with majorant g(x) = 2/sqrt|x|.
/// Requires 0 <= h <= g/2.
inline PerturbationFamily inverse_sqrt_bump(PointFn h) {
    PerturbationFamily f;
    f.phi = [h](double eps, std::span<const double> x) {
        const double r = norm2(x);
        return (r < eps ? 1.0 / std::sqrt(eps) : 0.0) + h(x);
    };
    f.dominating_g = [](std::span<const double> x) {
        const double r = norm2(x);
        return r > 0.0 ? 2.0 / std::sqrt(r) : kInf;
    };
    return f;
}

struct DominationReport {
    std::size_t samples = 0;
    double worst_margin = kInf;  // min of g(x) - phi(eps, x)
    double min_phi = kInf;
    bool pass = false;
};

/// Samples eps in (0, 1] and x in the unit ball of R^d.
inline DominationReport check_domination(const PerturbationFamily& fam, int dim, std::size_t samples,
                                         std::uint64_t seed) {
    require(dim >= 1 && dim <= kMaxDim, "check_domination: dimension must be in {1,2,3}");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_real_distribution<double> epsd(1e-6, 1.0);
    DominationReport rep;
    SmallVec x(dim);
    for (std::size_t s = 0; s < samples; ++s) {
        double r2;
        do {
            r2 = 0.0;
            for (int k = 0; k < dim; ++k) {
                x[k] = unif(rng);
                r2 += x[k] * x[k];
            }
        } while (r2 >= 1.0);
        const double eps = epsd(rng);
        const double ph = fam.phi(eps, x.span());
        rep.worst_margin = std::min(rep.worst_margin, fam.dominating_g(x.span()) - ph);
        rep.min_phi = std::min(rep.min_phi, ph);
        ++rep.samples;
    }
    rep.pass = rep.worst_margin >= 0.0 && rep.min_phi >= 0.0;
    return rep;
}

/// eps -> L_eps. Constant families ignore eps.
using IntegrandFamily = std::function<Integrand(double eps)>;

inline IntegrandFamily constant_family(Integrand L) {
    return [L = std::move(L)](double) { return L; };
}

/// eps -> L(x/eps, v, xi).
inline IntegrandFamily rescaled_family(Integrand L) {
    return [L = std::move(L)](double eps) { return L.rescaled(eps); };
}

/// eps -> W(x, v, xi) + Phi_eps(x).
inline IntegrandFamily perturbed_family(Integrand W, PerturbationFamily fam) {
    return [W = std::move(W), fam = std::move(fam)](double eps) {
        auto base = W;
        auto phi = fam.phi;
        IntegrandTraits t = W.traits();
        t.x_dependent = true;
        t.periodic = false;
        t.rough_in_x = true;
        GrowthBounds b = W.bounds();
        auto a = b.a_density;
        const double beta = b.beta;
        b.a_density = [a, phi, eps, beta](std::span<const double> x) { return a(x) + phi(eps, x) / beta; };
        return Integrand(
            W.name() + "+perturbation", W.dim(), W.comps(),
            [base, phi, eps](std::span<const double> x, std::span<const double> v,
                             std::span<const double> xi) { return base(x, v, xi) + phi(eps, x); },
            b, t,
            [base](std::span<const double> x, std::span<const double> v, std::span<const double> xi,
                   std::span<double> dv, std::span<double> dxi) { base.gradient(x, v, xi, dv, dxi); },
            W.coefficient_grid());
    };
}

}  // namespace varhom
