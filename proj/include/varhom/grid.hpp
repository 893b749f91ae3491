// Cube domains, uniform tensor meshes and conforming Q1 (piecewise
// multilinear) fields whose perturbation part vanishes on the boundary.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "varhom/common.hpp"
#include "varhom/integrand.hpp"

namespace varhom {

inline constexpr int kMaxResolution = 8193;
inline constexpr std::size_t kMaxNodes = std::size_t{1} << 24;

/// Open cube Q_rho(x) = x + rho (-1/2, 1/2)^d, meshed with `resolution` nodes per edge.
struct CubeDomain {
    std::vector<double> center;
    double half_side = 0.5;
    int resolution = 2;

    CubeDomain() = default;
    CubeDomain(std::vector<double> c, double half, int res)
        : center(std::move(c)), half_side(half), resolution(res) {
        validate();
    }

    /// Cube with side `rho` centred at x.
    static CubeDomain centered(std::span<const double> x, double rho, int res) {
        return {std::vector<double>(x.begin(), x.end()), 0.5 * rho, res};
    }

    static CubeDomain from_corner(std::span<const double> lower, double side, int res) {
        std::vector<double> c(lower.begin(), lower.end());
        for (auto& v : c) v += 0.5 * side;
        return {std::move(c), 0.5 * side, res};
    }

    void validate() const {
        require(!center.empty() && center.size() <= static_cast<std::size_t>(kMaxDim),
                "cube domain: dimension must be in {1,2,3}");
        require(half_side > 0.0 && std::isfinite(half_side), "cube domain: half_side must be > 0");
        require(resolution >= 2, "cube domain: resolution must be >= 2 nodes per edge");
        require(resolution <= kMaxResolution, "cube domain: resolution exceeds the configured cap");
        require(all_finite(center), "cube domain: center must be finite");
    }

    int dim() const { return static_cast<int>(center.size()); }
    double side() const { return 2.0 * half_side; }
    double volume() const { return std::pow(side(), dim()); }
    double diameter() const { return side() * std::sqrt(static_cast<double>(dim())); }
    double spacing() const { return side() / static_cast<double>(resolution - 1); }
    double lower(int axis) const { return center[axis] - half_side; }
    double upper(int axis) const { return center[axis] + half_side; }
    int cells_per_edge() const { return resolution - 1; }

    std::size_t node_count() const {
        std::size_t n = 1;
        for (int k = 0; k < dim(); ++k) n *= static_cast<std::size_t>(resolution);
        return n;
    }
    std::size_t cell_count() const {
        std::size_t n = 1;
        for (int k = 0; k < dim(); ++k) n *= static_cast<std::size_t>(resolution - 1);
        return n;
    }

    CubeDomain with_resolution(int res) const { return {center, half_side, res}; }

    /// Distance from x to the boundary, in the max norm (negative outside).
    double inner_margin(std::span<const double> x) const {
        double m = half_side;
        for (int k = 0; k < dim(); ++k) m = std::min({m, x[k] - lower(k), upper(k) - x[k]});
        return m;
    }

    bool contains(std::span<const double> x, double tol = 0.0) const {
        for (int k = 0; k < dim(); ++k)
            if (x[k] < lower(k) - tol || x[k] > upper(k) + tol) return false;
        return true;
    }
};

/// Tensor quadrature on the reference cell [0,1]^d; weights sum to 1.
struct QuadratureRule {
    enum class Kind { Gauss2, Midpoint };
    Kind kind = Kind::Gauss2;
    int dim = 1;
    std::vector<std::array<double, kMaxDim>> points;
    std::vector<double> weights;

    static QuadratureRule gauss2(int d) {
        const double g = 0.5 / std::sqrt(3.0);
        return tensor(d, Kind::Gauss2, {0.5 - g, 0.5 + g});
    }
    static QuadratureRule midpoint(int d) { return tensor(d, Kind::Midpoint, {0.5}); }

    /// Physical weights on a cell of spacing h.
    std::vector<double> cell_weights(double h) const {
        std::vector<double> w(weights);
        const double vol = std::pow(h, dim);
        for (auto& x : w) x *= vol;
        return w;
    }

private:
    static QuadratureRule tensor(int d, Kind kind, std::vector<double> nodes1d) {
        QuadratureRule q;
        q.kind = kind;
        q.dim = d;
        const int n = static_cast<int>(nodes1d.size());
        int total = 1;
        for (int k = 0; k < d; ++k) total *= n;
        const double w = 1.0 / static_cast<double>(total);
        for (int i = 0; i < total; ++i) {
            std::array<double, kMaxDim> p{};
            int rest = i;
            for (int k = 0; k < d; ++k) {
                p[k] = nodes1d[rest % n];
                rest /= n;
            }
            q.points.push_back(p);
            q.weights.push_back(w);
        }
        return q;
    }
};

enum class QuadratureChoice { Auto, Gauss2, Midpoint };

/// True when every coefficient breakpoint inside the cube lies on a mesh line.
inline bool mesh_aligned(const Integrand& L, const CubeDomain& dom) {
    const auto grid = L.coefficient_grid();
    const double h = dom.spacing();
    auto is_int = [](double v) { return std::abs(v - std::round(v)) <= 1e-9 * std::max(1.0, std::abs(v)); };
    for (int k = 0; k < dom.dim(); ++k) {
        const double s = grid.spacing[k];
        if (s <= 0.0) continue;
        // Breakpoints inside (lo, hi)?
        const double lo = dom.lower(k), hi = dom.upper(k);
        const double first = grid.offset[k] + std::floor((lo - grid.offset[k]) / s + 1.0) * s;
        if (first >= hi - 1e-12 * s) continue;
        if (!is_int(s / h) || !is_int((first - lo) / h)) return false;
    }
    return true;
}

/// Smallest resolution >= min_res (up to `max_factor` times larger) whose mesh
/// is aligned with the coefficient breakpoints.
inline std::optional<int> aligned_resolution(const Integrand& L, const CubeDomain& dom, int min_res,
                                             int max_factor = 8) {
    for (int r = std::max(2, min_res); r <= std::min(kMaxResolution, min_res * max_factor); ++r)
        if (mesh_aligned(L, dom.with_resolution(r))) return r;
    return std::nullopt;
}

/// Gauss by default; midpoint when the integrand is rough in x or its
/// breakpoints are not resolved by the mesh.
inline QuadratureRule select_rule(const Integrand& L, const CubeDomain& dom,
                                  QuadratureChoice choice = QuadratureChoice::Auto) {
    switch (choice) {
        case QuadratureChoice::Gauss2: return QuadratureRule::gauss2(dom.dim());
        case QuadratureChoice::Midpoint: return QuadratureRule::midpoint(dom.dim());
        case QuadratureChoice::Auto: break;
    }
    if (L.traits().rough_in_x || (L.traits().x_dependent && !mesh_aligned(L, dom)))
        return QuadratureRule::midpoint(dom.dim());
    return QuadratureRule::gauss2(dom.dim());
}

/// Affine map v0 + xi0 (x - x0).
struct AffineData {
    std::vector<double> v0;
    std::vector<double> xi0;  // m x d row-major
    std::vector<double> x0;

    int comps() const { return static_cast<int>(v0.size()); }
    int dim() const { return static_cast<int>(x0.size()); }

    void validate() const {
        require(!v0.empty() && !x0.empty(), "affine data: v0 and x0 must be nonempty");
        require(xi0.size() == v0.size() * x0.size(), "affine data: xi0 must have m*d entries");
        require(all_finite(v0) && all_finite(xi0) && all_finite(x0), "affine data must be finite");
    }

    void eval(std::span<const double> x, std::span<double> out) const {
        const int m = comps(), d = dim();
        for (int c = 0; c < m; ++c) {
            double s = v0[c];
            for (int k = 0; k < d; ++k) s += xi0[c * d + k] * (x[k] - x0[k]);
            out[c] = s;
        }
    }

    /// Pure slope: v0 = 0, x0 = 0.
    static AffineData slope(std::vector<double> xi, int m, int d) {
        AffineData a{std::vector<double>(m, 0.0), std::move(xi), std::vector<double>(d, 0.0)};
        a.validate();
        return a;
    }
};

/// Continuous Q1 field u = u_bd + phi on a cube mesh; phi is zero on boundary
/// nodes. Nodes are numbered with axis 0 fastest.
class DiscreteField {
public:
    using SampleFn = std::function<void(std::span<const double> x, std::span<double> out)>;

    static DiscreteField affine(const CubeDomain& dom, AffineData data) {
        data.validate();
        require(data.dim() == dom.dim(), "discrete field: affine data dimension does not match domain");
        DiscreteField f(dom, data.comps());
        f.affine_ = data;
        f.fill_base([&](std::span<const double> x, std::span<double> out) { data.eval(x, out); });
        return f;
    }

    /// Boundary data given by sampling `u` at every node (its nodal interpolant).
    static DiscreteField from_function(const CubeDomain& dom, int comps, const SampleFn& u) {
        require(comps >= 1 && comps <= kMaxComp, "discrete field: components must be in {1,2,3}");
        DiscreteField f(dom, comps);
        f.fill_base(u);
        return f;
    }

    const CubeDomain& domain() const { return dom_; }
    int comps() const { return comps_; }
    int dim() const { return dom_.dim(); }
    int resolution() const { return dom_.resolution; }
    std::size_t node_count() const { return dom_.node_count(); }
    const std::optional<AffineData>& affine_data() const { return affine_; }

    std::span<const double> base() const { return base_; }
    std::span<const double> perturbation() const { return pert_; }
    std::span<double> perturbation_mut() { return pert_; }

    double value(std::size_t node, int c) const {
        const std::size_t i = node * static_cast<std::size_t>(comps_) + static_cast<std::size_t>(c);
        return base_[i] + pert_[i];
    }

    std::vector<double> values() const {
        std::vector<double> out(base_.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = base_[i] + pert_[i];
        return out;
    }

    void node_index(std::size_t node, std::array<int, kMaxDim>& idx) const {
        const auto r = static_cast<std::size_t>(dom_.resolution);
        for (int k = 0; k < dim(); ++k) {
            idx[k] = static_cast<int>(node % r);
            node /= r;
        }
    }

    void node_coord(std::size_t node, std::span<double> x) const {
        std::array<int, kMaxDim> idx{};
        node_index(node, idx);
        const double h = dom_.spacing();
        for (int k = 0; k < dim(); ++k) x[k] = dom_.lower(k) + h * idx[k];
    }

    bool is_boundary(std::size_t node) const {
        std::array<int, kMaxDim> idx{};
        node_index(node, idx);
        for (int k = 0; k < dim(); ++k)
            if (idx[k] == 0 || idx[k] == dom_.resolution - 1) return true;
        return false;
    }

    const std::vector<std::size_t>& interior_nodes() const { return interior_; }
    std::size_t interior_dof_count() const { return interior_.size() * static_cast<std::size_t>(comps_); }

    std::vector<double> interior_dofs() const {
        std::vector<double> out(interior_dof_count());
        for (std::size_t i = 0; i < interior_.size(); ++i)
            for (int c = 0; c < comps_; ++c)
                out[i * comps_ + c] = pert_[interior_[i] * comps_ + c];
        return out;
    }

    void set_interior_dofs(std::span<const double> dofs) {
        require(dofs.size() == interior_dof_count(), "discrete field: interior dof count mismatch");
        for (std::size_t i = 0; i < interior_.size(); ++i)
            for (int c = 0; c < comps_; ++c)
                pert_[interior_[i] * comps_ + c] = dofs[i * comps_ + c];
    }

    void clear_perturbation() { std::fill(pert_.begin(), pert_.end(), 0.0); }

    /// Multilinear interpolation of u (and its gradient, m x d row-major) at x.
    void evaluate(std::span<const double> x, std::span<double> u, std::span<double> du = {}) const {
        const int d = dim();
        const int r = dom_.resolution;
        const double h = dom_.spacing();
        std::array<int, kMaxDim> cell{};
        std::array<double, kMaxDim> t{};
        for (int k = 0; k < d; ++k) {
            double s = (x[k] - dom_.lower(k)) / h;
            int c = static_cast<int>(std::floor(s));
            c = std::clamp(c, 0, r - 2);
            cell[k] = c;
            t[k] = s - c;
        }
        for (int c = 0; c < comps_; ++c) u[c] = 0.0;
        if (!du.empty())
            for (auto& g : du) g = 0.0;
        const int nv = 1 << d;
        for (int a = 0; a < nv; ++a) {
            std::size_t node = 0, stride = 1;
            double N = 1.0;
            std::array<double, kMaxDim> dN{};
            for (int k = 0; k < d; ++k) dN[k] = 1.0;
            for (int k = 0; k < d; ++k) {
                const int b = (a >> k) & 1;
                node += static_cast<std::size_t>(cell[k] + b) * stride;
                stride *= static_cast<std::size_t>(r);
                const double f = b ? t[k] : 1.0 - t[k];
                const double df = (b ? 1.0 : -1.0) / h;
                for (int j = 0; j < d; ++j) dN[j] *= (j == k ? df : f);
                N *= f;
            }
            for (int c = 0; c < comps_; ++c) {
                const double val = value(node, c);
                u[c] += N * val;
                if (!du.empty())
                    for (int k = 0; k < d; ++k) du[c * d + k] += dN[k] * val;
            }
        }
    }

    /// Resolution r -> 2r-1; the new field interpolates the old one exactly.
    DiscreteField refined() const {
        const int R = 2 * dom_.resolution - 1;
        require(R <= kMaxResolution, "refine: resolution overflow beyond the configured cap");
        CubeDomain fine = dom_;
        fine.resolution = R;
        require(fine.node_count() <= kMaxNodes, "refine: node count overflow beyond the configured cap");
        DiscreteField out(fine, comps_);
        out.affine_ = affine_;
        const int d = dim();
        const auto r = static_cast<std::size_t>(dom_.resolution);
        std::array<int, kMaxDim> idx{};
        for (std::size_t n = 0; n < fine.node_count(); ++n) {
            out.node_index(n, idx);
            // average over the old nodes bracketing odd indices
            int odd_axes = 0;
            for (int k = 0; k < d; ++k) odd_axes += idx[k] & 1;
            const int combos = 1 << odd_axes;
            const double w = 1.0 / combos;
            for (int c = 0; c < comps_; ++c) {
                double sb = 0.0, sp = 0.0;
                for (int q = 0; q < combos; ++q) {
                    std::size_t old = 0, stride = 1;
                    int bit = 0;
                    for (int k = 0; k < d; ++k) {
                        int oi = idx[k] / 2;
                        if (idx[k] & 1) oi += (q >> bit++) & 1;
                        old += static_cast<std::size_t>(oi) * stride;
                        stride *= r;
                    }
                    sb += base_[old * comps_ + c];
                    sp += pert_[old * comps_ + c];
                }
                out.base_[n * comps_ + c] = w * sb;
                out.pert_[n * comps_ + c] = w * sp;
            }
        }
        if (affine_) {
            SmallVec x(d);
            for (std::size_t n = 0; n < fine.node_count(); ++n) {
                out.node_coord(n, x.span());
                affine_->eval(x.span(), std::span<double>(out.base_).subspan(n * comps_, comps_));
            }
        }
        return out;
    }

    /// CSV dump: one row per node (axis 0 fastest): indices, coordinates, u components.
    void write_csv(std::ostream& os) const {
        const int d = dim();
        for (int k = 0; k < d; ++k) os << "i" << k << ",";
        for (int k = 0; k < d; ++k) os << "x" << k << ",";
        for (int c = 0; c < comps_; ++c) os << "u" << c << (c + 1 < comps_ ? "," : "\n");
        std::array<int, kMaxDim> idx{};
        SmallVec x(d);
        char buf[64];
        for (std::size_t n = 0; n < node_count(); ++n) {
            node_index(n, idx);
            node_coord(n, x.span());
            for (int k = 0; k < d; ++k) os << idx[k] << ",";
            for (int k = 0; k < d; ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", x[k]);
                os << buf << ",";
            }
            for (int c = 0; c < comps_; ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", value(n, c));
                os << buf << (c + 1 < comps_ ? "," : "\n");
            }
        }
    }

    /// Flat binary dump: node_count * m native doubles in node order.
    void write_binary(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        require(static_cast<bool>(os), "cannot open '" + path + "' for writing");
        const auto vals = values();
        os.write(reinterpret_cast<const char*>(vals.data()),
                 static_cast<std::streamsize>(vals.size() * sizeof(double)));
    }

private:
    DiscreteField(const CubeDomain& dom, int comps) : dom_(dom), comps_(comps) {
        dom_.validate();
        require(dom_.node_count() <= kMaxNodes, "discrete field: node count exceeds the configured cap");
        base_.assign(dom_.node_count() * comps, 0.0);
        pert_.assign(dom_.node_count() * comps, 0.0);
        for (std::size_t n = 0; n < dom_.node_count(); ++n)
            if (!is_boundary(n)) interior_.push_back(n);
    }

    void fill_base(const SampleFn& u) {
        SmallVec x(dim());
        for (std::size_t n = 0; n < node_count(); ++n) {
            node_coord(n, x.span());
            u(x.span(), std::span<double>(base_).subspan(n * comps_, comps_));
        }
        require(all_finite(base_), "discrete field: boundary data must be finite");
    }

    CubeDomain dom_;
    int comps_;
    std::optional<AffineData> affine_;
    std::vector<double> base_;
    std::vector<double> pert_;
    std::vector<std::size_t> interior_;
};

// ---------------------------------------------------------------------------
// Assembly

namespace detail {

/// Reference Q1 basis tables at the quadrature points.
struct ElementTables {
    int dim = 1;
    int nv = 2;
    std::vector<double> N;   // [qp][a]
    std::vector<double> dN;  // [qp][a][k], reference derivatives
    std::vector<std::array<double, kMaxDim>> pts;
    std::vector<double> w;   // reference weights

    explicit ElementTables(const QuadratureRule& q) : dim(q.dim), nv(1 << q.dim), pts(q.points), w(q.weights) {
        const std::size_t nq = q.points.size();
        N.assign(nq * nv, 0.0);
        dN.assign(nq * nv * dim, 0.0);
        for (std::size_t i = 0; i < nq; ++i)
            for (int a = 0; a < nv; ++a) {
                double n = 1.0;
                std::array<double, kMaxDim> g{1.0, 1.0, 1.0};
                for (int k = 0; k < dim; ++k) {
                    const int b = (a >> k) & 1;
                    const double y = q.points[i][k];
                    const double f = b ? y : 1.0 - y;
                    const double df = b ? 1.0 : -1.0;
                    for (int j = 0; j < dim; ++j) g[j] *= (j == k ? df : f);
                    n *= f;
                }
                N[i * nv + a] = n;
                for (int k = 0; k < dim; ++k) dN[(i * nv + a) * dim + k] = g[k];
            }
    }
};

/// Visits each cell with (lower corner, corner node ids); `filter` on the cell
/// centre selects a subset of cells.
template <class Visit>
void for_each_cell(const CubeDomain& dom, Visit&& visit) {
    const int d = dom.dim();
    const int r = dom.resolution;
    const int n = r - 1;
    const double h = dom.spacing();
    const int nv = 1 << d;
    std::array<std::size_t, 8> corners{};
    std::array<double, kMaxDim> lower{};
    const std::size_t total = dom.cell_count();
    for (std::size_t cid = 0; cid < total; ++cid) {
        std::size_t rest = cid, base = 0, stride = 1;
        for (int k = 0; k < d; ++k) {
            const int ck = static_cast<int>(rest % static_cast<std::size_t>(n));
            rest /= static_cast<std::size_t>(n);
            lower[k] = dom.lower(k) + h * ck;
            base += static_cast<std::size_t>(ck) * stride;
            stride *= static_cast<std::size_t>(r);
        }
        for (int a = 0; a < nv; ++a) {
            std::size_t off = 0, s = 1;
            for (int k = 0; k < d; ++k) {
                off += static_cast<std::size_t>((a >> k) & 1) * s;
                s *= static_cast<std::size_t>(r);
            }
            corners[a] = base + off;
        }
        visit(lower, corners);
    }
}

using CellFilter = std::function<bool(std::span<const double> cell_center)>;

/// Integral of fn(x, u, grad u) over the (filtered) cells.
template <class Fn>
double integrate(const DiscreteField& f, const QuadratureRule& rule, Fn&& fn, const CellFilter& filter = {}) {
    const int d = f.dim(), m = f.comps();
    const double h = f.domain().spacing();
    const ElementTables tab(rule);
    const auto w = rule.cell_weights(h);
    const auto base = f.base();
    const auto pert = f.perturbation();
    std::array<double, 8 * kMaxComp> nodal{};
    SmallVec x(d), u(m), du(m * d), center(d);
    double total = 0.0;
    for_each_cell(f.domain(), [&](const std::array<double, kMaxDim>& lower, const std::array<std::size_t, 8>& corners) {
        if (filter) {
            for (int k = 0; k < d; ++k) center[k] = lower[k] + 0.5 * h;
            if (!filter(center.span())) return;
        }
        for (int a = 0; a < tab.nv; ++a)
            for (int c = 0; c < m; ++c) {
                const std::size_t i = corners[a] * m + c;
                nodal[a * m + c] = base[i] + pert[i];
            }
        double cell = 0.0;
        for (std::size_t q = 0; q < tab.pts.size(); ++q) {
            for (int k = 0; k < d; ++k) x[k] = lower[k] + h * tab.pts[q][k];
            for (int c = 0; c < m; ++c) {
                u[c] = 0.0;
                for (int k = 0; k < d; ++k) du[c * d + k] = 0.0;
            }
            for (int a = 0; a < tab.nv; ++a) {
                const double Na = tab.N[q * tab.nv + a];
                for (int c = 0; c < m; ++c) {
                    const double val = nodal[a * m + c];
                    u[c] += Na * val;
                    for (int k = 0; k < d; ++k) du[c * d + k] += tab.dN[(q * tab.nv + a) * d + k] / h * val;
                }
            }
            cell += w[q] * fn(x.span(), u.span(), du.span());
        }
        total += cell;
    });
    return total;
}

/// Energy and its gradient with respect to all nodal values (node-major).
inline double energy_with_nodal_gradient(const Integrand& L, const DiscreteField& f, const QuadratureRule& rule,
                                         std::vector<double>& nodal_grad) {
    const int d = f.dim(), m = f.comps();
    const double h = f.domain().spacing();
    const ElementTables tab(rule);
    const auto w = rule.cell_weights(h);
    const auto base = f.base();
    const auto pert = f.perturbation();
    nodal_grad.assign(f.node_count() * m, 0.0);
    std::array<double, 8 * kMaxComp> nodal{};
    SmallVec x(d), u(m), du(m * d), gv(m), gxi(m * d);
    double total = 0.0;
    for_each_cell(f.domain(), [&](const std::array<double, kMaxDim>& lower, const std::array<std::size_t, 8>& corners) {
        for (int a = 0; a < tab.nv; ++a)
            for (int c = 0; c < m; ++c) {
                const std::size_t i = corners[a] * m + c;
                nodal[a * m + c] = base[i] + pert[i];
            }
        for (std::size_t q = 0; q < tab.pts.size(); ++q) {
            for (int k = 0; k < d; ++k) x[k] = lower[k] + h * tab.pts[q][k];
            for (int c = 0; c < m; ++c) {
                u[c] = 0.0;
                for (int k = 0; k < d; ++k) du[c * d + k] = 0.0;
            }
            for (int a = 0; a < tab.nv; ++a) {
                const double Na = tab.N[q * tab.nv + a];
                for (int c = 0; c < m; ++c) {
                    const double val = nodal[a * m + c];
                    u[c] += Na * val;
                    for (int k = 0; k < d; ++k) du[c * d + k] += tab.dN[(q * tab.nv + a) * d + k] / h * val;
                }
            }
            total += w[q] * L(x.span(), u.span(), du.span());
            L.gradient(x.span(), u.span(), du.span(), gv.span(), gxi.span());
            for (int a = 0; a < tab.nv; ++a) {
                const double Na = tab.N[q * tab.nv + a];
                for (int c = 0; c < m; ++c) {
                    double g = gv[c] * Na;
                    for (int k = 0; k < d; ++k) g += gxi[c * d + k] * tab.dN[(q * tab.nv + a) * d + k] / h;
                    nodal_grad[corners[a] * m + c] += w[q] * g;
                }
            }
        }
    });
    return total;
}

inline void check_compatible(const Integrand& L, const DiscreteField& f) {
    require(L.dim() == f.dim() && L.comps() == f.comps(),
            "integrand " + L.name() + " (d=" + std::to_string(L.dim()) + ", m=" + std::to_string(L.comps()) +
                ") does not match the field (d=" + std::to_string(f.dim()) + ", m=" + std::to_string(f.comps()) + ")");
}

}  // namespace detail

/// Sum over cells and quadrature points of w L(x_q, u(x_q), grad u(x_q)).
/// Optional filter restricts to cells whose centre passes it.
inline double energy(const Integrand& L, const DiscreteField& f, const QuadratureRule& rule,
                     const detail::CellFilter& filter = {}) {
    detail::check_compatible(L, f);
    const double e = detail::integrate(
        f, rule,
        [&](std::span<const double> x, std::span<const double> u, std::span<const double> du) {
            const double v = L(x, u, du);
            if (!std::isfinite(v)) throw SolverError("non-finite integrand value at a quadrature point");
            return v;
        },
        filter);
    return e;
}

inline double energy(const Integrand& L, const DiscreteField& f) {
    return energy(L, f, select_rule(L, f.domain()));
}

/// Gradient of `energy` with respect to interior nodal values, in the order of
/// DiscreteField::interior_dofs().
inline std::vector<double> energy_gradient(const Integrand& L, const DiscreteField& f, const QuadratureRule& rule) {
    detail::check_compatible(L, f);
    std::vector<double> nodal;
    detail::energy_with_nodal_gradient(L, f, rule, nodal);
    const int m = f.comps();
    const auto& interior = f.interior_nodes();
    std::vector<double> g(interior.size() * m);
    for (std::size_t i = 0; i < interior.size(); ++i)
        for (int c = 0; c < m; ++c) g[i * m + c] = nodal[interior[i] * m + c];
    if (!all_finite(g)) throw SolverError("non-finite energy gradient");
    return g;
}

inline DiscreteField refine(const DiscreteField& f) { return f.refined(); }

/// Integral of |u|^p and of |grad u|^p, for Poincare-type checks.
inline std::pair<double, double> lp_norms_pow(const DiscreteField& f, double p, const QuadratureRule& rule) {
    const double a = detail::integrate(f, rule, [&](auto, std::span<const double> u, auto) { return pow_norm(u, p); });
    const double b = detail::integrate(f, rule, [&](auto, auto, std::span<const double> du) { return pow_norm(du, p); });
    return {a, b};
}

}  // namespace varhom
