// Set functions on open cubes: lower/upper lambda-derivatives by random cube
// sampling, greedy dyadic Vitali envelopes and certified sublevel covers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "varhom/common.hpp"
#include "varhom/grid.hpp"

namespace varhom {

/// Axis-aligned cube [lower, lower + side]^d (treated as open).
struct Cube {
    std::array<double, kMaxDim> lower{};
    double side = 1.0;
    int dim = 1;

    static Cube unit(int d) {
        Cube c;
        c.dim = d;
        return c;
    }
    static Cube centered(std::span<const double> x, double side) {
        Cube c;
        c.dim = static_cast<int>(x.size());
        c.side = side;
        for (int k = 0; k < c.dim; ++k) c.lower[k] = x[k] - 0.5 * side;
        return c;
    }
    static Cube from_domain(const CubeDomain& d) {
        Cube c;
        c.dim = d.dim();
        c.side = d.side();
        for (int k = 0; k < c.dim; ++k) c.lower[k] = d.lower(k);
        return c;
    }

    double volume() const { return std::pow(side, dim); }
    double diameter() const { return side * std::sqrt(static_cast<double>(dim)); }
    SmallVec center() const {
        SmallVec c(dim);
        for (int k = 0; k < dim; ++k) c[k] = lower[k] + 0.5 * side;
        return c;
    }
    bool contains(std::span<const double> x) const {
        for (int k = 0; k < dim; ++k)
            if (x[k] < lower[k] || x[k] > lower[k] + side) return false;
        return true;
    }
    bool contains(const Cube& q, double tol = 0.0) const {
        for (int k = 0; k < dim; ++k)
            if (q.lower[k] < lower[k] - tol || q.lower[k] + q.side > lower[k] + side + tol) return false;
        return true;
    }
    /// Open cubes intersect.
    bool overlaps(const Cube& q) const {
        for (int k = 0; k < dim; ++k) {
            const double lo = std::max(lower[k], q.lower[k]);
            const double hi = std::min(lower[k] + side, q.lower[k] + q.side);
            if (hi <= lo) return false;
        }
        return true;
    }
    /// Closed cubes intersect.
    bool closures_meet(const Cube& q) const {
        for (int k = 0; k < dim; ++k) {
            const double lo = std::max(lower[k], q.lower[k]);
            const double hi = std::min(lower[k] + side, q.lower[k] + q.side);
            if (hi < lo) return false;
        }
        return true;
    }
    CubeDomain domain(int resolution) const {
        return CubeDomain::from_corner(std::span<const double>(lower.data(), dim), side, resolution);
    }
    /// Distance from x to the complement of the cube (0 if outside).
    double inner_distance(std::span<const double> x) const {
        double d = kInf;
        for (int k = 0; k < dim; ++k) d = std::min({d, x[k] - lower[k], lower[k] + side - x[k]});
        return std::max(d, 0.0);
    }
};

/// G: open cubes of the ambient cube -> ]-inf, +inf]. Optionally memoized
/// (thread-safe: shared reads, exclusive insertion).
class CubeSetFunction {
public:
    using Fn = std::function<double(const Cube&)>;

    CubeSetFunction(Fn fn, Cube ambient, bool memoize = false)
        : fn_(std::make_shared<Fn>(std::move(fn))), ambient_(ambient) {
        if (memoize) cache_ = std::make_shared<Cache>();
    }

    double operator()(const Cube& q) const {
        if (!cache_) return (*fn_)(q);
        const Key key = make_key(q);
        {
            std::shared_lock lock(cache_->mutex);
            auto it = cache_->map.find(key);
            if (it != cache_->map.end()) return it->second;
        }
        const double v = (*fn_)(q);
        std::unique_lock lock(cache_->mutex);
        return cache_->map.emplace(key, v).first->second;
    }

    const Cube& ambient() const { return ambient_; }
    std::size_t cache_size() const {
        if (!cache_) return 0;
        std::shared_lock lock(cache_->mutex);
        return cache_->map.size();
    }

private:
    using Key = std::array<double, kMaxDim + 1>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = 0xcbf29ce484222325ull;
            for (double v : k) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, sizeof bits);
                h = (h ^ bits) * 0x100000001b3ull;
            }
            return h;
        }
    };
    struct Cache {
        std::shared_mutex mutex;
        std::unordered_map<Key, double, KeyHash> map;
    };
    static Key make_key(const Cube& q) {
        Key k{};
        for (int i = 0; i < q.dim; ++i) k[i] = q.lower[i];
        k[kMaxDim] = q.side;
        return k;
    }

    std::shared_ptr<const Fn> fn_;
    Cube ambient_;
    std::shared_ptr<Cache> cache_;
};

/// Q -> integral of f over Q by tensor Gauss-Legendre (`points` per axis).
inline CubeSetFunction density_set_function(PointFn f, Cube ambient, int points = 4) {
    require(points >= 1 && points <= 8, "density_set_function: points per axis must be in [1,8]");
    // Gauss-Legendre nodes/weights on [0,1]
    std::vector<double> xs(points), ws(points);
    for (int i = 0; i < points; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (points + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= points; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (points == 1) { p1 = x; p0 = 1.0; }
            const double dp = points * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= points; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        if (points == 1) { p1 = x; p0 = 1.0; }
        const double dp = points * (x * p1 - p0) / (x * x - 1.0);
        xs[i] = 0.5 * (1.0 - x);
        ws[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    if (points == 1) {
        xs = {0.5};
        ws = {1.0};
    }
    return CubeSetFunction(
        [f = std::move(f), xs, ws](const Cube& q) {
            const int d = q.dim;
            const int n = static_cast<int>(xs.size());
            int total = 1;
            for (int k = 0; k < d; ++k) total *= n;
            double s = 0.0;
            SmallVec y(d);
            for (int i = 0; i < total; ++i) {
                int rest = i;
                double w = 1.0;
                for (int k = 0; k < d; ++k) {
                    const int j = rest % n;
                    rest /= n;
                    y[k] = q.lower[k] + q.side * xs[j];
                    w *= ws[j];
                }
                s += w * f(y.span());
            }
            return s * q.volume();
        },
        ambient);
}

// ---------------------------------------------------------------------------
// Derivatives

struct DerivativeEstimate {
    std::vector<double> x;
    double lower = kInf;                 // estimate of the lower derivative
    double upper = -kInf;                // estimate of the upper derivative
    std::vector<double> rho_schedule;    // diameter bounds, decreasing
    std::vector<double> raw_inf, raw_sup;  // per-rho sampled inf/sup of G(Q)/lambda(Q)
    std::vector<double> inf_values, sup_values;  // monotone-corrected
    std::size_t cube_samples_per_rho = 0;
    bool centered_only = false;
};

/// Samples, per diameter bound rho, the centred cube of diameter rho and
/// `samples` random cubes containing x with diameter <= rho (side uniform in
/// (0, rho/sqrt d], position uniform among cubes containing x). The
/// corrected inf at stage k is the minimum over stages >= k, since finer
/// candidates are admissible at coarser rho; it is non-decreasing as rho falls.
inline DerivativeEstimate derivative_estimate(const CubeSetFunction& G, std::span<const double> x,
                                              const std::vector<double>& schedule, std::size_t samples,
                                              std::uint64_t seed, bool centered_only = false) {
    const Cube& O = G.ambient();
    require(static_cast<int>(x.size()) == O.dim, "derivative: point dimension does not match the set function");
    require(!schedule.empty(), "derivative: rho schedule must be nonempty");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        require(schedule[i] > 0.0, "derivative: rho values must be > 0");
        if (i > 0) require(schedule[i] < schedule[i - 1], "derivative: rho schedule must be strictly decreasing");
    }
    require(O.contains(x) && O.inner_distance(x) >= schedule.front(),
            "derivative: x must be interior to O with margin >= max rho");

    DerivativeEstimate est;
    est.x.assign(x.begin(), x.end());
    est.rho_schedule = schedule;
    est.cube_samples_per_rho = centered_only ? 0 : samples;
    est.centered_only = centered_only;
    const int d = O.dim;
    const double sqrtd = std::sqrt(static_cast<double>(d));

    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        const double smax = schedule[stage] / sqrtd;
        double lo = kInf, hi = -kInf;
        auto visit = [&](const Cube& q) {
            const double g = G(q);
            const double r = g / q.volume();
            if (std::isnan(r)) throw SolverError("derivative: set function returned NaN");
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        };
        visit(Cube::centered(x, smax));
        if (!centered_only) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(stage), 0xd371u};
            std::mt19937_64 rng(seq);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t s = 0; s < samples; ++s) {
                Cube q;
                q.dim = d;
                q.side = smax * (1.0 - unit(rng));  // in (0, smax]
                for (int k = 0; k < d; ++k) q.lower[k] = x[k] - q.side * (1.0 - unit(rng));
                visit(q);
            }
        }
        est.raw_inf.push_back(lo);
        est.raw_sup.push_back(hi);
    }
    const std::size_t n = schedule.size();
    est.inf_values.resize(n);
    est.sup_values.resize(n);
    double run_lo = kInf, run_hi = -kInf;
    for (std::size_t i = n; i-- > 0;) {
        run_lo = std::min(run_lo, est.raw_inf[i]);
        run_hi = std::max(run_hi, est.raw_sup[i]);
        est.inf_values[i] = run_lo;
        est.sup_values[i] = run_hi;
    }
    est.lower = est.inf_values.back();
    est.upper = est.sup_values.back();
    return est;
}

inline DerivativeEstimate lower_derivative(const CubeSetFunction& G, std::span<const double> x,
                                           const std::vector<double>& schedule, std::size_t samples,
                                           std::uint64_t seed) {
    return derivative_estimate(G, x, schedule, samples, seed, false);
}

// ---------------------------------------------------------------------------
// Dyadic packings and the Vitali envelope

struct DyadicPacking {
    Cube ambient;
    double fineness = kInf;
    double shrink = 1.0;             // each dyadic cube is scaled by this factor about its centre
    std::vector<int> levels;
    std::vector<Cube> cubes;
    std::vector<double> values;      // G on each cube
    std::vector<double> bounds;      // certificate bound (h lambda(Q)) for sublevel covers; empty otherwise
    double uncovered_volume = 0.0;

    std::size_t size() const { return cubes.size(); }
    double covered_volume() const {
        double s = 0.0;
        for (const auto& q : cubes) s += q.volume();
        return s;
    }
};

namespace detail {

/// Dyadic cube of the ambient cube at (level, integer index).
inline Cube dyadic_cube(const Cube& O, int level, const std::array<std::int64_t, kMaxDim>& idx) {
    Cube q;
    q.dim = O.dim;
    q.side = O.side / static_cast<double>(std::int64_t{1} << level);
    for (int k = 0; k < O.dim; ++k) q.lower[k] = O.lower[k] + q.side * static_cast<double>(idx[k]);
    return q;
}

inline Cube shrunk(const Cube& q, double s) {
    if (s == 1.0) return q;
    Cube r = q;
    r.side = q.side * s;
    for (int k = 0; k < q.dim; ++k) r.lower[k] = q.lower[k] + 0.5 * (q.side - r.side);
    return r;
}

inline double shrink_factor(const Cube& O, double slack) {
    require(slack >= 0.0 && slack < O.volume(), "envelope: slack must be in [0, lambda(O))");
    return std::pow(1.0 - slack / O.volume(), 1.0 / O.dim);
}

struct EnvelopeNode {
    double value;
    std::vector<std::pair<int, std::array<std::int64_t, kMaxDim>>> kept;
};

}  // namespace detail

struct EnvelopeResult {
    double value = kInf;
    DyadicPacking packing;
    std::size_t evaluations = 0;
};

/// Greedy keep-or-split over dyadic cubes of O: cubes with diameter >= fineness
/// are always split; below that each cube is kept or replaced by its children,
/// whichever gives the smaller sum (ties keep the parent), down to max_depth.
/// Each kept cube is shrunk about its centre so the closures are disjoint and
/// the uncovered volume equals `slack` (slack 0 keeps exact dyadic cubes, whose
/// open interiors are disjoint). `allow_negative` enables signed runs.
inline EnvelopeResult dyadic_envelope(const CubeSetFunction& G, double fineness, int max_depth, double slack,
                                      bool allow_negative) {
    const Cube& O = G.ambient();
    require(fineness > 0.0, "envelope: fineness must be > 0");
    require(max_depth >= 0 && max_depth <= 24, "envelope: max_depth must be in [0, 24]");
    const double s = detail::shrink_factor(O, slack);
    int forced = 0;
    while (O.diameter() / static_cast<double>(std::int64_t{1} << forced) >= fineness) ++forced;
    require(forced <= max_depth, "envelope: fineness requires more dyadic levels than max_depth allows");

    EnvelopeResult res;
    res.packing.ambient = O;
    res.packing.fineness = fineness;
    res.packing.shrink = s;
    const int d = O.dim;
    const int nchild = 1 << d;

    // Depth-first recursion returning (best sum) and appending kept cubes.
    struct Item {
        int level;
        std::array<std::int64_t, kMaxDim> idx;
    };
    std::vector<Item> kept;
    std::function<double(int, const std::array<std::int64_t, kMaxDim>&, std::vector<Item>&)> best;
    best = [&](int level, const std::array<std::int64_t, kMaxDim>& idx, std::vector<Item>& out) -> double {
        const Cube q = detail::shrunk(detail::dyadic_cube(O, level, idx), s);
        const bool must_split = level < forced;
        double self = kInf;
        if (!must_split) {
            self = G(q);
            ++res.evaluations;
            if (std::isnan(self) || self == -kInf) throw SolverError("envelope: set function returned NaN or -inf");
            if (!allow_negative && self < 0.0) throw ValidationError("envelope: H must be nonnegative on every cube");
            if (level == max_depth) {
                out.push_back({level, idx});
                return self;
            }
        }
        std::vector<Item> children;
        double sum = 0.0;
        for (int c = 0; c < nchild; ++c) {
            std::array<std::int64_t, kMaxDim> ci{};
            for (int k = 0; k < d; ++k) ci[k] = 2 * idx[k] + ((c >> k) & 1);
            sum += best(level + 1, ci, children);
        }
        const double tie = 1e-12 * (std::abs(self) + std::abs(sum));
        if (!must_split && !(sum < self - tie)) {
            out.push_back({level, idx});
            return self;
        }
        out.insert(out.end(), children.begin(), children.end());
        return sum;
    };
    // Beyond the forced depth, a child sum is only needed when the cube itself
    // could be beaten; the recursion above always explores to max_depth.
    res.value = best(0, {}, kept);
    for (const auto& it : kept) {
        const Cube q = detail::shrunk(detail::dyadic_cube(O, it.level, it.idx), s);
        res.packing.levels.push_back(it.level);
        res.packing.cubes.push_back(q);
    }
    res.packing.values.reserve(kept.size());
    double recomputed = 0.0;
    for (const auto& q : res.packing.cubes) {
        const double v = G(q);
        res.packing.values.push_back(v);
        recomputed += v;
    }
    res.value = recomputed;
    res.packing.uncovered_volume = std::max(0.0, O.volume() - res.packing.covered_volume());
    return res;
}

/// Upper bound on the fineness-stage Vitali infimum of a nonnegative H,
/// restricted to dyadic packings.
inline EnvelopeResult vitali_envelope(const CubeSetFunction& H, double fineness, double slack = 0.0,
                                      int max_depth = -1) {
    const Cube& O = H.ambient();
    int forced = 0;
    while (O.diameter() / static_cast<double>(std::int64_t{1} << forced) >= fineness) ++forced;
    return dyadic_envelope(H, fineness, max_depth < 0 ? forced : max_depth, slack, false);
}

/// Same greedy machinery for signed set functions.
inline EnvelopeResult signed_envelope(const CubeSetFunction& G, double fineness, double slack = 0.0,
                                      int max_depth = -1) {
    const Cube& O = G.ambient();
    int forced = 0;
    while (O.diameter() / static_cast<double>(std::int64_t{1} << forced) >= fineness) ++forced;
    return dyadic_envelope(G, fineness, max_depth < 0 ? forced : max_depth, slack, true);
}

/// Envelope values for a decreasing list of fineness values.
inline std::vector<double> envelope_stages(const CubeSetFunction& H, const std::vector<double>& fineness,
                                           double slack = 0.0) {
    std::vector<double> out;
    for (double e : fineness) out.push_back(vitali_envelope(H, e, slack).value);
    return out;
}

/// Structural check: pairwise disjoint open cubes (closures too when
/// shrink < 1), inside the ambient cube, all with diameter < fineness.
inline bool validate_packing(const DyadicPacking& P) {
    const double tol = 1e-12 * P.ambient.side;
    for (const auto& q : P.cubes) {
        if (!P.ambient.contains(q, tol)) return false;
        if (!(q.diameter() < P.fineness)) return false;
    }
    const bool strict = P.shrink < 1.0;
    if (!P.levels.empty() && P.levels.size() == P.cubes.size()) {
        // dyadic: no cube may be an ancestor of another (or a duplicate)
        std::set<std::pair<int, std::array<std::int64_t, kMaxDim>>> seen;
        std::vector<std::pair<int, std::array<std::int64_t, kMaxDim>>> keys;
        for (std::size_t i = 0; i < P.cubes.size(); ++i) {
            const int lv = P.levels[i];
            const double side = P.ambient.side / static_cast<double>(std::int64_t{1} << lv);
            std::array<std::int64_t, kMaxDim> idx{};
            const auto c = P.cubes[i].center();
            for (int k = 0; k < P.ambient.dim; ++k)
                idx[k] = static_cast<std::int64_t>(std::floor((c[k] - P.ambient.lower[k]) / side));
            if (!seen.emplace(lv, idx).second) return false;
            keys.emplace_back(lv, idx);
        }
        for (const auto& [lv, idx] : keys) {
            auto a = idx;
            for (int l = lv - 1; l >= 0; --l) {
                for (int k = 0; k < P.ambient.dim; ++k) a[k] /= 2;
                if (seen.count({l, a})) return false;
            }
        }
        if (strict)
            for (const auto& q : P.cubes)
                if (q.side >= P.ambient.side) return false;
        return true;
    }
    for (std::size_t i = 0; i < P.cubes.size(); ++i)
        for (std::size_t j = i + 1; j < P.cubes.size(); ++j) {
            if (P.cubes[i].overlaps(P.cubes[j])) return false;
            if (strict && P.cubes[i].closures_meet(P.cubes[j])) return false;
        }
    return true;
}

/// CSV: level, corner coordinates, side, G value, certificate bound.
inline void write_packing_csv(std::ostream& os, const DyadicPacking& P) {
    os << "level";
    for (int k = 0; k < P.ambient.dim; ++k) os << ",corner" << k;
    os << ",side,value,bound\n";
    char buf[64];
    for (std::size_t i = 0; i < P.cubes.size(); ++i) {
        os << P.levels[i];
        for (int k = 0; k < P.ambient.dim; ++k) {
            std::snprintf(buf, sizeof buf, ",%.17g", P.cubes[i].lower[k]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g", P.cubes[i].side, P.values[i]);
        os << buf;
        if (i < P.bounds.size()) std::snprintf(buf, sizeof buf, ",%.17g\n", P.bounds[i]);
        else std::snprintf(buf, sizeof buf, ",\n");
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Sublevel covers

struct SublevelCover {
    DyadicPacking packing;          // bounds[i] = h lambda(Q_i) > values[i]
    std::size_t eligible_samples = 0;  // samples whose lower-derivative estimate is < h
    std::size_t covered_samples = 0;
    double covered_fraction = 0.0;
    std::vector<double> sample_lower;  // derivative estimate per sample point
};

struct SublevelOptions {
    int max_depth = 12;
    std::vector<double> rho_schedule;  // for the derivative screen; empty: screen by G itself
    std::size_t derivative_samples = 16;
    std::uint64_t seed = 0;
};

/// Disjoint dyadic cubes of diameter < eta with G(Q) < h lambda(Q), found by a
/// fine-cover search around the sample points whose sampled lower derivative
/// is < h. For each such point, dyadic cubes containing it are tried from the
/// coarsest admissible level downwards; the first certified cube disjoint from
/// those already selected is kept. With no samples given, the centres of the
/// starting-level dyadic cubes are used.
inline SublevelCover sublevel_cover(const CubeSetFunction& G, double h, double eta,
                                    std::vector<std::vector<double>> samples = {}, const SublevelOptions& opt = {}) {
    require(eta > 0.0, "sublevel_cover: eta must be > 0");
    const Cube& O = G.ambient();
    const int d = O.dim;
    int start = 0;
    while (O.diameter() / static_cast<double>(std::int64_t{1} << start) >= eta) ++start;
    require(start <= opt.max_depth, "sublevel_cover: eta requires more dyadic levels than max_depth");

    if (samples.empty()) {
        const std::int64_t n = std::int64_t{1} << start;
        std::int64_t total = 1;
        for (int k = 0; k < d; ++k) total *= n;
        for (std::int64_t i = 0; i < total; ++i) {
            std::array<std::int64_t, kMaxDim> idx{};
            std::int64_t rest = i;
            for (int k = 0; k < d; ++k) {
                idx[k] = rest % n;
                rest /= n;
            }
            const auto c = detail::dyadic_cube(O, start, idx).center();
            samples.emplace_back(c.span().begin(), c.span().end());
        }
    }

    SublevelCover out;
    out.packing.ambient = O;
    out.packing.fineness = eta;
    using Key = std::pair<int, std::array<std::int64_t, kMaxDim>>;
    std::set<Key> selected, blocked;  // blocked: strict ancestors of selected cubes

    auto index_of = [&](std::span<const double> x, int level) {
        std::array<std::int64_t, kMaxDim> idx{};
        const std::int64_t n = std::int64_t{1} << level;
        const double side = O.side / static_cast<double>(n);
        for (int k = 0; k < d; ++k)
            idx[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x[k] - O.lower[k]) / side)), 0, n - 1);
        return idx;
    };

    for (std::size_t si = 0; si < samples.size(); ++si) {
        const auto& x = samples[si];
        require(static_cast<int>(x.size()) == d && O.contains(x), "sublevel_cover: sample outside O");
        double screen;
        if (!opt.rho_schedule.empty()) {
            screen = lower_derivative(G, x, opt.rho_schedule, opt.derivative_samples, opt.seed + si).lower;
        } else {
            const Cube q = detail::dyadic_cube(O, opt.max_depth, index_of(x, opt.max_depth));
            screen = G(q) / q.volume();
        }
        out.sample_lower.push_back(screen);
        if (!(screen < h)) continue;
        ++out.eligible_samples;
        bool covered = false;
        for (int level = start; level <= opt.max_depth && !covered; ++level) {
            const auto idx = index_of(x, level);
            const Key key{level, idx};
            if (selected.count(key)) {
                covered = true;
                break;
            }
            // ancestor selected?
            bool anc = false;
            auto a = idx;
            for (int l = level - 1; l >= start; --l) {
                for (int k = 0; k < d; ++k) a[k] /= 2;
                if (selected.count({l, a})) anc = true;
            }
            if (anc) {
                covered = true;
                break;
            }
            if (blocked.count(key)) continue;  // a descendant is selected: go finer
            const Cube q = detail::dyadic_cube(O, level, idx);
            const double g = G(q);
            if (g < h * q.volume()) {
                selected.insert(key);
                auto b = idx;
                for (int l = level - 1; l >= 0; --l) {
                    for (int k = 0; k < d; ++k) b[k] /= 2;
                    blocked.insert({l, b});
                }
                out.packing.levels.push_back(level);
                out.packing.cubes.push_back(q);
                out.packing.values.push_back(g);
                out.packing.bounds.push_back(h * q.volume());
                covered = true;
            }
        }
        if (covered) ++out.covered_samples;
    }
    out.covered_fraction =
        out.eligible_samples ? static_cast<double>(out.covered_samples) / static_cast<double>(out.eligible_samples) : 1.0;
    out.packing.uncovered_volume = std::max(0.0, O.volume() - out.packing.covered_volume());
    return out;
}

// ---------------------------------------------------------------------------
// Sign checks for signed set functions

struct SignCheck {
    double min_lower = kInf;   // over sampled lower-derivative estimates
    double max_lower = -kInf;
    double envelope = 0.0;
    double slack_bound = 0.0;  // slack * sup |G / lambda| over the packing
    bool nonpositive_premise = false;
    bool nonnegative_premise = false;
    bool pass = true;
};

/// If every sampled lower derivative is <= 0 the signed envelope must be
/// <= slack_bound; if every one is >= 0 it must be >= -slack_bound. With
/// neither premise the envelope is only reported.
inline SignCheck sign_check(const CubeSetFunction& G, const std::vector<std::vector<double>>& points,
                            const std::vector<double>& rho_schedule, std::size_t samples, std::uint64_t seed,
                            double fineness, double slack, int max_depth = -1) {
    SignCheck sc;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double lo = lower_derivative(G, points[i], rho_schedule, samples, seed + i).lower;
        sc.min_lower = std::min(sc.min_lower, lo);
        sc.max_lower = std::max(sc.max_lower, lo);
    }
    const auto env = signed_envelope(G, fineness, 0.0, max_depth);
    sc.envelope = env.value;
    double sup_ratio = 0.0;
    for (std::size_t i = 0; i < env.packing.size(); ++i)
        sup_ratio = std::max(sup_ratio, std::abs(env.packing.values[i] / env.packing.cubes[i].volume()));
    sc.slack_bound = slack * std::max(sup_ratio, 1.0);
    sc.nonpositive_premise = sc.max_lower <= 0.0;
    sc.nonnegative_premise = sc.min_lower >= 0.0;
    if (sc.nonpositive_premise && sc.envelope > sc.slack_bound) sc.pass = false;
    if (sc.nonnegative_premise && sc.envelope < -sc.slack_bound) sc.pass = false;
    return sc;
}

}  // namespace varhom
