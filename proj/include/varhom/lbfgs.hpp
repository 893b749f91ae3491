// Limited-memory BFGS with Armijo backtracking.
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "varhom/common.hpp"

namespace varhom {

struct LbfgsOptions {
    int max_iterations = 5000;
    int memory = 12;
    double gradient_tolerance = 1e-9;  // on grad_scale * max|g|
    double grad_scale = 1.0;
    double armijo_c1 = 1e-4;
    double backtrack = 0.5;
    int max_backtracks = 60;
    /// Stop after this many consecutive iterations with relative decrease below
    /// 1e-15 and no new smallest gradient.
    int stall_iterations = 50;
};

struct LbfgsResult {
    std::vector<double> x;
    double value = kInf;
    double grad_norm = kInf;  // grad_scale * max|g|
    int iterations = 0;
    bool converged = false;
};

/// Objective: returns f(x) and writes grad f(x). May return +inf or NaN for
/// inadmissible trial points; those are treated as rejected steps.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

inline LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x, const LbfgsOptions& opt) {
    const std::size_t n = x.size();
    LbfgsResult res;
    std::vector<double> g(n), xt(n), gt(n), dir(n);
    double fx = f(x, g);
    if (!std::isfinite(fx)) throw SolverError("non-finite energy at the initial point");

    auto gnorm = [&](const std::vector<double>& v) {
        double s = 0.0;
        for (double e : v) s = std::max(s, std::abs(e));
        return s * opt.grad_scale;
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    int stall = 0;
    int it = 0;
    double gn = gnorm(g);
    double best_gn = gn;
    for (; it < opt.max_iterations && n > 0; ++it) {
        if (gn <= opt.gradient_tolerance) break;

        // two-loop recursion
        dir = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = rho[i] * dot(S[i], dir);
            for (std::size_t j = 0; j < n; ++j) dir[j] -= alpha[i] * Y[i][j];
        }
        double gamma;
        if (!S.empty()) {
            gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
        } else {
            double gl2 = std::sqrt(dot(g, g));
            gamma = gl2 > 0.0 ? 1.0 / gl2 : 1.0;
        }
        for (auto& e : dir) e *= gamma;
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * dot(Y[i], dir);
            for (std::size_t j = 0; j < n; ++j) dir[j] += S[i][j] * (alpha[i] - beta);
        }
        for (auto& e : dir) e = -e;
        double slope = dot(g, dir);
        if (!(slope < 0.0)) {
            // not a descent direction: restart from steepest descent
            S.clear();
            Y.clear();
            rho.clear();
            const double gl2 = std::sqrt(dot(g, g));
            for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j] / gl2;
            slope = dot(g, dir);
        }

        double step = 1.0;
        double ft = kInf;
        bool accepted = false;
        for (int b = 0; b < opt.max_backtracks; ++b) {
            for (std::size_t j = 0; j < n; ++j) xt[j] = x[j] + step * dir[j];
            ft = f(xt, gt);
            if (std::isfinite(ft) && ft <= fx + opt.armijo_c1 * step * slope) {
                accepted = true;
                break;
            }
            // Near the rounding floor of f the Armijo test is unreliable; fall
            // back to approximate Wolfe conditions on the directional derivative.
            if (std::isfinite(ft) && ft <= fx + 1e-12 * std::abs(fx)) {
                double dslope = 0.0;
                for (std::size_t j = 0; j < n; ++j) dslope += gt[j] * dir[j];
                if (dslope <= -0.8 * slope && dslope >= 0.9 * slope) {
                    accepted = true;
                    break;
                }
            }
            step *= opt.backtrack;
        }
        if (!accepted) {
            if (!S.empty()) {
                // retry once from steepest descent with a fresh memory
                S.clear();
                Y.clear();
                rho.clear();
                continue;
            }
            break;
        }

        std::vector<double> s(n), y(n);
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = xt[j] - x[j];
            y[j] = gt[j] - g[j];
        }
        const double sy = dot(s, y);
        if (sy > 1e-300 * std::max(1.0, dot(y, y))) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        const double decrease = fx - ft;
        x.swap(xt);
        g.swap(gt);
        fx = ft;
        gn = gnorm(g);
        const bool flat = decrease <= 1e-15 * std::max(1.0, std::abs(fx));
        if (flat && gn >= 0.99 * best_gn) ++stall;
        else stall = 0;
        best_gn = std::min(best_gn, gn);
        if (stall >= opt.stall_iterations) {
            ++it;
            break;
        }
    }
    res.x = std::move(x);
    res.value = fx;
    res.grad_norm = n > 0 ? gn : 0.0;
    res.iterations = it;
    res.converged = res.grad_norm <= opt.gradient_tolerance;
    return res;
}

}  // namespace varhom
