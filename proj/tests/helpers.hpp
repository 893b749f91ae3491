#pragma once

#include <map>
#include <string>
#include <vector>

#include "varhom/integrand.hpp"

namespace testing_support {

inline varhom::ParamRecord params(std::map<std::string, double> s = {},
                                  std::map<std::string, std::vector<double>> t = {}) {
    return varhom::ParamRecord{std::move(s), std::move(t)};
}

inline varhom::Integrand layered(std::vector<double> a = {1.0, 4.0}) {
    return varhom::make_builtin("quadratic_coeff_1d", params({}, {{"a", std::move(a)}}));
}

inline double eval1(const varhom::Integrand& L, double x, double xi) {
    const double xs[1] = {x}, v[1] = {0.0}, g[1] = {xi};
    return L(xs, v, g);
}

/// (int_0^1 1/a)^-1 for a piecewise-constant table on equal cells.
inline double harmonic_mean(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += 1.0 / v;
    return static_cast<double>(a.size()) / s;
}

inline double arithmetic_mean(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v;
    return s / static_cast<double>(a.size());
}

}  // namespace testing_support
