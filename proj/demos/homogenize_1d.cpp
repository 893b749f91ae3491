// Homogenized density of a two-phase layered medium in 1-D: the cell value
// S_xi(nY)/n approaches the harmonic mean of the coefficient times xi^2.

#include <cstdio>

#include "varhom/homogenize.hpp"

int main() {
    using namespace varhom;
    const auto L = make_builtin("quadratic_coeff_1d", ParamRecord{{}, {{"a", {1.0, 4.0}}}});
    PeriodicOptions opt;
    opt.n_max = 4;
    opt.resolution = 129;
    for (double xi : {0.5, 1.0, 2.0}) {
        const std::vector<double> s{xi};
        const auto e = estimate_Lhom_periodic(L, s, opt);
        std::printf("xi = %4.1f  estimate = %.10f  harmonic mean = %.10f  (n = %d)\n", xi, e.estimate,
                    1.6 * xi * xi, e.argmin_n);
    }
}
