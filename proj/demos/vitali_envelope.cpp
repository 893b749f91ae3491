// Dyadic Vitali envelope of Q -> integral of y1 over the unit square, and the
// lower derivative of the same set function at a few points.

#include <cstdio>

#include "varhom/setfn.hpp"

int main() {
    using namespace varhom;
    const auto H = density_set_function([](std::span<const double> y) { return y[0]; }, Cube::unit(2));
    for (double fineness : {0.5, 0.1, 0.02}) {
        const auto env = vitali_envelope(H, fineness);
        std::printf("fineness %.3f: envelope %.12f over %zu cubes\n", fineness, env.value, env.packing.size());
    }
    const std::vector<double> sched{0.25, 0.0625, 0.015625, 0.00390625};
    for (double x1 : {0.1, 0.5, 0.9}) {
        const std::vector<double> x{x1, 0.5};
        const auto d = lower_derivative(H, x, sched, 32, 1);
        std::printf("lower derivative at (%.1f, 0.5): %.6f\n", x1, d.lower);
    }
}
