// Density of F = V0 + V1^2 / 4 on a grid, against a histogram of the same law.

#include <cstdio>

#include "mkit/density.hpp"
#include "mkit/stats.hpp"

int main() {
    using namespace mkit;
    const Expr v0 = Expr::var(0), v1 = Expr::var(1);
    const DensityProblem prob{standard_gaussian_spec(2), FunctionalSet({v0 + v1 * v1 * 0.25}), {}};
    const McSettings mc{100000, 42, default_workers()};

    std::vector<std::vector<double>> ys;
    for (double y : linear_grid(-3.0, 4.0, 15)) ys.push_back({y});
    const DensityGrid g = density_grid(prob, ys, mc);

    const auto x = mc_collect<double>(mc, 0x5a, [&](RandomStream& rng, std::size_t) {
        const auto v = prob.noise.sample(rng);
        return v[0] + v[1] * v[1] * 0.25;
    });
    const double width = 0.25;
    std::printf("%8s %12s %10s %12s\n", "y", "estimate", "stderr", "histogram");
    for (const auto& e : g.points) {
        std::size_t hits = 0;
        for (double s : x) hits += std::abs(s - e.point[0]) < 0.5 * width;
        std::printf("%8.3f %12.6f %10.6f %12.6f\n", e.point[0], e.value, e.std_error,
                    static_cast<double>(hits) / (static_cast<double>(x.size()) * width));
    }
}
