#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mkit/density.hpp"

using namespace mkit;

namespace {

const Expr V0 = Expr::var(0), V1 = Expr::var(1), V2 = Expr::var(2);

}  // namespace

TEST(PoissonKernel, GradientMatchesFiniteDifference) {
    for (std::size_t d : {1u, 2u, 3u}) {
        std::vector<double> x{0.7, -0.4, 0.3};
        x.resize(d);
        std::vector<double> g(d);
        poisson_kernel_grad(x, g);
        for (std::size_t i = 0; i < d; ++i) {
            auto xp = x, xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            EXPECT_NEAR(g[i], (poisson_kernel(xp) - poisson_kernel(xm)) / 2e-6, 1e-6) << d;
        }
    }
    EXPECT_NEAR(unit_sphere_area(3), 4 * std::numbers::pi, 1e-14);
}

TEST(Density, StandardGaussianValueAndDerivative) {
    const DensityProblem prob{standard_gaussian_spec(1), FunctionalSet({V0}), {}};
    const McSettings mc{100000, 3, 1};
    const auto p0 = density_point(prob, {0.0}, {}, mc);
    EXPECT_NEAR(p0.value, 0.398942, 4 * p0.std_error);
    EXPECT_LT(p0.std_error, 0.01);
    const auto d1 = density_point(prob, {1.0}, {0}, mc);
    EXPECT_NEAR(d1.value, -0.241971, 4 * d1.std_error);
    EXPECT_EQ(p0.degenerate_fraction, 0.0);
}

TEST(Density, GridAgreesWithPointEstimates) {
    const DensityProblem prob{standard_gaussian_spec(2), FunctionalSet({V0 + 0.3 * V1 * V1}), {}};
    const McSettings mc{5000, 8, 1};
    const std::vector<std::vector<double>> ys{{-1.0}, {0.2}, {1.5}};
    const auto g = density_grid(prob, ys, mc);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        const auto p = density_point(prob, ys[i], {}, mc);
        EXPECT_NEAR(g.points[i].value, p.value, 1e-12 * std::max(1.0, std::abs(p.value)));
        EXPECT_NEAR(g.points[i].std_error, p.std_error, 1e-12);
    }
}

TEST(Density, BivariateAndTrivariate) {
    const McSettings mc{100000, 21, 1};
    const DensityProblem p2{standard_gaussian_spec(2), FunctionalSet({V0, V1}), {}};
    const auto e2 = density_point(p2, {0.0, 0.0}, {}, mc);
    EXPECT_NEAR(e2.value, 1.0 / (2 * std::numbers::pi), 4 * e2.std_error);
    const DensityProblem p3{standard_gaussian_spec(3), FunctionalSet({V0, V1, V2}), {}};
    const auto e3 = density_point(p3, {0.0, 0.0, 0.0}, {}, mc);
    EXPECT_NEAR(e3.value, std::pow(2 * std::numbers::pi, -1.5), 4 * e3.std_error);
}

TEST(Density, LocalizedDensityIntegratesToThetaMass) {
    const LocalizationSpec loc{{{V1, BumpKind::Psi, 1.0}}};
    const DensityProblem prob{standard_gaussian_spec(2), FunctionalSet({V0 + 0.5 * V1}), loc};
    const auto grid = linear_grid(-5.0, 5.0, 81);
    std::vector<std::vector<double>> ys;
    for (double y : grid) ys.push_back({y});
    const auto g = density_grid(prob, ys, McSettings{40000, 2, 1});
    std::vector<double> p;
    for (const auto& e : g.points) p.push_back(e.value);
    EXPECT_NEAR(trapezoid(grid, p), g.theta_mass.value, 0.02 * g.theta_mass.value);
}

TEST(Density, RejectsBadInput) {
    const DensityProblem prob{standard_gaussian_spec(1), FunctionalSet({V0}), {}};
    EXPECT_THROW((void)density_point(prob, {0.0, 1.0}, {}, McSettings{10, 1, 1}), ConfigurationError);
    EXPECT_THROW((void)density_point(prob, {0.0}, {1}, McSettings{10, 1, 1}), ConfigurationError);
}

TEST(Regularization, ClosedFormAndSlope) {
    const NoiseSpec s = standard_gaussian_spec(1);
    const FunctionalSet f({V0});
    const auto r = regularized_expectation(s, f, cos(V0), 0.25, McSettings{100000, 5, 1});
    EXPECT_NEAR(r.difference.value, std::exp(-0.5) - std::exp(-0.625), 3 * r.difference.std_error);
    std::vector<double> ds{0.2, 0.1, 0.05}, diffs;
    for (double d : ds) diffs.push_back(regularized_expectation(s, f, cos(V0), d, McSettings{100000, 5, 1}).difference.value);
    EXPECT_GE(loglog_slope(ds, diffs), 0.4);
    EXPECT_THROW((void)regularized_expectation(s, f, cos(V0), -1.0, McSettings{10, 1, 1}), ConfigurationError);
}
