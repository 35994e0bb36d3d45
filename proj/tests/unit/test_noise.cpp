#include <gtest/gtest.h>

#include <cmath>

#include "mkit/montecarlo.hpp"
#include "mkit/noise.hpp"
#include "mkit/stats.hpp"

using namespace mkit;

TEST(Noise, LogDensityGradients) {
    const NoiseSpec s({{GaussianLaw{1.0, 4.0}, ConstantWeight{}}, {ExponentialLaw{2.5}, ConstantWeight{}}});
    EXPECT_DOUBLE_EQ(s.log_density_grad(0, 3.0), -0.5);
    EXPECT_DOUBLE_EQ(s.log_density_grad(1, 0.7), -2.5);
    EXPECT_DOUBLE_EQ(s.with_flipped_log_gradient().log_density_grad(0, 3.0), 0.5);
    EXPECT_THROW((void)s.log_density_grad(1, -1.0), DomainError);
    const Series g = s.log_density_grad_series(0, 3.0, 2);
    EXPECT_DOUBLE_EQ(g[1], -0.25);
    EXPECT_DOUBLE_EQ(g[2], 0.0);
}

TEST(Noise, CutoffWeight) {
    const NoiseSpec s({{ExponentialLaw{1.0}, SmoothCutoffWeight{3.0, 1.0, 2.0}}});
    EXPECT_DOUBLE_EQ(s.weight(0, 3.5), 1.0);
    EXPECT_DOUBLE_EQ(s.weight(0, 5.5), 0.0);
    EXPECT_DOUBLE_EQ(s.weight(0, 1.0), 0.0);
    const double w = s.weight(0, 4.5);
    EXPECT_GT(w, 0.0);
    EXPECT_LT(w, 1.0);
    EXPECT_NEAR(s.weight(0, 1.5), w, 1e-15);  // symmetric about the center
    EXPECT_NEAR(s.weight_series(0, 1.5, 1)[1], -s.weight_series(0, 4.5, 1)[1], 1e-15);
}

TEST(Noise, Validation) {
    EXPECT_THROW(NoiseSpec(std::vector<NoiseComponent>{}), ConfigurationError);
    EXPECT_THROW(NoiseSpec({{GaussianLaw{0.0, -1.0}, ConstantWeight{}}}), ConfigurationError);
    EXPECT_THROW(NoiseSpec({{GaussianLaw{}, ConstantWeight{2.0}}}), ConfigurationError);
    // {pi > 0} must lie inside the support
    EXPECT_THROW(NoiseSpec({{ExponentialLaw{1.0}, SmoothCutoffWeight{1.0, 0.5, 2.0}}}), ConfigurationError);
    EXPECT_THROW((void)brownian_grid_spec(1, 20, 1000), ResourceError);
}

TEST(Noise, BrownianGrid) {
    const NoiseSpec s = brownian_grid_spec(2, 3);
    ASSERT_EQ(s.size(), 16u);
    EXPECT_DOUBLE_EQ(std::get<GaussianLaw>(s.component(5).law).variance, 0.125);
    EXPECT_DOUBLE_EQ(s.weight(5, 0.0), std::sqrt(0.125));
}

TEST(Noise, SamplingMoments) {
    const Expr v = Expr::var(0);
    // density proportional to e^{-v^2} on (-1, 2)
    const NoiseSpec s({{GaussianLaw{2.0, 0.25}, ConstantWeight{}},
                       {ExponentialLaw{4.0}, ConstantWeight{}},
                       {TruncatedSmoothLaw{-(v * v), -2.0 * v, -1.0, 2.0}, ConstantWeight{}}});
    const auto r = mc_moments(McSettings{100000, 3, 1}, 1, 3, [&](RandomStream& rng, std::span<double> out) {
        const auto x = s.sample(rng);
        for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    });
    EXPECT_NEAR(r.mean_over_all(0), 2.0, 4 * r.stderr_over_all(0));
    EXPECT_NEAR(r.mean_over_all(1), 0.25, 4 * r.stderr_over_all(1));
    // E V for the truncated law: (e^{-1} - e^{-4}) / (2 int_{-1}^{2} e^{-v^2} dv)
    const double z = 0.5 * std::sqrt(std::numbers::pi) * (std::erf(2.0) + std::erf(1.0));
    EXPECT_NEAR(r.mean_over_all(2), (std::exp(-1.0) - std::exp(-4.0)) / (2.0 * z), 4 * r.stderr_over_all(2));
}

TEST(Noise, ExternalComponentsAreNotSampled) {
    const NoiseSpec s({{ExternalLaw{Expr(0.0)}, ConstantWeight{}}});
    RandomStream r(1);
    EXPECT_THROW((void)s.sample(r), ConfigurationError);
}
