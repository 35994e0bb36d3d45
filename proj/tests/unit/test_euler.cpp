#include <gtest/gtest.h>

#include <cmath>

#include "mkit/euler.hpp"

using namespace mkit;

TEST(Euler, ExpressionMatchesDirectScheme) {
    DiffusionModel m;
    m.drift = -0.5 * Expr::var(0);
    m.diffusion = 0.4 * cos(Expr::var(0)) + 0.6;
    m.x0 = 0.3;
    const EulerScheme e(m, 8);
    const Expr x = euler_expr(m, 8);
    RandomStream rng(1);
    for (int k = 0; k < 20; ++k) {
        const auto dw = e.noise().sample(rng);
        EXPECT_NEAR(evaluate(x, dw), e.value(dw), 1e-13);
    }
}

TEST(Euler, OuLawIsExact) {
    DiffusionModel m;
    m.drift = -Expr::var(0);
    m.x0 = 0.5;
    const std::size_t n = 10;
    const EulerScheme e(m, n);
    const auto [mean, var] = ou_euler_law(1.0, 1.0, 0.5, 1.0, n);
    EXPECT_NEAR(mean, 0.5 * std::pow(0.9, 10), 1e-15);
    const auto r = mc_moments(McSettings{50000, 2, 1}, 1, 2, [&](RandomStream& rng, std::span<double> out) {
        out[0] = e.value(e.noise().sample(rng));
        out[1] = (out[0] - mean) * (out[0] - mean);
    });
    EXPECT_NEAR(r.mean_over_all(0), mean, 4 * r.stderr_over_all(0));
    EXPECT_NEAR(r.mean_over_all(1), var, 4 * r.stderr_over_all(1));
}

TEST(Euler, MalliavinDensityOfOuScheme) {
    DiffusionModel m;
    m.drift = -Expr::var(0);
    m.x0 = 0.5;
    const std::size_t n = 8;
    const DensityProblem prob{euler_noise(m, n), FunctionalSet({euler_expr(m, n)}), {}};
    const auto [mean, var] = ou_euler_law(1.0, 1.0, 0.5, 1.0, n);
    for (double y : {-0.5, 0.2, 1.0}) {
        const auto e = density_point(prob, {y}, {}, McSettings{40000, 9, 1});
        EXPECT_NEAR(e.value, normal_pdf(y, mean, var), 4 * e.std_error) << y;
    }
}

TEST(Euler, ConstantCoefficientsGiveZeroDistance) {
    DiffusionModel m;
    m.drift = Expr(0.3);
    m.diffusion = Expr(0.8);
    EulerStudySettings st;
    st.steps = {2, 8};
    st.density_samples = 4000;
    st.hist_samples = 20000;
    st.sobolev_samples = 0;
    st.profile_samples = 0;
    const EulerStudy s = euler_tv_experiment(m, st);
    // both schemes are exactly N(0.3, 0.64)
    EXPECT_LT(s.rows[0].tv_hist.value, 0.04);
    EXPECT_LT(s.rows[0].tv_density->value, 0.02 + 2 * s.rows[0].tv_density->half_width);
    EXPECT_EQ(s.rows[1].tv_hist.value, 0.0);
}

TEST(Euler, GeometricBrownianTvDecreases) {
    DiffusionModel m;
    m.diffusion = 0.5 * Expr::var(0);
    m.x0 = 1.0;
    EulerStudySettings st;
    st.steps = {2, 4, 8, 32};
    st.density_samples = 4000;
    st.hist_samples = 40000;
    st.sobolev_samples = 50;
    st.sobolev_max_steps = 8;
    st.profile_samples = 1000;
    const EulerStudy s = euler_tv_experiment(m, st);
    EXPECT_LT(s.spearman_hist, 0.0);
    EXPECT_LT(s.spearman_density, 0.0);
    EXPECT_TRUE(s.rows[2].sobolev.has_value());
    EXPECT_FALSE(s.rows[3].sobolev.has_value());
    ASSERT_TRUE(s.profile.has_value());
}
