#include <gtest/gtest.h>

#include <cmath>

#include "mkit/functional.hpp"

using namespace mkit;

TEST(Functional, ConstantWeightTensors) {
    // pi = 0.5 on both coordinates; F = V0^2 V1
    const NoiseSpec s = iid_spec(2, {GaussianLaw{}, ConstantWeight{0.5}});
    const Expr f = Expr::var(0) * Expr::var(0) * Expr::var(1);
    const double v[2] = {1.5, -0.4};
    const Jet j = eval_jet(f, s, v, 3);
    EXPECT_NEAR(j.value(), 2.25 * -0.4, 1e-14);
    const std::size_t a0[1] = {0}, a01[2] = {1, 0}, a001[3] = {0, 0, 1}, a11[2] = {1, 1};
    EXPECT_NEAR(j.entry(a0), 0.5 * 2 * 1.5 * -0.4, 1e-14);
    EXPECT_NEAR(j.entry(a01), 0.25 * 2 * 1.5, 1e-14);
    EXPECT_NEAR(j.entry(a001), 0.125 * 2, 1e-14);
    EXPECT_EQ(j.entry(a11), 0.0);
    const double g0 = 0.5 * 2 * 1.5 * -0.4, g1 = 0.5 * 2.25;
    EXPECT_NEAR(j.tensor_norm(1), std::hypot(g0, g1), 1e-14);
    // |D^2 F|^2 over ordered pairs: entries (0,0) and (0,1),(1,0)
    const double h00 = 0.25 * 2 * -0.4, h01 = 0.25 * 3.0;
    EXPECT_NEAR(j.tensor_norm(2), std::sqrt(h00 * h00 + 2 * h01 * h01), 1e-14);
}

TEST(Functional, VariableWeightMatchesNestedDerivative) {
    // pi(v) = cutoff around 0 with inner 0.2, outer 1.5; D_0 D_0 F = pi (pi f')'
    const NoiseSpec s({{GaussianLaw{}, SmoothCutoffWeight{0.0, 0.2, 1.5}}});
    const Expr f = sin(Expr::var(0) * 2.0);
    const double x = 0.9;
    const double v[1] = {x};
    const Jet j = eval_jet(f, s, v, 2);
    const Series p = s.weight_series(0, x, 2);
    const double fp = 2 * std::cos(2 * x), fpp = -4 * std::sin(2 * x);
    const std::size_t a0[1] = {0}, a00[2] = {0, 0};
    EXPECT_NEAR(j.entry(a0), p[0] * fp, 1e-14);
    EXPECT_NEAR(j.entry(a00), p[0] * (p[1] * fp + p[0] * fpp), 1e-13);
}

TEST(Functional, VectorJetSharesFrameAndPathNorms) {
    const NoiseSpec s = standard_gaussian_spec(3);
    const std::vector<Expr> fs{Expr::var(0) + Expr::var(2), Expr::var(1) * Expr::var(1)};
    const double v[3] = {0.1, 0.2, 0.3};
    const auto jets = vector_jet(fs, s, v, 2);
    ASSERT_EQ(jets.size(), 2u);
    EXPECT_EQ(jets[0].frame(), jets[1].frame());
    const PathNorms pn = path_norms(jets[1], 2);
    EXPECT_NEAR(pn.tensor_norms[1], 0.4, 1e-15);
    EXPECT_NEAR(pn.tensor_norms[2], 2.0, 1e-15);
    EXPECT_NEAR(pn.sobolev, 0.04 + 0.4 + 2.0, 1e-15);
    const std::size_t a[3] = {0, 0, 0};
    EXPECT_THROW((void)jets[0].entry(a), ConfigurationError);
}

TEST(Functional, InactiveCoordinatesHaveZeroDerivative) {
    const NoiseSpec s = standard_gaussian_spec(4);
    const double v[4] = {1, 2, 3, 4};
    const Jet j = eval_jet(Expr::var(3) * 2.0, s, v, 1);
    const std::size_t a[1] = {1};
    EXPECT_EQ(j.entry(a), 0.0);
    EXPECT_EQ(j.frame()->nvars(), 1u);
}
