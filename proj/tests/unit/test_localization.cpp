#include <gtest/gtest.h>

#include <cmath>

#include "mkit/bumps.hpp"
#include "mkit/density.hpp"
#include "mkit/localization.hpp"

using namespace mkit;

TEST(Bumps, ShapeAndSupport) {
    EXPECT_EQ(psi_bump(1.0, 0.9), 1.0);
    EXPECT_EQ(psi_bump(1.0, -2.0), 0.0);
    EXPECT_GT(psi_bump(1.0, 1.5), 0.0);
    EXPECT_LT(psi_bump(1.0, 1.5), 1.0);
    EXPECT_EQ(phi_bump(1.0, 0.4), 0.0);
    EXPECT_EQ(phi_bump(1.0, -1.2), 1.0);
    EXPECT_GT(phi_bump(1.0, 0.75), 0.0);
    EXPECT_NEAR(psi_bump(1.0, 1.5), std::exp(1.0 - 1.0 / 0.75), 1e-15);
    EXPECT_NEAR(phi_bump(1.0, 0.75), std::exp(1.0 - 1.0 / 0.25), 1e-15);
}

TEST(Bumps, ScaleRelation) {
    for (double a : {0.3, 0.5, 2.0, 7.0})
        for (double u : linear_grid(-3.0, 3.0, 1000)) {
            ASSERT_NEAR(psi_bump(a, a * u), psi_bump(1.0, u), 1e-12);
            ASSERT_NEAR(phi_bump(a, a * u), phi_bump(1.0, u), 1e-12);
        }
}

TEST(Bumps, DerivativesVanishAtOuterGluePoints) {
    for (int k = 1; k <= 4; ++k) {
        EXPECT_LT(std::abs(psi_series(1.0, 2.0 - 1e-3, 4).derivative(k)), 1e-100);
        EXPECT_LT(std::abs(phi_series(1.0, 0.5 + 1e-3, 4).derivative(k)), 1e-100);
    }
}

TEST(Bumps, SeriesMatchFiniteDifferences) {
    const double h = 1e-5;
    for (double x : {1.2, 1.7, -1.4}) {
        const double fd = (psi_bump(1.0, x + h) - psi_bump(1.0, x - h)) / (2 * h);
        EXPECT_NEAR(psi_series(1.0, x, 1)[1], fd, 1e-7);
        EXPECT_NEAR(log_psi_series(1.0, x, 1)[1], fd / psi_bump(1.0, x), 1e-6);
    }
    for (double x : {0.6, 0.9, -0.7}) {
        const double fd = (phi_bump(1.0, x + h) - phi_bump(1.0, x - h)) / (2 * h);
        EXPECT_NEAR(phi_series(1.0, x, 1)[1], fd, 1e-7);
    }
    EXPECT_THROW((void)log_psi_series(1.0, 2.5, 1), DomainError);
    EXPECT_THROW((void)log_phi_series(1.0, 0.2, 1), DomainError);
}

TEST(Bumps, SmoothStepAndCutoff) {
    EXPECT_EQ(smooth_step(0.0), 0.0);
    EXPECT_EQ(smooth_step(1.0), 1.0);
    EXPECT_NEAR(smooth_step(0.5), 0.5, 1e-15);
    EXPECT_NEAR(smooth_step(0.3) + smooth_step(0.7), 1.0, 1e-15);
}

// sup_x psi_a |(ln psi_a)^(k)|^p a^{pk} does not depend on a.
TEST(Bumps, LogDerivativeSupremumIsScaleInvariant) {
    const std::vector<double> u = linear_grid(1.001, 1.999, 997);
    for (int k = 1; k <= 3; ++k) {
        std::vector<double> sups;
        for (double a : {0.5, 1.0, 2.0}) {
            double s = 0.0;
            for (double x : u) {
                const double d = log_psi_series(a, a * x, k).derivative(k);
                s = std::max(s, psi_bump(a, a * x) * std::pow(std::abs(d), 2) * std::pow(a, 2 * k));
            }
            sups.push_back(s);
        }
        EXPECT_NEAR(sups[0], sups[1], 1e-8 * sups[1]);
        EXPECT_NEAR(sups[2], sups[1], 1e-8 * sups[1]);
    }
}

TEST(Localization, ThetaAndLogTheta) {
    const NoiseSpec s = standard_gaussian_spec(2);
    const LocalizationSpec spec{{{Expr::var(0), BumpKind::Psi, 1.0}, {Expr::var(1), BumpKind::Phi, 1.0}}};
    const Localizer loc(spec);
    const double v[2] = {1.3, 0.8};
    const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0, 1}, 2);
    const ThetaSample t = loc.evaluate(*fr);
    EXPECT_NEAR(t.theta.value(), psi_bump(1.0, 1.3) * phi_bump(1.0, 0.8), 1e-15);
    ASSERT_TRUE(t.log_theta.has_value());
    EXPECT_NEAR(std::exp(t.log_theta->value()), t.theta.value(), 1e-15);
    EXPECT_NEAR(t.log_theta->gradient(0), log_psi_series(1.0, 1.3, 1)[1], 1e-14);
    EXPECT_NEAR(loc.value(v), t.theta.value(), 1e-15);
    const double out[2] = {2.5, 0.8};
    const FramePtr fr2 = make_frame(s, out, std::vector<std::size_t>{0, 1}, 2);
    EXPECT_FALSE(loc.evaluate(*fr2).log_theta.has_value());
}

TEST(Localization, MqpOfTrivialLocalizerIsOne) {
    const auto r = m_qp_estimate({}, standard_gaussian_spec(1), 2, 2, McSettings{100, 1, 1});
    EXPECT_EQ(r.m.value, 1.0);
    EXPECT_EQ(r.m.std_error, 0.0);
}

TEST(Localization, MqpBoundedByBoundSum) {
    const NoiseSpec s = standard_gaussian_spec(1);
    const LocalizationSpec spec{{{Expr::var(0), BumpKind::Psi, 1.0}}};
    const auto r = m_qp_estimate(spec, s, 1, 2, McSettings{20000, 1, 1});
    EXPECT_GE(r.m.value, 1.0);
    EXPECT_GT(r.theta_mass.value, 0.68);
    EXPECT_TRUE(std::isfinite(r.bound_sum.value));
    EXPECT_THROW(Localizer(LocalizationSpec{{{Expr::var(0), BumpKind::Psi, 0.0}}}), ConfigurationError);
}

// The literal bumps are not C^inf at |x| = a: psi_a'' jumps from 0 to -2/a^2
// and phi_a' jumps from 4/a to 0.
TEST(Bumps, InnerGluePointKinks) {
    for (double a : {0.5, 1.0, 2.0}) {
        EXPECT_EQ(psi_series(a, a - 1e-9, 2).derivative(2), 0.0);
        EXPECT_NEAR(psi_series(a, a + 1e-9, 2).derivative(2), -2.0 / (a * a), 1e-6);
        EXPECT_NEAR(phi_series(a, a - 1e-9, 1).derivative(1), 4.0 / a, 1e-6);
        EXPECT_EQ(phi_series(a, a + 1e-9, 1).derivative(1), 0.0);
    }
}
