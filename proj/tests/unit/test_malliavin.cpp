#include <gtest/gtest.h>

#include <cmath>

#include "mkit/ibp.hpp"
#include "mkit/malliavin.hpp"

using namespace mkit;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

struct Case {
    const char* name;
    NoiseSpec noise;
    Expr f;
};

std::vector<Case> cases() {
    const Expr a = Expr::var(0), b = Expr::var(1), c = Expr::var(2);
    return {
        {"gaussian", standard_gaussian_spec(3), sin(a) * b + c * c * 0.5 + exp(a * 0.3)},
        {"exponential", iid_spec(3, {ExponentialLaw{1.5}, SmoothCutoffWeight{2.0, 0.5, 1.5}}), a * b + log(1.0 + c * c)},
        {"brownian", brownian_grid_spec(1, 2), tanh(a + b) * (Expr::var(3) + 1.0) + c * c},
    };
}

}  // namespace

// D phi(F) = phi'(F) DF, delta(F U) = F delta(U) - <DF, U>, L phi(F) = phi'(F) LF - phi''(F) |DF|^2.
TEST(Malliavin, CalculusRulesHoldPathwise) {
    for (const auto& cs : cases()) {
        RandomStream rng(99);
        for (int k = 0; k < 200; ++k) {
            std::vector<double> v(cs.noise.size());
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = cs.noise.sample_component(i, rng);
                // keep exponential points inside the weight support
                if (std::holds_alternative<ExponentialLaw>(cs.noise.component(i).law)) v[i] = 0.6 + 2.8 * rng.uniform();
            }
            std::vector<std::size_t> active(v.size());
            for (std::size_t i = 0; i < v.size(); ++i) active[i] = i;
            const FramePtr fr = make_frame(cs.noise, v, active, 3);
            const TaylorPoly F = Program(cs.f).run<TaylorPoly>(fr->bindings(v.size()), fr->constant(0.0)).front();
            const PolyVec dF = malliavin_derivative(*fr, F);

            const TaylorPoly phiF = sin(F);
            const PolyVec dphi = malliavin_derivative(*fr, phiF);
            for (std::size_t i = 0; i < dF.size(); ++i)
                ASSERT_LT(rel(dphi[i].value(), std::cos(F.value()) * dF[i].value()), 1e-9) << cs.name;

            PolyVec u;
            for (std::size_t i = 0; i < fr->nvars(); ++i) u.push_back(cos(fr->vars[(i + 1) % fr->nvars()]) * (1.0 + i));
            PolyVec fu;
            for (const auto& x : u) fu.push_back(F * x);
            const double lhs = divergence(*fr, fu).value();
            const double rhs = F.value() * divergence(*fr, u).value() - inner(*fr, dF, u).value();
            ASSERT_LT(rel(lhs, rhs), 1e-9) << cs.name;

            const double l_phi = ou_operator(*fr, phiF).value();
            const double l_f = ou_operator(*fr, F).value();
            const double g2 = inner(*fr, dF, dF).value();
            ASSERT_LT(rel(l_phi, std::cos(F.value()) * l_f + std::sin(F.value()) * g2), 1e-9) << cs.name;
        }
    }
}

TEST(Malliavin, OuOperatorOfGaussianCoordinates) {
    // L V = V and L V^2 = 2 V^2 - 2 for a standard Gaussian coordinate
    const NoiseSpec s = standard_gaussian_spec(1);
    const double v[1] = {0.7};
    const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0}, 2);
    EXPECT_NEAR(ou_operator(*fr, fr->vars[0]).value(), 0.7, 1e-15);
    EXPECT_NEAR(ou_operator(*fr, fr->vars[0] * fr->vars[0]).value(), 2 * 0.49 - 2, 1e-15);
}

TEST(Malliavin, CovarianceAndInverse) {
    const NoiseSpec s = standard_gaussian_spec(5);
    std::vector<Expr> fs;
    for (std::size_t r = 0; r < 4; ++r) fs.push_back(Expr::var(r) + Expr::var(r + 1) * Expr::var(r + 1) * 0.5);
    const double v[5] = {0.3, -0.2, 0.8, 1.1, -0.5};
    const auto jets = vector_jet(fs, s, v, 2);
    const auto rep = covariance(jets);
    EXPECT_FALSE(rep.degenerate);
    ASSERT_TRUE(rep.gamma.has_value());
    EXPECT_NEAR((rep.sigma * *rep.gamma - Eigen::MatrixXd::Identity(4, 4)).norm(), 0.0, 1e-12);
    // polynomial Gauss-Jordan inverse agrees with Eigen at the base point
    std::vector<PolyVec> df;
    for (const auto& j : jets) df.push_back(malliavin_derivative(*j.frame(), j.poly()));
    const auto cj = covariance_jets(*jets[0].frame(), df);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(cj.gamma[r][c].value(), (*rep.gamma)(r, c), 1e-12);
    EXPECT_NEAR(cj.det.value(), rep.det, 1e-12 * std::abs(rep.det));
}

TEST(Malliavin, DegenerateCovarianceIsFlagged) {
    const NoiseSpec s = standard_gaussian_spec(2);
    const std::vector<Expr> fs{Expr::var(0), Expr::var(0) * 2.0};
    const double v[2] = {0.1, 0.2};
    const auto rep = covariance(vector_jet(fs, s, v, 1));
    EXPECT_TRUE(rep.degenerate);
    EXPECT_FALSE(rep.gamma.has_value());
}

TEST(Malliavin, DualityHoldsInMean) {
    const NoiseSpec s = standard_gaussian_spec(2);
    const auto r = duality_selftest(s, sin(Expr::var(0)) * Expr::var(1), {Expr::var(1), cos(Expr::var(0))},
                                    McSettings{40000, 5, 1});
    EXPECT_LT(std::abs(r.z), 4.0);
}

TEST(Malliavin, SobolevNormOfLinearFunctional) {
    // F = V0 + V1: |F|_p = sqrt 2 E|N|^2 ... p = 2: ||F||_2 = sqrt 2, |DF| = sqrt 2, D^2 F = 0
    const NoiseSpec s = standard_gaussian_spec(2);
    const auto e = sobolev_norm_mc(s, FunctionalSet({Expr::var(0) + Expr::var(1)}), 2, 2, Localizer{}, McSettings{20000, 1, 1});
    EXPECT_NEAR(e.norm1.value, std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(e.lp.value, std::sqrt(2.0), 4 * e.lp.std_error);
}

TEST(Malliavin, DiagnosticsAreFinite) {
    const NoiseSpec s = standard_gaussian_spec(2);
    LocalizationSpec loc{{{Expr::var(0) * Expr::var(0) + Expr::var(1) * Expr::var(1), BumpKind::Phi, 0.5}}};
    const auto r = diagnostics(s, FunctionalSet({Expr::var(0) * Expr::var(1)}), nullptr, loc, 2, 2, McSettings{4000, 1, 1});
    EXPECT_FALSE(r.unbounded);
    EXPECT_GE(r.S.value, 1.0);
    EXPECT_GE(r.m.value, 1.0);
    EXPECT_TRUE(std::isfinite(r.U.value));
    EXPECT_THROW((void)diagnostics(s, FunctionalSet({Expr::var(0)}), nullptr, {}, 1, 2, McSettings{100, 1, 1}),
                 ConfigurationError);
}
