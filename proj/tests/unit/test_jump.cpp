#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "mkit/jump_sde.hpp"

using namespace mkit;

namespace {

// dX = X dt plus state-free jumps, so the tangent flow is e^t exactly.
JumpModel linear_model() {
    const Expr z = Expr::var(0);
    JumpModel m = default_jump_model();
    m.jump = {0.3 * z / (1.0 + z * z)};
    m.drift = {Expr::var(0)};
    return m;
}

// Gaussian marks and c = z: X_t is a sum of truncated Gaussian marks.
JumpModel gaussian_model() {
    JumpModel m;
    m.jump = {Expr::var(0)};
    m.drift = {Expr(0.0)};
    m.marks = {MarkFamily::Gaussian, 1.0};
    m.rate = Expr(1.0);
    m.rate_bound = 1.0;
    m.rate_lower = Expr(1.0);
    m.jump_lower = Expr(1.0);
    m.x0 = {0.0};
    return m;
}

}  // namespace

TEST(Jump, RatesAndCutoff) {
    const JumpSystem sys(default_jump_model(), 4);
    EXPECT_NEAR(sys.mu(), 10.0, 1e-12);
    EXPECT_NEAR(sys.lambda(), 20.0, 1e-12);
    EXPECT_NEAR(rate_lambda(default_jump_model(), 2), 12.0, 1e-12);
    EXPECT_EQ(sys.cutoff(2.9), 1.0);
    EXPECT_EQ(sys.cutoff(-5.1), 0.0);
    EXPECT_GT(sys.cutoff(4.0), 0.0);
    EXPECT_NEAR(sys.cutoff(4.0), sys.cutoff(-4.0), 1e-15);
    const double x[1] = {0.0};
    EXPECT_DOUBLE_EQ(sys.theta(x), 0.5);
    EXPECT_EQ(sys.jump(6.0, x)[0], 0.0);
    const JumpSystem g(gaussian_model(), 1);
    EXPECT_NEAR(g.mu(), std::erf(2.0 / std::sqrt(2.0)), 1e-12);
}

TEST(Jump, SmoothMarkLawIsNormalized) {
    const JumpSystem sys(default_jump_model(), 2);
    const double x[1] = {0.3};
    auto q = [&](double z) { return sys.qm_density(z, x); };
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double c = sys.bump_center();
    const double mass = GK::integrate(q, -3.0, 3.0, 15, 1e-12) + GK::integrate(q, c - 1.0, c + 1.0, 15, 1e-12);
    EXPECT_NEAR(mass, 1.0, 1e-8);
}

TEST(Jump, OneJumpLawsAgree) {
    const JumpSystem sys(default_jump_model(), 2);
    const double x[1] = {0.4};
    const auto s = one_jump_samples(sys, x, McSettings{20000, 3, 1});
    EXPECT_GT(ks_two_sample(s.thinning, s.smooth).p_value, 0.01);
}

TEST(Jump, FlowMatchesLinearOde) {
    const JumpSystem sys(linear_model(), 2);
    std::vector<double> x{1.3};
    sys.flow(x, 0.37);
    EXPECT_NEAR(x[0], 1.3 * std::exp(0.37), 1e-12);
    const Series s = sys.flow_series(1.3, 0.37, 3);
    EXPECT_NEAR(s[1], std::exp(0.37), 1e-12);
    EXPECT_NEAR(s[2], 0.0, 1e-12);
    EXPECT_EQ(rk4_steps(0.0), 0u);
    EXPECT_GE(rk4_steps(1e-6), 10u);
}

TEST(Jump, TangentFlowLinearOracle) {
    const JumpSystem sys(linear_model(), 2);
    RandomStream rng(8);
    for (int k = 0; k < 5; ++k) {
        const PathRecord p = sys.simulate_path_smooth(0.5, rng);
        const TangentFlow tf = sys.tangent_flow(p);
        EXPECT_NEAR(tf.Y(0, 0), std::exp(0.5), 1e-6);
        EXPECT_LT(tf.inverse_residual, 1e-12);
    }
}

TEST(Jump, TangentFlowMatchesFiniteDifference) {
    JumpModel m = default_jump_model();
    const JumpSystem sys(m, 3);
    RandomStream rng(12);
    const PathRecord p = sys.simulate_path_smooth(0.5, rng);
    ASSERT_FALSE(p.events.empty());
    // replay the marks from a perturbed start
    auto replay = [&](double x0) {
        std::vector<double> x{x0};
        double t = 0.0;
        for (const auto& e : p.events) {
            sys.flow(x, e.time - t);
            x[0] += sys.jump(e.mark, x)[0];
            t = e.time;
        }
        sys.flow(x, 0.5 - t);
        return x[0];
    };
    const double h = 1e-6;
    const double fd = (replay(h) - replay(-h)) / (2 * h);
    EXPECT_NEAR(sys.tangent_flow(p).Y(0, 0), fd, 1e-6);
    EXPECT_NEAR(replay(0.0), p.final_state[0], 1e-12);
}

TEST(Jump, PathJetValueMatchesPath) {
    const JumpSystem sys(default_jump_model(), 3);
    const NoiseSpec spec = sys.mark_spec(64);
    RandomStream rng(2);
    int checked = 0;
    for (int k = 0; k < 20; ++k) {
        const PathRecord p = sys.simulate_path_smooth(0.5, rng);
        const auto jet = sys.path_jet(p, spec, 2);
        if (!jet) continue;
        EXPECT_NEAR(jet->second.value(), p.final_state[0], 1e-9);
        ++checked;
    }
    EXPECT_GT(checked, 10);
}

TEST(Jump, ThinningProposalRate) {
    const JumpSystem sys(default_jump_model(), 2);
    RandomStream rng(6);
    MomentAccumulator n;
    for (int k = 0; k < 4000; ++k) n.add(static_cast<double>(sys.simulate_path(0.5, rng).events.size()));
    EXPECT_NEAR(n.mean(), sys.lambda() * 0.5, 4 * n.stderr_mean());
}

TEST(Jump, Validation) {
    JumpModel m = default_jump_model();
    m.drift = {};
    EXPECT_THROW(JumpSystem(m, 2), ConfigurationError);
    EXPECT_THROW(JumpSystem(default_jump_model(), 0), ConfigurationError);
    JumpModel r = default_jump_model();
    r.rate = Expr(2.0);
    EXPECT_THROW(JumpSystem(r, 2), ModelViolation);
    EXPECT_THROW((void)hypothesis_theta(default_jump_model(), 0.5, 1.0), ConfigurationError);
    EXPECT_GT(hypothesis_theta(default_jump_model(), 100.0, 3.0), 0.0);
}

TEST(Jump, SingleLevelStudyHasZeroRow) {
    JumpStudySettings st;
    st.levels = {3};
    st.paths = 500;
    st.density_paths = 0;
    st.sobolev_paths = 0;
    st.profile_paths = 0;
    const JumpStudy s = tv_convergence_experiment(default_jump_model(), st);
    ASSERT_EQ(s.rows.size(), 1u);
    EXPECT_EQ(s.rows[0].tv_hist.value, 0.0);
}

TEST(Jump, DensityTvTracksHistogramTv) {
    JumpStudySettings st;
    st.levels = {1, 3};
    st.horizon = 1.0;
    st.paths = 40000;
    st.density_paths = 4000;
    st.localization = 0.05;
    st.sobolev_paths = 0;
    st.profile_paths = 0;
    st.seed = 4;
    const JumpStudy s = tv_convergence_experiment(gaussian_model(), st);
    ASSERT_TRUE(s.rows[0].tv_density.has_value());
    const double hist = s.rows[0].tv_hist.value, dens = s.rows[0].tv_density->value;
    EXPECT_GT(hist, 0.05);
    EXPECT_NEAR(dens, hist, 0.1 + 2 * s.rows[0].tv_density->half_width);
}

TEST(Jump, DefaultStudyDecreases) {
    JumpStudySettings st;
    st.paths = 3000;
    st.density_paths = 0;
    st.sobolev_paths = 0;
    st.profile_paths = 500;
    const JumpStudy s = tv_convergence_experiment(default_jump_model(), st);
    ASSERT_EQ(s.rows.size(), 4u);
    EXPECT_LT(s.spearman, 0.0);
    ASSERT_TRUE(s.profile.has_value());
    EXPECT_EQ(s.profile->rows.size(), 16u);
}
