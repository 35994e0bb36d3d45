#include <gtest/gtest.h>

#include <cmath>

#include "mkit/ibp.hpp"

using namespace mkit;

namespace {

const Expr V0 = Expr::var(0), V1 = Expr::var(1);
const McSettings kMc{50000, 17, 1};

}  // namespace

TEST(Ibp, WeightFormsAgreePathwise) {
    const NoiseSpec s = standard_gaussian_spec(2);
    const FunctionalSet f({V0 + 0.3 * sin(V1), V1 + V0 * V0 * 0.2});
    RandomStream rng(4);
    for (int k = 0; k < 50; ++k) {
        const auto v = s.sample(rng);
        const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0, 1}, 4);
        const IbpContext ctx(fr, f.evaluate(*fr));
        ASSERT_FALSE(ctx.degenerate());
        const TaylorPoly g = cos(fr->vars[0]) + 2.0;
        for (std::size_t r = 0; r < 2; ++r)
            ASSERT_NEAR(ctx.weight(r, g).value(), ctx.weight_expanded(r, g).value(), 1e-11);
        const std::size_t beta[2] = {0, 1};
        const TaylorPoly h2 = ctx.weight(beta, g);
        EXPECT_EQ(h2.order(), 1);  // K - 1 - q
        EXPECT_TRUE(std::isfinite(h2.value()));
    }
}

TEST(Ibp, GaussianWeightsAreHermitePolynomials) {
    // F = V: H_1(F, 1) = V, H_(0,0)(F, 1) = V^2 - 1
    const NoiseSpec s = standard_gaussian_spec(1);
    const double v[1] = {0.6};
    const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0}, 4);
    const IbpContext ctx(fr, {fr->vars[0]});
    const std::size_t b1[1] = {0}, b2[2] = {0, 0};
    EXPECT_NEAR(ctx.weight(b1, fr->constant(1.0)).value(), 0.6, 1e-15);
    EXPECT_NEAR(ctx.weight(b2, fr->constant(1.0)).value(), 0.36 - 1.0, 1e-14);
    const std::size_t b3[3] = {0, 0, 0};
    EXPECT_NEAR(ctx.weight(b3, fr->constant(1.0)).value(), 0.216 - 3 * 0.6, 1e-14);
    EXPECT_THROW((void)ctx.weight(std::span<const std::size_t>(b3), fr->constant(1.0).truncated(2)), ConfigurationError);
}

TEST(Ibp, ClosedFormPairs) {
    const NoiseSpec s = standard_gaussian_spec(1);
    const auto r1 = ibp_selftest(s, FunctionalSet({V0}), Expr(1.0), sin(V0), {0}, {}, kMc);
    EXPECT_LT(std::abs(r1.z), 4.0);
    EXPECT_NEAR(r1.lhs.value, std::exp(-0.5), 3 * r1.lhs.std_error);
    EXPECT_NEAR(r1.rhs.value, std::exp(-0.5), 3 * r1.rhs.std_error);
    const auto r2 = ibp_selftest(s, FunctionalSet({V0}), Expr(1.0), cos(V0), {0, 0}, {}, kMc);
    EXPECT_NEAR(r2.lhs.value, -std::exp(-0.5), 3 * r2.lhs.std_error);
    EXPECT_NEAR(r2.rhs.value, -std::exp(-0.5), 3 * r2.rhs.std_error);
}

TEST(Ibp, NonlinearAndLocalizedSelfTests) {
    const NoiseSpec s = standard_gaussian_spec(2);
    const auto r1 = ibp_selftest(s, FunctionalSet({V0 + 0.5 * sin(V1)}), cos(V1), tanh(V0), {0}, {}, kMc);
    EXPECT_LT(std::abs(r1.z), 4.0);
    const auto r2 = ibp_selftest(s, FunctionalSet({V0, V0 + V1}), Expr(1.0), sin(V0) * cos(V1), {0, 1}, {}, kMc);
    EXPECT_LT(std::abs(r2.z), 4.0);
    const LocalizationSpec loc{{{V0 * V0 + V1 * V1, BumpKind::Phi, 0.5}}};
    const auto r3 = ibp_selftest(s, FunctionalSet({V0 * V1}), Expr(1.0), sin(V0), {0, 0}, loc, kMc);
    EXPECT_LT(std::abs(r3.z), 4.0);
    EXPECT_EQ(r3.degenerate, 0u);
}

TEST(Ibp, FlippedLogGradientIsDetected) {
    const NoiseSpec s = standard_gaussian_spec(1).with_flipped_log_gradient();
    const auto r = ibp_selftest(s, FunctionalSet({V0}), Expr(1.0), sin(V0), {0}, {}, kMc);
    EXPECT_GT(std::abs(r.z), 10.0);
}

TEST(Ibp, NonGaussianNoise) {
    // exponential coordinates with a cutoff weight that vanishes near the boundary
    const NoiseSpec s = iid_spec(2, {ExponentialLaw{1.0}, SmoothCutoffWeight{2.0, 0.5, 1.9}});
    const auto r = ibp_selftest(s, FunctionalSet({V0 + V1 * V1 * 0.3}), Expr(1.0), sin(V0), {0},
                                LocalizationSpec{{{V0 - 2.0, BumpKind::Psi, 0.6}}}, kMc);
    EXPECT_LT(std::abs(r.z), 4.0);
}

TEST(Ibp, BoundRatioIsFinite) {
    const NoiseSpec s = standard_gaussian_spec(1);
    const double v[1] = {0.4};
    const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0}, 5);
    const IbpContext ctx(fr, {fr->vars[0] + 0.2 * sin(fr->vars[0])});
    const std::size_t beta[2] = {0, 0};
    const BoundReport b = bound_report(ctx, fr->constant(1.0), beta, 1);
    EXPECT_FALSE(b.degenerate);
    EXPECT_GT(b.A, 0.0);
    EXPECT_TRUE(std::isfinite(b.ratio));
}

TEST(Ibp, DegenerateContextRefusesWeights) {
    const NoiseSpec s = standard_gaussian_spec(1);
    const double v[1] = {0.0};
    const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0}, 2);
    const IbpContext ctx(fr, {fr->vars[0] * fr->vars[0]});
    EXPECT_TRUE(ctx.degenerate());
    EXPECT_THROW((void)ctx.weight(0, fr->constant(1.0)), DomainError);
}

// F = V, G = 1, l = 0, q = 1: H = V, A_1 = 2 + V^2, |G|_1 = 1.
TEST(Ibp, BoundRatioClosedForm) {
    const NoiseSpec s = standard_gaussian_spec(1);
    for (double x : {-1.5, 0.3, 2.0}) {
        const double v[1] = {x};
        const FramePtr fr = make_frame(s, v, std::vector<std::size_t>{0}, 2);
        const IbpContext ctx(fr, {fr->vars[0]});
        const std::size_t beta[1] = {0};
        const BoundReport b = bound_report(ctx, fr->constant(1.0), beta, 0);
        EXPECT_NEAR(b.A, 2.0 + x * x, 1e-14);
        EXPECT_NEAR(b.ratio, std::abs(x) / (2.0 + x * x), 1e-14);
    }
}
