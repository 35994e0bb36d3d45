#include <gtest/gtest.h>

#include <cmath>

#include "mkit/series.hpp"
#include "mkit/taylor.hpp"

using namespace mkit;

namespace {

double partial(const TaylorPoly& p, std::vector<std::uint32_t> vars) {
    return vars.empty() ? p.value() : p.partial(p.space()->index_of(vars));
}

}  // namespace

TEST(Series, ElementaryFunctionsMatchDerivatives) {
    const double x = 0.7;
    const Series e = exp_series(x, 5), s = sin_series(x, 5), c = cos_series(x, 5), l = log_series(x, 5);
    for (int k = 0; k <= 5; ++k) EXPECT_NEAR(e.derivative(k), std::exp(x), 1e-13);
    EXPECT_NEAR(s.derivative(3), -std::cos(x), 1e-13);
    EXPECT_NEAR(c.derivative(2), -std::cos(x), 1e-13);
    EXPECT_NEAR(l.derivative(3), 2.0 / (x * x * x), 1e-12);
    EXPECT_NEAR(sqrt_series(x, 3).derivative(2), -0.25 * std::pow(x, -1.5), 1e-13);
    EXPECT_NEAR(pow_series(x, 2.5, 3).derivative(3), 2.5 * 1.5 * 0.5 * std::pow(x, -0.5), 1e-12);
    const double t = std::tanh(x);
    EXPECT_NEAR(tanh_series(x, 2).derivative(2), -2.0 * t * (1 - t * t), 1e-13);
    EXPECT_NEAR(tanh_series(-x, 2).derivative(2), 2.0 * t * (1 - t * t), 1e-13);
}

TEST(Series, ArithmeticAndComposition) {
    const Series a = Series::variable(4, 0.3);
    const Series q = exp(a) / (1.0 + a * a);
    const double f2 = q.derivative(2);
    // second derivative of e^x / (1 + x^2) by central differences
    auto f = [](double x) { return std::exp(x) / (1 + x * x); };
    const double h = 1e-4;
    EXPECT_NEAR(f2, (f(0.3 + h) - 2 * f(0.3) + f(0.3 - h)) / (h * h), 1e-6);
    const Series inner = sin_series(0.3, 4);
    const Series outer = exp_series(std::sin(0.3), 4);
    const Series comp = compose(outer, inner);
    EXPECT_NEAR(comp.derivative(1), std::exp(std::sin(0.3)) * std::cos(0.3), 1e-13);
    EXPECT_NEAR(log(exp(a)).derivative(1), 1.0, 1e-13);
}

TEST(Taylor, MixedPartialsOfPolynomial) {
    const auto sp = TaylorSpace::get(2, 4);
    const TaylorPoly x = TaylorPoly::variable(sp, 0, 1.5), y = TaylorPoly::variable(sp, 1, -2.0);
    const TaylorPoly f = x * x * x * y * y;  // x^3 y^2
    EXPECT_NEAR(f.value(), 1.5 * 1.5 * 1.5 * 4.0, 1e-12);
    EXPECT_NEAR(partial(f, {0}), 3 * 1.5 * 1.5 * 4.0, 1e-12);
    EXPECT_NEAR(partial(f, {0, 1}), 3 * 1.5 * 1.5 * 2 * -2.0, 1e-12);
    EXPECT_NEAR(partial(f, {0, 0, 1, 1}), 6 * 1.5 * 2, 1e-12);
    EXPECT_NEAR(partial(f, {0, 0, 0, 1}), 6 * 2 * -2.0, 1e-12);
    EXPECT_NEAR(f.gradient(1), 1.5 * 1.5 * 1.5 * 2 * -2.0, 1e-12);
    EXPECT_EQ(f.derivative(0).order(), 3);
    EXPECT_NEAR(partial(f.derivative(0), {1, 1}), partial(f, {0, 1, 1}), 1e-12);
}

TEST(Taylor, ElementaryFunctionsAndDivision) {
    const auto sp = TaylorSpace::get(2, 3);
    const TaylorPoly x = TaylorPoly::variable(sp, 0, 0.4), y = TaylorPoly::variable(sp, 1, 0.9);
    const TaylorPoly f = exp(x * y) / (1.0 + y);
    // d^2/dx dy of e^{xy}/(1+y)
    const double X = 0.4, Y = 0.9, e = std::exp(X * Y);
    const double fxy = e * (1 + X * Y) / (1 + Y) - e * Y / ((1 + Y) * (1 + Y));
    EXPECT_NEAR(partial(f, {0, 1}), fxy, 1e-12);
    const TaylorPoly g = sqrt(x) * log(y) + sin(x) * cos(y) + tanh(x - y) + pow(y, 1.5);
    const double gy = std::sqrt(X) / Y - std::sin(X) * std::sin(Y) - (1 - std::pow(std::tanh(X - Y), 2)) + 1.5 * std::sqrt(Y);
    EXPECT_NEAR(partial(g, {1}), gy, 1e-12);
}

TEST(Taylor, OrderTruncationPropagates) {
    const auto sp = TaylorSpace::get(1, 3);
    const TaylorPoly x = TaylorPoly::variable(sp, 0, 1.0);
    const TaylorPoly d = x.derivative(0);
    EXPECT_EQ((x * d).order(), 2);
    EXPECT_EQ((x + d.derivative(0)).order(), 1);
}
