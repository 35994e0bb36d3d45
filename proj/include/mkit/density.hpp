#pragma once

// Densities through the Poisson kernel, and distances between laws.
//
//   d_alpha p_{F,Theta}(y) = (-1)^{|alpha|} sum_i E_Theta( d_i Q_d(F - y) H^{q+1}_{(i,alpha),Theta}(F, phi_y(F)) )
//
// The sign comes from differentiating Q_d(F - y) in y. phi_y(x) = psi_1(|x - y|)
// is 1 on B_1(y) and 0 off B_2(y), so samples with |F - y| >= 2 contribute
// nothing. For alpha empty the weight factorizes,
// H_{i,Theta}(F, g(F)) = g(F) H_{i,Theta}(F, 1) - d_i g(F), which
// lets one sample set serve a whole grid of points.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "mkit/bumps.hpp"
#include "mkit/errors.hpp"
#include "mkit/ibp.hpp"
#include "mkit/localization.hpp"
#include "mkit/malliavin.hpp"
#include "mkit/montecarlo.hpp"
#include "mkit/stats.hpp"

namespace mkit {

// ============================================================================
// Poisson kernel
// ============================================================================

/// Area of the unit sphere in R^d.
[[nodiscard]] inline double unit_sphere_area(std::size_t d) {
    const double h = 0.5 * static_cast<double>(d);
    return 2.0 * std::pow(std::numbers::pi, h) / boost::math::tgamma(h);
}

/// Q_1(x) = max(x, 0), Q_2(x) = ln|x| / a_2, Q_d(x) = -|x|^{2-d} / a_d.
[[nodiscard]] inline double poisson_kernel(std::span<const double> x) {
    const std::size_t d = x.size();
    if (d == 1) return std::max(x[0], 0.0);
    double r2 = 0.0;
    for (double c : x) r2 += c * c;
    if (r2 == 0.0) throw DomainError("Poisson kernel singularity at the origin");
    const double a = unit_sphere_area(d);
    if (d == 2) return 0.5 * std::log(r2) / a;
    return -std::pow(r2, 0.5 * (2.0 - static_cast<double>(d))) / a;
}

/// grad Q_d(x): 1_{x > 0} for d = 1, x / (a_d |x|^d) otherwise.
inline void poisson_kernel_grad(std::span<const double> x, std::span<double> out) {
    const std::size_t d = x.size();
    if (d == 1) {
        out[0] = x[0] > 0.0 ? 1.0 : 0.0;
        return;
    }
    double r2 = 0.0;
    for (double c : x) r2 += c * c;
    if (r2 == 0.0) throw DomainError("Poisson kernel singularity at the origin");
    const double s = 1.0 / (unit_sphere_area(d) * std::pow(r2, 0.5 * static_cast<double>(d)));
    for (std::size_t i = 0; i < d; ++i) out[i] = x[i] * s;
}

// ============================================================================
// Density estimation
// ============================================================================

struct DensityEstimate {
    std::vector<double> point;
    std::vector<std::size_t> alpha;
    double value = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
    double degenerate_fraction = 0.0;
    std::size_t singular = 0;  // samples exactly at the kernel singularity
    bool warning = false;
};

/// F, Theta and the noise law of a density problem.
struct DensityProblem {
    NoiseSpec noise;
    FunctionalSet functionals;
    LocalizationSpec theta;

    [[nodiscard]] std::vector<std::size_t> active() const {
        return detail::merge_active(functionals.variables(), theta.variables());
    }
};

inline constexpr double kDegenerateWarning = 0.01;

namespace detail {

/// phi_y(F) = psi_1(|F - y|) as a polynomial.
inline TaylorPoly radial_bump_poly(const PolyVec& f, std::span<const double> y) {
    TaylorPoly u = (f[0] - y[0]) * (f[0] - y[0]);
    for (std::size_t r = 1; r < f.size(); ++r) u += (f[r] - y[r]) * (f[r] - y[r]);
    return u.apply(radial_bump_series_sq(u.value(), u.order()));
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// Adds Theta sum_i dQ_i(F - y) H_{i,Theta}(F, phi_y(F)) for every grid point y
/// into out[0..P), counting kernel singularities in out[P + 2]. Uses
/// H_i(F, g(F)) = g(F) H_i(F, 1) - d_i g(F), which holds since gamma sigma = I.
inline void accumulate_grid(const IbpContext& ctx, std::span<const double> fv,
                            const std::vector<std::vector<double>>& ys, double t, std::span<double> out) {
    const std::size_t d = fv.size(), P = ys.size();
    const TaylorPoly one = ctx.frame()->constant(1.0).truncated(2);
    std::vector<double> h(d);
    for (std::size_t i = 0; i < d; ++i) h[i] = ctx.weight(i, one).value();
    std::vector<double> x(d), grad(d);
    for (std::size_t k = 0; k < P; ++k) {
        const double u = squared_distance(fv, ys[k]);
        if (u >= 4.0) continue;
        for (std::size_t r = 0; r < d; ++r) x[r] = fv[r] - ys[k][r];
        try {
            poisson_kernel_grad(x, grad);
        } catch (const DomainError&) {
            out[P + 2] += 1.0;
            continue;
        }
        const Series b = radial_bump_series_sq(u, 1);
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += grad[i] * (b[0] * h[i] - b[1] * 2.0 * x[i]);
        out[k] = t * s;
    }
}

}  // namespace detail

/// Generic estimator for one point and one multi-index.
[[nodiscard]] inline DensityEstimate density_point(const DensityProblem& prob, std::vector<double> y,
                                                   std::vector<std::size_t> alpha, const McSettings& mc) {
    const std::size_t d = prob.functionals.dimension();
    if (y.size() != d) throw ConfigurationError("density point has the wrong dimension");
    for (auto a : alpha)
        if (a >= d) throw ConfigurationError("multi-index entry outside the dimension of F");
    const Localizer theta(prob.theta);
    const auto active = prob.active();
    const int order = static_cast<int>(alpha.size()) + 2;
    const double sign = alpha.size() % 2 == 0 ? 1.0 : -1.0;
    // columns: estimate, degenerate, singular
    const auto res = mc_moments(mc, 0xde75u, 3, [&](RandomStream& rng, std::span<double> out) {
        const auto v = prob.noise.sample(rng);
        const auto fv = prob.functionals.values(v);
        if (detail::squared_distance(fv, y) >= 4.0) return;
        const FramePtr frame = make_frame(prob.noise, v, active, order);
        const ThetaSample th = theta.evaluate(*frame);
        const double t = th.theta.value();
        if (t <= 0.0) return;
        const IbpContext ctx(frame, prob.functionals.evaluate(*frame), theta.trivial() ? nullptr : &th);
        if (ctx.degenerate()) {
            out[1] = 1.0;
            return;
        }
        std::vector<double> x(d), grad(d);
        for (std::size_t r = 0; r < d; ++r) x[r] = fv[r] - y[r];
        try {
            poisson_kernel_grad(x, grad);
        } catch (const DomainError&) {
            out[2] = 1.0;
            return;
        }
        const TaylorPoly g = detail::radial_bump_poly(ctx.functionals(), y);
        std::vector<std::size_t> beta(alpha.size() + 1);
        std::copy(alpha.begin(), alpha.end(), beta.begin() + 1);
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (grad[i] == 0.0) continue;
            beta[0] = i;
            s += grad[i] * ctx.weight(beta, g).value();
        }
        out[0] = sign * t * s;
    });
    DensityEstimate e;
    e.point = std::move(y);
    e.alpha = std::move(alpha);
    e.value = res.mean_over_all(0);
    e.std_error = res.stderr_over_all(0);
    e.samples = res.samples;
    e.degenerate_fraction = res.moments[1].sum() / static_cast<double>(std::max<std::size_t>(res.samples, 1));
    e.singular = static_cast<std::size_t>(std::llround(res.moments[2].sum()));
    e.warning = e.degenerate_fraction > kDegenerateWarning;
    return e;
}

/// Density at many points from one shared sample set (alpha empty).
struct DensityGrid {
    std::vector<DensityEstimate> points;
    Estimate theta_mass;  // E Theta on the same samples
    std::size_t samples = 0;
};

[[nodiscard]] inline DensityGrid density_grid(const DensityProblem& prob, const std::vector<std::vector<double>>& ys,
                                              const McSettings& mc) {
    const std::size_t d = prob.functionals.dimension();
    for (const auto& y : ys)
        if (y.size() != d) throw ConfigurationError("density point has the wrong dimension");
    const Localizer theta(prob.theta);
    const auto active = prob.active();
    const std::size_t P = ys.size();
    // columns: one per point, then theta, degenerate, singular
    const auto res = mc_moments(mc, 0xde75u, P + 3, [&](RandomStream& rng, std::span<double> out) {
        const auto v = prob.noise.sample(rng);
        const auto fv = prob.functionals.values(v);
        const FramePtr frame = make_frame(prob.noise, v, active, 2);
        const ThetaSample th = theta.evaluate(*frame);
        const double t = th.theta.value();
        out[P] = t;
        if (t <= 0.0) return;
        bool near = false;
        for (const auto& y : ys)
            if (detail::squared_distance(fv, y) < 4.0) {
                near = true;
                break;
            }
        if (!near) return;
        const IbpContext ctx(frame, prob.functionals.evaluate(*frame), theta.trivial() ? nullptr : &th);
        if (ctx.degenerate()) {
            out[P + 1] = 1.0;
            return;
        }
        detail::accumulate_grid(ctx, fv, ys, t, out);
    });
    DensityGrid g;
    g.samples = res.samples;
    g.theta_mass = {res.mean_over_all(P), res.stderr_over_all(P)};
    const double n = static_cast<double>(std::max<std::size_t>(res.samples, 1));
    for (std::size_t k = 0; k < P; ++k) {
        DensityEstimate e;
        e.point = ys[k];
        e.value = res.mean_over_all(k);
        e.std_error = res.stderr_over_all(k);
        e.samples = res.samples;
        e.degenerate_fraction = res.moments[P + 1].sum() / n;
        e.singular = static_cast<std::size_t>(std::llround(res.moments[P + 2].sum()));
        e.warning = e.degenerate_fraction > kDegenerateWarning;
        g.points.push_back(std::move(e));
    }
    return g;
}

/// Uniform 1-d grid of n points on [lo, hi].
[[nodiscard]] inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    if (n < 2 || !(hi > lo)) throw ConfigurationError("grid needs n >= 2 and hi > lo");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

/// Trapezoid rule on a uniform grid.
[[nodiscard]] inline double trapezoid(std::span<const double> x, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (f[i] + f[i - 1]) * (x[i] - x[i - 1]);
    return s;
}

// ============================================================================
// Regularization by Gaussian convolution
// ============================================================================

struct RegularizationResult {
    Estimate base;        // E f(F)
    Estimate smoothed;    // E f(F + sqrt(delta) Delta) = E (f * gamma_delta)(F)
    Estimate difference;  // paired
};

[[nodiscard]] inline RegularizationResult regularized_expectation(const NoiseSpec& noise, const FunctionalSet& f,
                                                                  const Expr& test, double delta, const McSettings& mc) {
    if (delta < 0.0) throw ConfigurationError("delta must be non-negative");
    const Program prog(test);
    const std::size_t d = f.dimension();
    const double sd = std::sqrt(delta);
    const auto res = mc_moments(mc, 0x7e6u, 3, [&](RandomStream& rng, std::span<double> out) {
        const auto v = noise.sample(rng);
        auto x = f.values(v);
        out[0] = prog.run<double>(x, 0.0).front();
        for (std::size_t r = 0; r < d; ++r) x[r] += sd * rng.normal();
        out[1] = delta == 0.0 ? out[0] : prog.run<double>(x, 0.0).front();
        out[2] = out[0] - out[1];
    });
    return {{res.mean_over_all(0), res.stderr_over_all(0)},
            {res.mean_over_all(1), res.stderr_over_all(1)},
            {res.mean_over_all(2), res.stderr_over_all(2)}};
}

/// Least-squares slope of log|y| against log x.
[[nodiscard]] inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(std::abs(y[i]));
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::log(x[i]) - mx;
        sxy += a * (std::log(std::abs(y[i])) - my);
        sxx += a * a;
    }
    return sxy / sxx;
}

// ============================================================================
// Distances
// ============================================================================

enum class DistanceKind { TotalVariation, Wasserstein1, SmoothedProxy };

/// `value` is the total variation in the (1/2) int |p - q| normalization,
/// which lies in [0, 1]; `l1` = int |p - q| is the sup over |f| <= 1.
struct DistanceEstimate {
    DistanceKind kind = DistanceKind::TotalVariation;
    double value = 0.0;
    double l1 = 0.0;
    double half_width = 0.0;
    double coverage_p = 1.0;
    double coverage_q = 1.0;
    bool warning = false;
    std::size_t grid_points = 0;
};

/// TV between two density evaluators on a uniform 1-d grid.
[[nodiscard]] inline DistanceEstimate tv_density_grid(const std::function<double(double)>& p,
                                                      const std::function<double(double)>& q, double lo, double hi,
                                                      std::size_t n) {
    const auto x = linear_grid(lo, hi, n);
    std::vector<double> fp(n), fq(n), diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        fp[i] = p(x[i]);
        fq[i] = q(x[i]);
        diff[i] = std::abs(fp[i] - fq[i]);
    }
    DistanceEstimate e;
    e.l1 = trapezoid(x, diff);
    e.value = 0.5 * e.l1;
    e.coverage_p = trapezoid(x, fp);
    e.coverage_q = trapezoid(x, fq);
    e.warning = e.coverage_p < 0.99 || e.coverage_q < 0.99;
    e.grid_points = n;
    return e;
}

/// TV between two tabulated density estimates on the same uniform grid; the
/// half width propagates the pointwise standard errors.
[[nodiscard]] inline DistanceEstimate tv_tabulated(std::span<const double> x, std::span<const double> p,
                                                   std::span<const double> p_se, std::span<const double> q,
                                                   std::span<const double> q_se, double mass_p = 1.0,
                                                   double mass_q = 1.0) {
    const std::size_t n = x.size();
    std::vector<double> diff(n), se(n);
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = std::abs(p[i] - q[i]);
        se[i] = std::sqrt(p_se[i] * p_se[i] + q_se[i] * q_se[i]);
    }
    DistanceEstimate e;
    e.l1 = trapezoid(x, diff);
    e.value = 0.5 * e.l1;
    e.half_width = trapezoid(x, se);
    e.coverage_p = trapezoid(x, p) / mass_p;
    e.coverage_q = trapezoid(x, q) / mass_q;
    e.warning = e.coverage_p < 0.99 || e.coverage_q < 0.99;
    e.grid_points = n;
    return e;
}

/// W1 in d = 1: L1 distance between the empirical quantile functions.
[[nodiscard]] inline DistanceEstimate wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigurationError("empty sample set");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double w = 0.0, u = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double next = std::min(static_cast<double>(i + 1) / na, static_cast<double>(j + 1) / nb);
        w += (next - u) * std::abs(a[i] - b[j]);
        u = next;
        if (static_cast<double>(i + 1) / na <= u) ++i;
        if (static_cast<double>(j + 1) / nb <= u) ++j;
    }
    DistanceEstimate e;
    e.kind = DistanceKind::Wasserstein1;
    e.value = w;
    e.l1 = w;
    return e;
}

/// Histogram TV, (1/2) sum |p_k - q_k| with two tail bins.
[[nodiscard]] inline DistanceEstimate histogram_tv(std::span<const double> a, std::span<const double> b, double lo,
                                                   double hi, std::size_t bins) {
    std::vector<double> ha(bins + 2, 0.0), hb(bins + 2, 0.0);
    auto fill = [&](std::span<const double> s, std::vector<double>& h) {
        for (double x : s) {
            std::size_t k;
            if (x < lo) k = 0;
            else if (x >= hi) k = bins + 1;
            else k = 1 + std::min(bins - 1, static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins)));
            h[k] += 1.0 / static_cast<double>(s.size());
        }
    };
    fill(a, ha);
    fill(b, hb);
    DistanceEstimate e;
    double var = 0.0;
    for (std::size_t k = 0; k < ha.size(); ++k) {
        e.l1 += std::abs(ha[k] - hb[k]);
        var += ha[k] * (1.0 - ha[k]) / static_cast<double>(a.size()) + hb[k] * (1.0 - hb[k]) / static_cast<double>(b.size());
    }
    e.value = 0.5 * e.l1;
    e.half_width = std::sqrt(var);  // rough two-sigma band for (1/2) sum of bin differences
    e.coverage_p = 1.0 - ha.front() - ha.back();
    e.coverage_q = 1.0 - hb.front() - hb.back();
    e.warning = e.coverage_p < 0.99 || e.coverage_q < 0.99;
    e.grid_points = bins;
    return e;
}

/// Lower bound for d_k: the largest mean difference over the battery
/// sin(w x_r + phase) / max(1, w^k), each of which has ||f||_{k,inf} <= 1.
[[nodiscard]] inline DistanceEstimate smoothed_dk_proxy(const std::vector<std::vector<double>>& a,
                                                        const std::vector<std::vector<double>>& b, int k) {
    if (a.empty() || b.empty()) throw ConfigurationError("empty sample set");
    const std::size_t d = a[0].size();
    const double omegas[] = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    const double phases[] = {0.0, std::numbers::pi / 2.0};
    DistanceEstimate e;
    e.kind = DistanceKind::SmoothedProxy;
    for (std::size_t r = 0; r < d; ++r)
        for (double w : omegas)
            for (double ph : phases) {
                const double scale = 1.0 / std::max(1.0, std::pow(w, k));
                MomentAccumulator ma, mb;
                for (const auto& x : a) ma.add(scale * std::sin(w * x[r] + ph));
                for (const auto& x : b) mb.add(scale * std::sin(w * x[r] + ph));
                const double diff = std::abs(ma.mean() - mb.mean());
                if (diff > e.value) {
                    e.value = diff;
                    e.half_width = 2.0 * std::hypot(ma.stderr_mean(), mb.stderr_mean());
                }
            }
    e.l1 = e.value;
    return e;
}

// ============================================================================
// Non-degeneracy profile
// ============================================================================

struct ProfileRow {
    std::size_t index = 0;      // position in the family
    double eps = 0.0;
    double p_det = 0.0;         // P(det sigma <= eps)
    double p_det_se = 0.0;
    double p_lambda = 0.0;      // P(lambda_min <= eps)
    double p_lambda_se = 0.0;
};

struct NondegeneracyProfile {
    std::vector<double> eps;
    std::vector<ProfileRow> rows;       // family-major
    std::vector<double> eta;            // max over the tail of the family, per eps
    std::vector<double> eta_lambda;
};

struct FamilyMember {
    NoiseSpec noise;
    FunctionalSet functionals;
};

/// Samples of (det sigma_F, lambda_min) for one functional.
[[nodiscard]] inline std::pair<std::vector<double>, std::vector<double>> covariance_samples(const FamilyMember& m,
                                                                                          const McSettings& mc,
                                                                                          std::uint64_t tag) {
    const auto rows = mc_collect<std::pair<double, double>>(mc, tag, [&](RandomStream& rng, std::size_t) {
        const auto v = m.noise.sample(rng);
        const FramePtr frame = make_frame(m.noise, v, m.functionals.variables(), 1);
        const PolyVec f = m.functionals.evaluate(*frame);
        std::vector<Jet> jets;
        for (const auto& p : f) jets.emplace_back(frame, p);
        const auto rep = covariance(jets);
        return std::pair{std::max(rep.det, 0.0), std::max(rep.lambda_min, 0.0)};
    });
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [a, b] : rows) {
        out.first.push_back(a);
        out.second.push_back(b);
    }
    return out;
}

/// Tail probabilities from one sorted sample set per member, so every row is
/// monotone in eps sample by sample.
[[nodiscard]] inline NondegeneracyProfile profile_from_samples(std::vector<std::vector<double>> dets,
                                                               std::vector<std::vector<double>> lambdas,
                                                               std::vector<double> eps) {
    if (eps.empty()) throw ConfigurationError("empty epsilon grid");
    if (!std::is_sorted(eps.begin(), eps.end())) throw ConfigurationError("epsilon grid must be sorted");
    NondegeneracyProfile p;
    p.eps = eps;
    p.eta.assign(eps.size(), 0.0);
    p.eta_lambda.assign(eps.size(), 0.0);
    const std::size_t members = dets.size();
    const std::size_t tail_start = members / 2;
    for (std::size_t m = 0; m < members; ++m) {
        std::sort(dets[m].begin(), dets[m].end());
        std::sort(lambdas[m].begin(), lambdas[m].end());
        const double n = static_cast<double>(dets[m].size());
        for (std::size_t e = 0; e < eps.size(); ++e) {
            ProfileRow r;
            r.index = m;
            r.eps = eps[e];
            r.p_det = static_cast<double>(std::upper_bound(dets[m].begin(), dets[m].end(), eps[e]) - dets[m].begin()) / n;
            r.p_lambda = static_cast<double>(std::upper_bound(lambdas[m].begin(), lambdas[m].end(), eps[e]) - lambdas[m].begin()) / n;
            r.p_det_se = std::sqrt(r.p_det * (1.0 - r.p_det) / n);
            r.p_lambda_se = std::sqrt(r.p_lambda * (1.0 - r.p_lambda) / n);
            if (m >= tail_start) {
                p.eta[e] = std::max(p.eta[e], r.p_det);
                p.eta_lambda[e] = std::max(p.eta_lambda[e], r.p_lambda);
            }
            p.rows.push_back(r);
        }
    }
    return p;
}

[[nodiscard]] inline NondegeneracyProfile nondegeneracy_profile(const std::vector<FamilyMember>& family,
                                                                std::vector<double> eps, const McSettings& mc) {
    std::vector<std::vector<double>> dets, lambdas;
    for (std::size_t m = 0; m < family.size(); ++m) {
        auto [a, b] = covariance_samples(family[m], mc, 0x9e0u + m);
        dets.push_back(std::move(a));
        lambdas.push_back(std::move(b));
    }
    return profile_from_samples(std::move(dets), std::move(lambdas), std::move(eps));
}

}  // namespace mkit
