#pragma once

// Localization bumps and smooth cutoffs.
//
//   psi_a(x) = 1                                     |x| <= a
//            = exp(1 - a^2 / (a^2 - (|x| - a)^2))     a < |x| < 2a
//            = 0                                     |x| >= 2a
//   phi_a(x) = 1                                     |x| >= a
//            = exp(1 - a^2 / (2|x| - a)^2)           a/2 < |x| < a
//            = 0                                     |x| <= a/2
//
// Inside the glue bands the series are built from the closed-form logarithm
// and exponentiated; outside them all derivatives are exactly zero.
//
// Note: psi_a is C^1 but its second derivative jumps at |x| = a, and phi_a
// has a first-derivative jump at |x| = a. Both are C^inf at their outer glue
// points (2a and a/2). smooth_step below is C^inf everywhere.

#include <cmath>

#include "mkit/series.hpp"
#include "mkit/taylor.hpp"

namespace mkit {

namespace detail {

inline void flip_odd(Series& s) {
    for (int k = 1; k <= s.order(); k += 2) s[static_cast<std::size_t>(k)] = -s[static_cast<std::size_t>(k)];
}

inline Series zero_series(int order) { return Series(order, 0.0); }

}  // namespace detail

/// ln psi_a around x0 in the glue band (a < |x0| < 2a).
[[nodiscard]] inline Series log_psi_band_series(double a, double x0, int order) {
    const double s0 = std::abs(x0);
    const Series t = Series::variable(order, s0 - a);
    Series g = 1.0 - (a * a) / ((a * a) - t * t);
    if (x0 < 0.0) detail::flip_odd(g);
    return g;
}

/// ln phi_a around x0 in the glue band (a/2 < |x0| < a).
[[nodiscard]] inline Series log_phi_band_series(double a, double x0, int order) {
    const double s0 = std::abs(x0);
    const Series u = 2.0 * Series::variable(order, s0) - a;
    Series g = 1.0 - (a * a) / (u * u);
    if (x0 < 0.0) detail::flip_odd(g);
    return g;
}

[[nodiscard]] inline Series psi_series(double a, double x0, int order) {
    const double s0 = std::abs(x0);
    if (s0 <= a) return Series(order, 1.0);
    if (s0 >= 2.0 * a) return detail::zero_series(order);
    return exp(log_psi_band_series(a, x0, order));
}

[[nodiscard]] inline Series phi_series(double a, double x0, int order) {
    const double s0 = std::abs(x0);
    if (s0 >= a) return Series(order, 1.0);
    if (s0 <= 0.5 * a) return detail::zero_series(order);
    return exp(log_phi_band_series(a, x0, order));
}

/// ln psi_a; requires psi_a(x0) > 0.
[[nodiscard]] inline Series log_psi_series(double a, double x0, int order) {
    const double s0 = std::abs(x0);
    if (s0 >= 2.0 * a) throw DomainError("log of psi outside its support");
    if (s0 <= a) return detail::zero_series(order);
    return log_psi_band_series(a, x0, order);
}

/// ln phi_a; requires phi_a(x0) > 0.
[[nodiscard]] inline Series log_phi_series(double a, double x0, int order) {
    const double s0 = std::abs(x0);
    if (s0 <= 0.5 * a) throw DomainError("log of phi outside its support");
    if (s0 >= a) return detail::zero_series(order);
    return log_phi_band_series(a, x0, order);
}

[[nodiscard]] inline double psi_bump(double a, double x) { return psi_series(a, x, 0)[0]; }
[[nodiscard]] inline double phi_bump(double a, double x) { return phi_series(a, x, 0)[0]; }

/// C^inf step: 0 for t <= 0, 1 for t >= 1, e(t)/(e(t)+e(1-t)) with e(t) = exp(-1/t) between.
[[nodiscard]] inline Series smooth_step_series(double t0, int order) {
    if (t0 <= 0.0) return detail::zero_series(order);
    if (t0 >= 1.0) return Series(order, 1.0);
    const Series t = Series::variable(order, t0);
    const Series e0 = exp(-1.0 / t);
    const Series e1 = exp(-1.0 / (1.0 - t));
    return e0 / (e0 + e1);
}

/// Radial-style cutoff of a scalar distance s: 1 for s <= inner, 0 for s >= outer.
[[nodiscard]] inline Series cutoff_series(double inner, double outer, double s0, int order) {
    const double w = outer - inner;
    Series step = smooth_step_series((outer - s0) / w, order);
    // d/ds = -(1/w) d/dt
    double f = 1.0;
    for (int k = 1; k <= order; ++k) {
        f *= -1.0 / w;
        step[static_cast<std::size_t>(k)] *= f;
    }
    return step;
}

[[nodiscard]] inline double smooth_step(double t) { return smooth_step_series(t, 0)[0]; }

inline TaylorPoly psi_bump(double a, const TaylorPoly& p) { return p.apply(psi_series(a, p.value(), p.order())); }
inline TaylorPoly phi_bump(double a, const TaylorPoly& p) { return p.apply(phi_series(a, p.value(), p.order())); }
inline TaylorPoly log_psi(double a, const TaylorPoly& p) { return p.apply(log_psi_series(a, p.value(), p.order())); }
inline TaylorPoly log_phi(double a, const TaylorPoly& p) { return p.apply(log_phi_series(a, p.value(), p.order())); }

/// psi_1(|y|) for a point y given through its squared norm u = |y|^2: equals
/// 1 on the unit ball and vanishes outside the ball of radius 2.
[[nodiscard]] inline Series radial_bump_series_sq(double u0, int order) {
    if (u0 <= 1.0) return Series(order, 1.0);
    if (u0 >= 4.0) return detail::zero_series(order);
    const Series s = sqrt_series(u0, order);
    return compose(psi_series(1.0, s[0], order), s);
}

/// Smooth cutoff in a radius given through u = |z|^2: 1 on B_inner, 0 off B_outer.
[[nodiscard]] inline Series radial_cutoff_series_sq(double inner, double outer, double u0, int order) {
    if (u0 <= inner * inner) return Series(order, 1.0);
    if (u0 >= outer * outer) return detail::zero_series(order);
    const Series s = sqrt_series(u0, order);
    return compose(cutoff_series(inner, outer, s[0], order), s);
}

}  // namespace mkit
