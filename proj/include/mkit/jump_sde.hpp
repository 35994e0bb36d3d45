#pragma once

// Jump SDE with state-dependent thinning, its truncation at level M and the
// smooth-mark representation used by the Malliavin engine.
//
//   X_t = x + int_0^t int c(z, X_{s-}) 1{u < gamma(z, X_{s-})} N(ds, dz, du) + int_0^t g(X_s) ds
//
// Marks are scalar (z in R), the state lives in R^d. The truncated process
// samples Poisson(lambda_M) times with lambda_M = 2 Cbar mu(B_{M+1}), marks
// Z ~ mu restricted to B_{M+1}, U ~ U[0, 2 Cbar], and jumps by
// c_M(Z, X-) 1{U < gamma(Z, X-)} with c_M = Phi_M c. The smooth
// representation draws marks from
//   q_M(z, x) = theta(x) phi(z - z*) + 1_{B_{M+1}}(z) gamma(z, x) h(z) / (2 Cbar mu(B_{M+1}))
// with |z*| = M + 3, so bump marks never move the state.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mkit/bumps.hpp"
#include "mkit/density.hpp"
#include "mkit/errors.hpp"
#include "mkit/expr.hpp"
#include "mkit/functional.hpp"
#include "mkit/ibp.hpp"
#include "mkit/malliavin.hpp"
#include "mkit/montecarlo.hpp"
#include "mkit/noise.hpp"
#include "mkit/random.hpp"
#include "mkit/stats.hpp"

namespace mkit {

// ============================================================================
// Mark measure
// ============================================================================

enum class MarkFamily { Gaussian, Sech, Lebesgue };

/// Mark intensity mu(dz) = h(z) dz on R.
///   Gaussian: N(0, scale^2) density. Sech: sech(z / scale) / (pi scale).
///   Lebesgue: h = 1 (infinite total mass).
struct MarkMeasure {
    MarkFamily family = MarkFamily::Lebesgue;
    double scale = 1.0;

    [[nodiscard]] double density(double z) const {
        switch (family) {
            case MarkFamily::Gaussian: return normal_pdf(z / scale) / scale;
            case MarkFamily::Sech: return 1.0 / (std::cosh(z / scale) * std::numbers::pi * scale);
            case MarkFamily::Lebesgue: return 1.0;
        }
        return 0.0;
    }

    /// d/dz ln h as an expression in variable 0.
    [[nodiscard]] Expr log_density_grad() const {
        const Expr z = Expr::var(0);
        switch (family) {
            case MarkFamily::Gaussian: return -z / (scale * scale);
            case MarkFamily::Sech: return -tanh(z / scale) / scale;
            case MarkFamily::Lebesgue: return Expr(0.0);
        }
        return Expr(0.0);
    }

    /// A draw from mu restricted to (-r, r), normalized.
    [[nodiscard]] double sample_ball(double r, RandomStream& rng) const {
        switch (family) {
            case MarkFamily::Gaussian:
                for (int it = 0; it < 1000000; ++it) {
                    const double z = rng.normal(0.0, scale);
                    if (std::abs(z) < r) return z;
                }
                throw ModelViolation("mark rejection sampler exceeded its iteration cap");
            case MarkFamily::Sech: {
                // CDF (2/pi) atan(exp(z / scale)), inverted on [F(-r), F(r)].
                const double lo = 2.0 / std::numbers::pi * std::atan(std::exp(-r / scale));
                const double hi = 2.0 / std::numbers::pi * std::atan(std::exp(r / scale));
                const double u = rng.uniform(lo, hi);
                return scale * std::log(std::tan(0.5 * std::numbers::pi * u));
            }
            case MarkFamily::Lebesgue: return rng.uniform(-r, r);
        }
        return 0.0;
    }
};

// ============================================================================
// Model
// ============================================================================

/// Expressions use variable 0 for the mark z and 1..d for the state in c and
/// gamma, variables 0..d-1 for the state in g, and variable 0 in the bounds.
struct JumpModel {
    std::size_t dim = 1;
    std::vector<Expr> jump;            // c(z, x), one per state coordinate
    Expr rate = Expr(1.0);             // gamma(z, x)
    std::vector<Expr> drift;           // g(x)
    MarkMeasure marks;
    double rate_bound = 1.0;           // Cbar >= gamma
    Expr jump_lower = Expr(0.0);       // lower bound for |d_z c(z, x)|
    Expr rate_lower = Expr(0.0);       // lower bound for gamma(z, x)
    std::vector<double> x0;

    /// True when gamma does not depend on the state.
    [[nodiscard]] bool rate_state_free() const {
        const auto v = rate.variables();
        return v.empty() || (v.size() == 1 && *v.begin() == 0);
    }
};

/// Default study model: d = 1, Lebesgue marks, gamma = Cbar = 1,
/// c(z, x) = (1 + cos(x) / 2) z / (1 + z^2), g(x) = -tanh(x) / 2, x0 = 0.
[[nodiscard]] inline JumpModel default_jump_model() {
    const Expr z = Expr::var(0), x = Expr::var(1);
    JumpModel m;
    m.jump = {(1.0 + 0.5 * cos(x)) * z / (1.0 + z * z)};
    m.drift = {-0.5 * tanh(Expr::var(0))};
    m.rate = Expr(1.0);
    m.rate_bound = 1.0;
    m.rate_lower = Expr(1.0);
    const Expr zz = Expr::var(0);
    // |d_z c| = b(x) |1 - z^2| / (1 + z^2)^2 with b >= 1/2; written without abs
    // as sqrt((1 - z^2)^2).
    m.jump_lower = 0.5 * sqrt((1.0 - zz * zz) * (1.0 - zz * zz)) / ((1.0 + zz * zz) * (1.0 + zz * zz));
    m.x0 = {0.0};
    return m;
}

enum class Representation { Thinning, SmoothMarks };

struct JumpEvent {
    double time = 0.0;
    double mark = 0.0;
    double uniform = 0.0;              // U_k (thinning only)
    bool accepted = false;             // the state moved (c_M may still vanish)
    std::vector<double> state_before;  // X_{T_k-}
};

struct PathRecord {
    int level = 0;
    double horizon = 0.0;
    Representation representation = Representation::Thinning;
    std::vector<JumpEvent> events;
    std::vector<double> final_state;
    std::size_t drift_steps = 0;
};

struct TangentFlow {
    Eigen::MatrixXd Y;
    Eigen::MatrixXd Y_inv;
    double inverse_residual = 0.0;  // max |Y_inv Y - I|
    double condition = 1.0;
    double rho = 0.0;
};

/// Fixed-step classical RK4 step count on a gap: step = min(1e-3, gap / 10).
[[nodiscard]] inline std::size_t rk4_steps(double gap) {
    if (gap <= 0.0) return 0;
    return std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(gap / 1e-3 - 1e-9)));
}

namespace detail {

template <class T>
std::vector<T> axpy(const std::vector<T>& x, double a, const std::vector<T>& k) {
    std::vector<T> r = x;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += a * k[i];
    return r;
}

/// Normalized bump density phi(u) on (-1, 1), proportional to exp(-1 / (1 - u^2)).
inline double bump_norm() {
    static const double c = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [](double u) { return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0; }, -1.0, 1.0, 15, 1e-14);
    return c;
}

}  // namespace detail

[[nodiscard]] inline double mark_bump_density(double u) {
    return std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) / detail::bump_norm() : 0.0;
}

/// A model truncated at level M with its expressions compiled.
class JumpSystem {
public:
    JumpSystem(JumpModel model, int level) : model_(std::move(model)), level_(level) {
        const std::size_t d = model_.dim;
        if (d < 1) throw ConfigurationError("state dimension must be positive");
        if (model_.jump.size() != d || model_.drift.size() != d || model_.x0.size() != d)
            throw ConfigurationError("jump, drift and x0 must have one entry per state coordinate");
        if (level_ < 1) throw ConfigurationError("truncation level must be at least 1");
        if (!(model_.rate_bound > 0.0)) throw ConfigurationError("rate bound must be positive");
        for (const auto& e : model_.jump)
            for (auto v : e.variables())
                if (v > d) throw ConfigurationError("jump coefficient uses an unknown variable");
        for (const auto& e : model_.drift)
            for (auto v : e.variables())
                if (v >= d) throw ConfigurationError("drift uses an unknown variable");
        jump_ = Program(model_.jump);
        drift_ = Program(model_.drift);
        rate_ = Program(model_.rate);
        log_h_grad_ = model_.marks.log_density_grad();
        radius_ = level_ + 1.0;
        mu_ = ball_mass(radius_);
        lambda_ = 2.0 * model_.rate_bound * mu_;
        spot_check_rate();
    }

    [[nodiscard]] const JumpModel& model() const noexcept { return model_; }
    [[nodiscard]] int level() const noexcept { return level_; }
    [[nodiscard]] std::size_t dim() const noexcept { return model_.dim; }
    [[nodiscard]] double mu() const noexcept { return mu_; }
    [[nodiscard]] double lambda() const noexcept { return lambda_; }
    [[nodiscard]] double bump_center() const noexcept { return level_ + 3.0; }

    /// mu(B_r) by adaptive Gauss-Kronrod quadrature.
    [[nodiscard]] double ball_mass(double r) const {
        double err = 0.0;
        const double m = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double z) { return model_.marks.density(z); }, -r, r, 20, 1e-12, &err);
        if (!std::isfinite(m) || err > 1e-8 * std::max(1.0, m))
            throw EstimatorFailure("mark measure quadrature did not converge", err);
        return m;
    }

    /// Phi_M(z): 1 on B_{M-1}, 0 off B_{M+1}.
    [[nodiscard]] Series cutoff_series(double z, int order) const {
        Series s = mkit::cutoff_series(level_ - 1.0, level_ + 1.0, std::abs(z), order);
        if (z < 0.0) detail::flip_odd(s);
        return s;
    }
    [[nodiscard]] double cutoff(double z) const { return cutoff_series(z, 0)[0]; }

    [[nodiscard]] double rate(double z, std::span<const double> x) const {
        std::vector<double> v(1 + x.size());
        v[0] = z;
        std::copy(x.begin(), x.end(), v.begin() + 1);
        return rate_.eval(v);
    }

    /// c_M(z, x).
    [[nodiscard]] std::vector<double> jump(double z, std::span<const double> x) const {
        const double phi = cutoff(z);
        std::vector<double> out(dim(), 0.0);
        if (phi == 0.0) return out;
        std::vector<double> v(1 + x.size());
        v[0] = z;
        std::copy(x.begin(), x.end(), v.begin() + 1);
        out = jump_.run<double>(v, 0.0);
        for (auto& c : out) c *= phi;
        return out;
    }

    /// theta_{M,gamma}(x) = mu(B_{M+1})^-1 int_{B_{M+1}} (1 - gamma(z, x) / (2 Cbar)) dmu(z).
    [[nodiscard]] double theta(std::span<const double> x) const {
        if (model_.rate.variables().empty()) return 1.0 - rate(0.0, x) / (2.0 * model_.rate_bound);
        double err = 0.0;
        const double s = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double z) { return (1.0 - rate(z, x) / (2.0 * model_.rate_bound)) * model_.marks.density(z); },
            -radius_, radius_, 20, 1e-12, &err);
        return s / mu_;
    }

    /// Density of q_M(., x) at z.
    [[nodiscard]] double qm_density(double z, std::span<const double> x) const {
        double q = theta(x) * mark_bump_density(z - bump_center());
        if (std::abs(z) < radius_) q += rate(z, x) * model_.marks.density(z) / (2.0 * model_.rate_bound * mu_);
        return q;
    }

    /// One mark from q_M(., x).
    [[nodiscard]] double sample_qm(std::span<const double> x, RandomStream& rng) const {
        if (rng.uniform() < theta(x)) return bump_center() + sample_bump(rng);
        for (int it = 0; it < 1000000; ++it) {
            const double z = model_.marks.sample_ball(radius_, rng);
            if (rng.uniform(0.0, model_.rate_bound) < rate(z, x)) return z;
        }
        throw ModelViolation("q_M rejection sampler exceeded its iteration cap");
    }

    /// Advances x along the drift flow over `gap`.
    void flow(std::vector<double>& x, double gap) const {
        const std::size_t n = rk4_steps(gap);
        if (n == 0) return;
        const double h = gap / static_cast<double>(n);
        for (std::size_t s = 0; s < n; ++s) rk4_step(x, h);
    }

    /// Flow map of a one-dimensional drift as a series around x0.
    [[nodiscard]] Series flow_series(double x0, double gap, int order) const {
        if (dim() != 1) throw ConfigurationError("flow-map series need a scalar state");
        const auto space = TaylorSpace::get(1, order);
        std::vector<TaylorPoly> a{TaylorPoly::variable(space, 0, x0)};
        const std::size_t n = rk4_steps(gap);
        const double h = n ? gap / static_cast<double>(n) : 0.0;
        for (std::size_t s = 0; s < n; ++s) rk4_step(a, h);
        Series out(order);
        for (int k = 0; k <= order; ++k) out[static_cast<std::size_t>(k)] = a[0].coeff(static_cast<std::size_t>(k));
        return out;
    }

    /// Thinning representation on [0, t].
    [[nodiscard]] PathRecord simulate_path(double t, RandomStream& rng) const {
        PathRecord p = start(t, Representation::Thinning);
        std::vector<double> x = model_.x0;
        double now = 0.0;
        for (;;) {
            const double e = rng.exponential(lambda_);
            if (now + e > t) break;
            advance(x, e, p);
            now += e;
            JumpEvent ev;
            ev.time = now;
            ev.mark = model_.marks.sample_ball(radius_, rng);
            ev.uniform = rng.uniform(0.0, 2.0 * model_.rate_bound);
            ev.state_before = x;
            ev.accepted = ev.uniform < rate(ev.mark, x);
            if (ev.accepted) apply_jump(x, ev.mark);
            p.events.push_back(std::move(ev));
        }
        advance(x, t - now, p);
        p.final_state = std::move(x);
        return p;
    }

    /// Smooth-mark representation on [0, t].
    [[nodiscard]] PathRecord simulate_path_smooth(double t, RandomStream& rng) const {
        PathRecord p = start(t, Representation::SmoothMarks);
        std::vector<double> x = model_.x0;
        double now = 0.0;
        for (;;) {
            const double e = rng.exponential(lambda_);
            if (now + e > t) break;
            advance(x, e, p);
            now += e;
            JumpEvent ev;
            ev.time = now;
            ev.state_before = x;
            ev.mark = sample_qm(x, rng);
            ev.accepted = true;
            apply_jump(x, ev.mark);
            p.events.push_back(std::move(ev));
        }
        advance(x, t - now, p);
        p.final_state = std::move(x);
        return p;
    }

    /// Y_t, its inverse and rho = |Y_inv|^-2 sum 1_{B_{M-1}}(Z_k) clow(Z_k)^2,
    /// integrated on the path's grid.
    [[nodiscard]] TangentFlow tangent_flow(const PathRecord& path) const {
        const std::size_t d = dim();
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        TangentFlow tf{I, I};
        std::vector<double> x = model_.x0;
        const Program clow(model_.jump_lower);
        double now = 0.0, lower_sum = 0.0;
        for (const auto& ev : path.events) {
            tangent_advance(x, tf, ev.time - now);
            now = ev.time;
            if (!ev.accepted) continue;
            const Eigen::MatrixXd J = I + jump_jacobian(ev.mark, x);
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
            const auto& sv = svd.singularValues();
            const double smin = sv(sv.size() - 1);
            if (!(smin > 0.0) || sv(0) / smin > 1e8)
                throw ModelViolation("I + grad_x c is not invertible at t = " + std::to_string(ev.time));
            tf.Y = J * tf.Y;
            tf.Y_inv = tf.Y_inv * J.inverse();
            apply_jump(x, ev.mark);
            if (std::abs(ev.mark) < level_ - 1.0) {
                const double z[1] = {ev.mark};
                const double c = clow.eval(z);
                lower_sum += c * c;
            }
        }
        tangent_advance(x, tf, path.horizon - now);
        tf.inverse_residual = (tf.Y_inv * tf.Y - I).cwiseAbs().maxCoeff();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(tf.Y);
        const auto& sv = svd.singularValues();
        tf.condition = sv(0) / sv(sv.size() - 1);
        const double ninv = Eigen::JacobiSVD<Eigen::MatrixXd>(tf.Y_inv).singularValues()(0);
        tf.rho = lower_sum / (ninv * ninv);
        return tf;
    }

    /// Noise spec of the marks of a smooth-representation path with room for
    /// `capacity` jumps: weight Phi_M, log-density gradient of h.
    [[nodiscard]] NoiseSpec mark_spec(std::size_t capacity) const {
        if (!model_.rate.variables().empty())
            throw ConfigurationError("the Malliavin mark representation needs a constant rate");
        NoiseComponent c{ExternalLaw{log_h_grad_}, SmoothCutoffWeight{0.0, level_ - 1.0, level_ + 1.0}};
        return iid_spec(capacity, c);
    }

    /// X_t of a smooth-representation path as a jet in its active marks
    /// (marks inside B_{M+1}). Returns nullopt when no mark is active.
    [[nodiscard]] std::optional<std::pair<FramePtr, TaylorPoly>> path_jet(const PathRecord& path,
                                                                          const NoiseSpec& spec, int order) const {
        if (dim() != 1) throw ConfigurationError("path jets need a scalar state");
        if (path.events.size() > spec.size()) throw ResourceError("more jumps than the mark spec holds");
        std::vector<double> v(spec.size(), 0.0);
        std::vector<std::size_t> active;
        for (std::size_t k = 0; k < path.events.size(); ++k) {
            v[k] = path.events[k].mark;
            if (std::abs(v[k]) < radius_) active.push_back(k);
        }
        if (active.empty()) return std::nullopt;
        const FramePtr frame = make_frame(spec, v, active, order);
        TaylorPoly x = frame->constant(model_.x0[0]);
        double now = 0.0;
        for (std::size_t k = 0; k < path.events.size(); ++k) {
            const double gap = path.events[k].time - now;
            if (rk4_steps(gap)) x = x.apply(flow_series(x.value(), gap, order));
            now = path.events[k].time;
            const std::size_t l = frame->local_of(k);
            if (l == frame->nvars()) continue;
            const TaylorPoly& z = frame->vars[l];
            const std::vector<TaylorPoly> b{z, x};
            const TaylorPoly c = jump_.run<TaylorPoly>(b, x).front();
            x += z.apply(cutoff_series(z.value(), order)) * c;
        }
        if (rk4_steps(path.horizon - now)) x = x.apply(flow_series(x.value(), path.horizon - now, order));
        return std::pair{frame, std::move(x)};
    }

private:
    [[nodiscard]] PathRecord start(double t, Representation r) const {
        if (!(t > 0.0)) throw ConfigurationError("horizon must be positive");
        PathRecord p;
        p.level = level_;
        p.horizon = t;
        p.representation = r;
        return p;
    }

    void advance(std::vector<double>& x, double gap, PathRecord& p) const {
        flow(x, gap);
        p.drift_steps += rk4_steps(gap);
        for (double c : x)
            if (!std::isfinite(c)) throw EstimatorFailure("drift integration produced a non-finite state", c);
    }

    void apply_jump(std::vector<double>& x, double z) const {
        const auto c = jump(z, x);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += c[i];
    }

    template <class T>
    void rk4_step(std::vector<T>& x, double h) const {
        const T& proto = x.front();
        auto f = [&](const std::vector<T>& y) { return drift_.run<T>(y, proto); };
        const auto k1 = f(x);
        const auto k2 = f(detail::axpy(x, 0.5 * h, k1));
        const auto k3 = f(detail::axpy(x, 0.5 * h, k2));
        const auto k4 = f(detail::axpy(x, h, k3));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    [[nodiscard]] Eigen::MatrixXd drift_jacobian(const std::vector<double>& x) const {
        const std::size_t d = dim();
        const auto space = TaylorSpace::get(d, 1);
        std::vector<TaylorPoly> vars;
        for (std::size_t i = 0; i < d; ++i) vars.push_back(TaylorPoly::variable(space, i, x[i]));
        const auto g = drift_.run<TaylorPoly>(vars, vars.front());
        Eigen::MatrixXd J(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = g[r].gradient(c);
        return J;
    }

    /// grad_x c_M(z, x).
    [[nodiscard]] Eigen::MatrixXd jump_jacobian(double z, const std::vector<double>& x) const {
        const std::size_t d = dim();
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
        const double phi = cutoff(z);
        if (phi == 0.0) return J;
        const auto space = TaylorSpace::get(d, 1);
        std::vector<TaylorPoly> vars{TaylorPoly::constant(space, z)};
        for (std::size_t i = 0; i < d; ++i) vars.push_back(TaylorPoly::variable(space, i, x[i]));
        const auto c = jump_.run<TaylorPoly>(vars, vars.front());
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t k = 0; k < d; ++k)
                J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = phi * c[r].gradient(k);
        return J;
    }

    /// RK4 on (x, Y, Y_inv) with Y' = grad g Y and Y_inv' = -Y_inv grad g.
    void tangent_advance(std::vector<double>& x, TangentFlow& tf, double gap) const {
        const std::size_t n = rk4_steps(gap);
        if (n == 0) return;
        const double h = gap / static_cast<double>(n);
        for (std::size_t s = 0; s < n; ++s) {
            const std::vector<double> x0 = x;
            const auto x2 = detail::axpy(x0, 0.5 * h, drift_.run<double>(x0, 0.0));
            const auto k2x = drift_.run<double>(x2, 0.0);
            const auto x3 = detail::axpy(x0, 0.5 * h, k2x);
            const auto k3x = drift_.run<double>(x3, 0.0);
            const auto x4 = detail::axpy(x0, h, k3x);
            const Eigen::MatrixXd A1 = drift_jacobian(x0), A2 = drift_jacobian(x2), A3 = drift_jacobian(x3),
                                  A4 = drift_jacobian(x4);
            const Eigen::MatrixXd Y = tf.Y, Z = tf.Y_inv;
            const Eigen::MatrixXd k1 = A1 * Y, k2 = A2 * (Y + 0.5 * h * k1), k3 = A3 * (Y + 0.5 * h * k2),
                                  k4 = A4 * (Y + h * k3);
            const Eigen::MatrixXd m1 = -Z * A1, m2 = -(Z + 0.5 * h * m1) * A2, m3 = -(Z + 0.5 * h * m2) * A3,
                                  m4 = -(Z + h * m3) * A4;
            tf.Y = Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            tf.Y_inv = Z + (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
            rk4_step(x, h);
        }
    }

    [[nodiscard]] static double sample_bump(RandomStream& rng) {
        // envelope: exp(-1 / (1 - u^2)) <= e^-1 on (-1, 1)
        for (int it = 0; it < 1000000; ++it) {
            const double u = rng.uniform(-1.0, 1.0);
            if (std::abs(u) < 1.0 && rng.uniform() < std::exp(1.0 - 1.0 / (1.0 - u * u))) return u;
        }
        throw ModelViolation("bump sampler exceeded its iteration cap");
    }

    void spot_check_rate() const {
        std::vector<double> x = model_.x0;
        for (int i = 0; i <= 64; ++i) {
            const double z = -radius_ + 2.0 * radius_ * i / 64.0;
            const double g = rate(z, x);
            if (!(g >= 0.0 && g <= model_.rate_bound * (1.0 + 1e-12)))
                throw ModelViolation("rate outside [0, Cbar] at z = " + std::to_string(z));
        }
    }

    JumpModel model_;
    int level_;
    Program jump_, drift_, rate_;
    Expr log_h_grad_;
    double radius_ = 0.0;
    double mu_ = 0.0;
    double lambda_ = 0.0;
};

/// lambda_M = 2 Cbar mu(B_{M+1}).
[[nodiscard]] inline double rate_lambda(const JumpModel& model, int level) { return JumpSystem(model, level).lambda(); }

/// (1 / ln a) int_{clow^2 >= 1/a} gamma_low dmu over |z| <= r, for the rate
/// constant of the mark non-degeneracy hypothesis.
[[nodiscard]] inline double hypothesis_theta(const JumpModel& model, double a, double r) {
    if (!(a > 1.0)) throw ConfigurationError("hypothesis integral needs a > 1");
    const Program clow(model.jump_lower), glow(model.rate_lower);
    const auto f = [&](double z) {
        const double v[1] = {z};
        const double c = clow.eval(v);
        return c * c >= 1.0 / a ? glow.eval(v) * model.marks.density(z) : 0.0;
    };
    double s = 0.0;
    constexpr int kPanels = 4096;
    for (int i = 0; i < kPanels; ++i) {
        const double lo = -r + 2.0 * r * i / kPanels, hi = lo + 2.0 * r / kPanels;
        s += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, lo, hi, 0, 0.0);
    }
    return s / std::log(a);
}

// ============================================================================
// Checks of the two representations
// ============================================================================

/// First state coordinate after one jump from x, by thinning and by q_M.
struct OneJumpSamples {
    std::vector<double> thinning;
    std::vector<double> smooth;
};

[[nodiscard]] inline OneJumpSamples one_jump_samples(const JumpSystem& sys, std::span<const double> x,
                                                     const McSettings& mc) {
    const std::vector<double> x0(x.begin(), x.end());
    OneJumpSamples s;
    s.thinning = mc_collect<double>(mc, 0x31a0u, [&](RandomStream& rng, std::size_t) {
        const double z = sys.model().marks.sample_ball(sys.level() + 1.0, rng);
        const double u = rng.uniform(0.0, 2.0 * sys.model().rate_bound);
        return u < sys.rate(z, x0) ? x0[0] + sys.jump(z, x0)[0] : x0[0];
    });
    s.smooth = mc_collect<double>(mc, 0x31a1u, [&](RandomStream& rng, std::size_t) {
        return x0[0] + sys.jump(sys.sample_qm(x0, rng), x0)[0];
    });
    return s;
}

// ============================================================================
// Truncation convergence study
// ============================================================================

struct JumpStudySettings {
    std::vector<int> levels{2, 4, 6, 8};
    double horizon = 0.5;
    std::size_t paths = 10000;          // per level, histogram TV
    std::size_t bins = 40;
    std::size_t density_paths = 2000;   // per level, Malliavin density TV (0 disables)
    std::size_t grid_points = 41;
    std::size_t sobolev_paths = 200;    // per level, ||X_t||_{3,p} (0 disables)
    int sobolev_order = 3;
    int sobolev_p = 2;
    std::size_t profile_paths = 2000;   // per level, eta(eps) (0 disables)
    std::vector<double> eps{1e-4, 1e-3, 1e-2, 1e-1};
    double localization = 0.25;         // density TV localizes on phi_a(sigma_F)
    std::uint64_t seed = 1;
    int workers = 1;
};

struct JumpStudyRow {
    int level = 0;
    double lambda = 0.0;
    DistanceEstimate tv_hist;
    std::optional<DistanceEstimate> tv_density;  // between the localized densities
    double atom = 0.0;                           // P(no mark in B_{M+1})
    double localized_mass = 0.0;                 // E phi_a(sigma_F)
    double mean_jumps = 0.0;  // lambda_M t
    std::optional<Estimate> sobolev;
    std::size_t nonfinite = 0;
};

struct JumpStudy {
    std::vector<JumpStudyRow> rows;
    int reference_level = 0;
    double reference_error = 0.0;  // histogram TV(M_ref - 1, M_ref)
    double spearman = 0.0;         // rank correlation of level and histogram TV
    std::optional<NondegeneracyProfile> profile;
};

namespace detail {

struct LevelDensity {
    std::vector<double> p, se;
    double atom = 0.0;
    double mass = 0.0;
};

/// Density of X_t under Theta = phi_a(sigma_F). Without the localizer, paths
/// whose only active mark sits where d_z F vanishes (the edge of Phi_M, or a
/// critical point of c) give weights with infinite mean.
inline LevelDensity jump_level_density(const JumpSystem& sys, const JumpStudySettings& st,
                                       const std::vector<std::vector<double>>& ys, std::uint64_t tag) {
    const double mean = sys.lambda() * st.horizon;
    const std::size_t capacity = static_cast<std::size_t>(mean + 12.0 * std::sqrt(mean) + 16.0);
    const NoiseSpec spec = sys.mark_spec(capacity);
    const LocalizationSpec loc{{LocalizationTerm{Expr(0.0), BumpKind::Phi, st.localization}}};
    const std::size_t P = ys.size();
    const McSettings mc{st.density_paths, st.seed, st.workers};
    // columns: P grid points, atom, Theta, singular
    const auto res = mc_moments(mc, tag, P + 3, [&](RandomStream& rng, std::span<double> out) {
        const PathRecord path = sys.simulate_path_smooth(st.horizon, rng);
        const auto jet = sys.path_jet(path, spec, 3);
        if (!jet) {
            out[P] = 1.0;
            return;
        }
        const Frame& fr = *jet->first;
        const PolyVec df = malliavin_derivative(fr, jet->second);
        ThetaSample th = theta_from_statistics(loc, {inner(fr, df, df)}, fr.constant(1.0));
        const double t = th.theta.value();
        out[P + 1] = t;
        if (t <= 0.0) return;
        const IbpContext ctx(jet->first, PolyVec{jet->second}, &th);
        if (ctx.degenerate()) return;
        const double fv[1] = {jet->second.value()};
        accumulate_grid(ctx, fv, ys, t, out);
    });
    LevelDensity ld;
    for (std::size_t k = 0; k < P; ++k) {
        ld.p.push_back(res.mean_over_all(k));
        ld.se.push_back(res.stderr_over_all(k));
    }
    ld.atom = res.mean_over_all(P);
    ld.mass = res.mean_over_all(P + 1);
    return ld;
}

}  // namespace detail

[[nodiscard]] inline JumpStudy tv_convergence_experiment(const JumpModel& model, const JumpStudySettings& st) {
    if (st.levels.empty()) throw ConfigurationError("empty level list");
    if (!std::is_sorted(st.levels.begin(), st.levels.end())) throw ConfigurationError("levels must be sorted");
    if (st.paths < 2) throw ConfigurationError("path count must be at least 2");
    JumpStudy study;
    study.reference_level = st.levels.back();
    const JumpSystem ref(model, study.reference_level);

    auto finals = [&](const JumpSystem& sys, std::uint64_t tag, std::size_t n) {
        return mc_collect<double>(McSettings{n, st.seed, st.workers}, tag, [&](RandomStream& rng, std::size_t) {
            return sys.simulate_path(st.horizon, rng).final_state[0];
        });
    };
    const std::vector<double> ref_x = finals(ref, 0x7e00u + static_cast<std::uint64_t>(study.reference_level), st.paths);
    const auto [lo_it, hi_it] = std::minmax_element(ref_x.begin(), ref_x.end());
    const double span = std::max(*hi_it - *lo_it, 1e-9);
    const double lo = *lo_it - 0.05 * span, hi = *hi_it + 0.05 * span;

    if (study.reference_level > 1) {
        const JumpSystem below(model, study.reference_level - 1);
        const auto xb = finals(below, 0x7f00u + static_cast<std::uint64_t>(study.reference_level - 1), st.paths);
        study.reference_error = histogram_tv(xb, ref_x, lo, hi, st.bins).value;
    }

    std::vector<std::vector<double>> ys;
    std::optional<detail::LevelDensity> ref_density;
    if (st.density_paths > 0) {
        for (double y : linear_grid(lo, hi, st.grid_points)) ys.push_back({y});
        ref_density = detail::jump_level_density(ref, st, ys, 0x7d00u + static_cast<std::uint64_t>(study.reference_level));
    }
    std::vector<double> grid;
    for (const auto& y : ys) grid.push_back(y[0]);

    std::vector<std::vector<double>> dets, lams;
    for (int level : st.levels) {
        const JumpSystem sys(model, level);
        JumpStudyRow row;
        row.level = level;
        row.lambda = sys.lambda();
        row.mean_jumps = sys.lambda() * st.horizon;
        if (level == study.reference_level) {
            row.tv_hist = histogram_tv(ref_x, ref_x, lo, hi, st.bins);
        } else {
            const auto x = finals(sys, 0x7e00u + static_cast<std::uint64_t>(level), st.paths);
            row.tv_hist = histogram_tv(x, ref_x, lo, hi, st.bins);
        }
        if (ref_density) {
            const auto ld = level == study.reference_level
                                ? *ref_density
                                : detail::jump_level_density(sys, st, ys, 0x7d00u + static_cast<std::uint64_t>(level));
            row.tv_density = tv_tabulated(grid, ld.p, ld.se, ref_density->p, ref_density->se, ld.mass,
                                          ref_density->mass);
            row.atom = ld.atom;
            row.localized_mass = ld.mass;
        }
        const double cap_mean = sys.lambda() * st.horizon;
        const std::size_t capacity = static_cast<std::size_t>(cap_mean + 12.0 * std::sqrt(cap_mean) + 16.0);
        if (st.sobolev_paths > 0) {
            const NoiseSpec spec = sys.mark_spec(capacity);
            const McSettings mc{st.sobolev_paths, st.seed, st.workers};
            const auto res = mc_moments(mc, 0x5e00u + static_cast<std::uint64_t>(level), 1,
                                        [&](RandomStream& rng, std::span<double> out) {
                                            const PathRecord path = sys.simulate_path_smooth(st.horizon, rng);
                                            const auto jet = sys.path_jet(path, spec, st.sobolev_order);
                                            if (!jet) {
                                                out[0] = std::pow(std::abs(path.final_state[0]), st.sobolev_p);
                                                return;
                                            }
                                            const PathNorms n = path_norms(Jet(jet->first, jet->second), st.sobolev_order);
                                            out[0] = std::pow(std::abs(jet->second.value()), st.sobolev_p) +
                                                     std::pow(n.sobolev1, st.sobolev_p);
                                        });
            row.sobolev = pth_root(res.mean_over_all(0), res.stderr_over_all(0), st.sobolev_p);
            row.nonfinite = res.nonfinite[0];
        }
        if (st.profile_paths > 0) {
            const NoiseSpec spec = sys.mark_spec(capacity);
            const McSettings mc{st.profile_paths, st.seed, st.workers};
            const auto dl = mc_collect<double>(mc, 0x9f00u + static_cast<std::uint64_t>(level),
                                               [&](RandomStream& rng, std::size_t) {
                                                   const PathRecord path = sys.simulate_path_smooth(st.horizon, rng);
                                                   const auto jet = sys.path_jet(path, spec, 1);
                                                   if (!jet) return 0.0;
                                                   return covariance(std::vector<Jet>{Jet(jet->first, jet->second)}).det;
                                               });
            dets.push_back(dl);
            lams.push_back(dl);
        }
        study.rows.push_back(std::move(row));
    }
    if (st.profile_paths > 0) study.profile = profile_from_samples(dets, lams, st.eps);
    std::vector<double> lv, tv;
    for (const auto& r : study.rows) {
        lv.push_back(r.level);
        tv.push_back(r.tv_hist.value);
    }
    study.spearman = lv.size() >= 2 ? spearman(lv, tv) : 0.0;
    return study;
}

}  // namespace mkit
