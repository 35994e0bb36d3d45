#pragma once

// Derivative, divergence, Ornstein-Uhlenbeck operator and covariance.
//
//   D_i G     = pi_i d_i G
//   delta(U)  = -sum_i ( d_i(pi_i U_i) + pi_i U_i d_i ln p_i )
//   L F       = delta(D F)
//   sigma_F   = ( <DF^r, DF^s> )_{r,s},   gamma_F = sigma_F^{-1}
//
// All of them act on polynomials of a frame, so their outputs are jets again
// and can be fed back into the same operators.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <set>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "mkit/errors.hpp"
#include "mkit/functional.hpp"
#include "mkit/localization.hpp"
#include "mkit/montecarlo.hpp"

namespace mkit {

using PolyVec = std::vector<TaylorPoly>;

/// (D_1 G, ..., D_n G) over the frame's active coordinates.
[[nodiscard]] inline PolyVec malliavin_derivative(const Frame& frame, const TaylorPoly& g) {
    PolyVec d;
    d.reserve(frame.nvars());
    for (std::size_t i = 0; i < frame.nvars(); ++i) d.push_back(frame.weights[i] * g.derivative(i));
    return d;
}

/// <U, W>_J.
[[nodiscard]] inline TaylorPoly inner(const Frame& frame, const PolyVec& u, const PolyVec& w) {
    if (u.empty()) return frame.constant(0.0);
    TaylorPoly s = u[0] * w[0];
    for (std::size_t i = 1; i < u.size(); ++i) s += u[i] * w[i];
    return s;
}

/// delta(U); the valid order drops by one.
[[nodiscard]] inline TaylorPoly divergence(const Frame& frame, const PolyVec& u) {
    if (u.size() != frame.nvars()) throw ConfigurationError("simple process has the wrong length");
    int ord = frame.order;
    for (const auto& x : u) ord = std::min(ord, x.order());
    TaylorPoly s = frame.constant(0.0).truncated(ord - 1);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const TaylorPoly piu = frame.weights[i] * u[i];
        s -= piu.derivative(i);
        s -= piu * frame.log_grad[i];
    }
    return s;
}

[[nodiscard]] inline TaylorPoly ou_operator(const Frame& frame, const TaylorPoly& f) {
    return divergence(frame, malliavin_derivative(frame, f));
}

inline constexpr double kDegenerateDet = 1e-300;
inline constexpr double kDegenerateCondition = 1e12;

struct CovarianceReport {
    Eigen::MatrixXd sigma;
    double det = 0.0;
    std::optional<Eigen::MatrixXd> gamma;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double m_F = 1.0;  // max(1, 1/det)
    bool degenerate = false;
};

[[nodiscard]] inline CovarianceReport covariance_report(const Eigen::MatrixXd& sigma) {
    CovarianceReport r;
    r.sigma = sigma;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    r.lambda_min = es.eigenvalues().minCoeff();
    r.lambda_max = es.eigenvalues().maxCoeff();
    r.det = sigma.determinant();
    const double cond = r.lambda_min > 0.0 ? r.lambda_max / r.lambda_min : std::numeric_limits<double>::infinity();
    r.degenerate = !(r.det > kDegenerateDet) || !(cond <= kDegenerateCondition);
    r.m_F = r.det > 0.0 ? std::max(1.0, 1.0 / r.det) : std::numeric_limits<double>::infinity();
    if (!r.degenerate) r.gamma = sigma.inverse();
    return r;
}

/// Covariance report from jets of F^1..F^d (first-order tensors).
[[nodiscard]] inline CovarianceReport covariance(std::span<const Jet> jets) {
    const std::size_t d = jets.size();
    if (d == 0) throw ConfigurationError("covariance needs at least one functional");
    const Frame& fr = *jets[0].frame();
    Eigen::MatrixXd s(d, d);
    std::vector<std::vector<double>> g(d, std::vector<double>(fr.nvars()));
    for (std::size_t r = 0; r < d; ++r) {
        if (jets[r].frame() != jets[0].frame()) throw ConfigurationError("jets from different frames");
        for (std::size_t i = 0; i < fr.nvars(); ++i) g[r][i] = fr.weights[i].value() * jets[r].poly().gradient(i);
    }
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            double v = 0.0;
            for (std::size_t i = 0; i < fr.nvars(); ++i) v += g[r][i] * g[c][i];
            s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
        }
    return covariance_report(s);
}

/// sigma, det sigma and gamma as polynomials, for weights that need their
/// derivatives. gamma is formed from the adjugate for d <= 3 and by exact
/// Gauss-Jordan elimination in the polynomial ring otherwise.
struct CovarianceJets {
    std::vector<PolyVec> sigma;
    TaylorPoly det;
    std::vector<PolyVec> gamma;
    CovarianceReport report;
};

[[nodiscard]] inline CovarianceJets covariance_jets(const Frame& frame, const std::vector<PolyVec>& df) {
    const std::size_t d = df.size();
    CovarianceJets out;
    out.sigma.assign(d, PolyVec(d));
    Eigen::MatrixXd s(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) {
            out.sigma[r][c] = inner(frame, df[r], df[c]);
            if (c != r) out.sigma[c][r] = out.sigma[r][c];
            s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = out.sigma[r][c].value();
            s(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = out.sigma[r][c].value();
        }
    out.report = covariance_report(s);
    const auto& S = out.sigma;
    if (d == 1) {
        out.det = S[0][0];
    } else if (d == 2) {
        out.det = S[0][0] * S[1][1] - S[0][1] * S[1][0];
    } else if (d == 3) {
        out.det = S[0][0] * (S[1][1] * S[2][2] - S[1][2] * S[2][1]) - S[0][1] * (S[1][0] * S[2][2] - S[1][2] * S[2][0]) +
                  S[0][2] * (S[1][0] * S[2][1] - S[1][1] * S[2][0]);
    }
    if (out.report.degenerate) {
        if (d > 3) out.det = frame.constant(out.report.det);
        return out;
    }
    out.gamma.assign(d, PolyVec(d));
    if (d == 1) {
        out.gamma[0][0] = 1.0 / S[0][0];
    } else if (d == 2) {
        const TaylorPoly inv = 1.0 / out.det;
        out.gamma[0][0] = S[1][1] * inv;
        out.gamma[1][1] = S[0][0] * inv;
        out.gamma[0][1] = -(S[0][1] * inv);
        out.gamma[1][0] = out.gamma[0][1];
    } else if (d == 3) {
        const TaylorPoly inv = 1.0 / out.det;
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 3; ++c) {
                // gamma[r][c] = cofactor(c, r) / det
                const std::size_t r1 = (c + 1) % 3, r2 = (c + 2) % 3, c1 = (r + 1) % 3, c2 = (r + 2) % 3;
                out.gamma[r][c] = (S[r1][c1] * S[r2][c2] - S[r1][c2] * S[r2][c1]) * inv;
            }
    } else {
        std::vector<PolyVec> a = S;
        std::vector<PolyVec> inv(d, PolyVec(d, frame.constant(0.0)));
        for (std::size_t i = 0; i < d; ++i) inv[i][i] = frame.constant(1.0);
        TaylorPoly det = frame.constant(1.0);
        for (std::size_t col = 0; col < d; ++col) {
            std::size_t piv = col;
            for (std::size_t r = col + 1; r < d; ++r)
                if (std::abs(a[r][col].value()) > std::abs(a[piv][col].value())) piv = r;
            if (piv != col) {
                std::swap(a[piv], a[col]);
                std::swap(inv[piv], inv[col]);
                det = -det;
            }
            det = det * a[col][col];
            const TaylorPoly p = 1.0 / a[col][col];
            for (std::size_t c = 0; c < d; ++c) {
                a[col][c] = a[col][c] * p;
                inv[col][c] = inv[col][c] * p;
            }
            for (std::size_t r = 0; r < d; ++r) {
                if (r == col) continue;
                const TaylorPoly f = a[r][col];
                for (std::size_t c = 0; c < d; ++c) {
                    a[r][c] -= f * a[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
        out.det = det;
        out.gamma = std::move(inv);
    }
    return out;
}

// ============================================================================
// Monte Carlo Sobolev norms and diagnostics
// ============================================================================

/// Functionals compiled once for repeated per-sample evaluation.
class FunctionalSet {
public:
    FunctionalSet() = default;
    explicit FunctionalSet(std::vector<Expr> exprs) : exprs_(std::move(exprs)), program_(exprs_) {
        if (exprs_.empty()) throw ConfigurationError("at least one functional is required");
        std::set<std::size_t> s;
        for (const auto& e : exprs_) {
            const auto v = e.variables();
            s.insert(v.begin(), v.end());
        }
        variables_.assign(s.begin(), s.end());
    }

    [[nodiscard]] std::size_t dimension() const noexcept { return exprs_.size(); }
    [[nodiscard]] const std::vector<Expr>& exprs() const noexcept { return exprs_; }
    [[nodiscard]] const std::vector<std::size_t>& variables() const noexcept { return variables_; }
    [[nodiscard]] PolyVec evaluate(const Frame& frame) const { return eval_polys(program_, frame); }
    [[nodiscard]] std::vector<double> values(std::span<const double> v) const { return program_.run<double>(v, 0.0); }

private:
    std::vector<Expr> exprs_;
    Program program_;
    std::vector<std::size_t> variables_;
};

namespace detail {

inline std::vector<std::size_t> merge_active(const std::vector<std::size_t>& a, const std::set<std::size_t>& b) {
    std::set<std::size_t> s(a.begin(), a.end());
    s.insert(b.begin(), b.end());
    return {s.begin(), s.end()};
}

/// Path norms of a vector functional: tensor norms combined in Euclidean norm.
inline PathNorms vector_path_norms(const FramePtr& frame, const PolyVec& f, int l) {
    PathNorms out;
    out.tensor_norms.assign(static_cast<std::size_t>(l) + 1, 0.0);
    for (const auto& p : f) {
        const Jet j(frame, p);
        for (int k = 0; k <= l; ++k) {
            const double t = j.tensor_norm(k);
            out.tensor_norms[static_cast<std::size_t>(k)] += t * t;
        }
    }
    for (auto& t : out.tensor_norms) t = std::sqrt(t);
    for (int k = 1; k <= l; ++k) out.sobolev1 += out.tensor_norms[static_cast<std::size_t>(k)];
    out.sobolev = out.tensor_norms[0] + out.sobolev1;
    return out;
}

}  // namespace detail

struct SobolevEstimate {
    Estimate norm;    // ||F||_{l,p,Theta}, with ||F||^p = ||F||_p^p + ||F||_{1,l,p}^p
    Estimate norm1;   // ||F||_{1,l,p,Theta}
    Estimate lp;      // ||F||_{p,Theta}
    std::size_t nonfinite = 0;
};

[[nodiscard]] inline SobolevEstimate sobolev_norm_mc(const NoiseSpec& noise, const FunctionalSet& f, int l, int p,
                                                     const Localizer& theta, const McSettings& mc) {
    if (p < 1) throw ConfigurationError("p must be a positive integer");
    if (mc.samples < 2) throw ConfigurationError("at least two samples are required");
    const auto active = detail::merge_active(f.variables(), theta.spec().variables());
    const int order = std::max(l, 0);
    const auto res = mc_moments(mc, 0x5b0u, 3, [&](RandomStream& rng, std::span<double> out) {
        const auto v = noise.sample(rng);
        const FramePtr frame = make_frame(noise, v, active, order);
        const double th = theta.trivial() ? 1.0 : theta.evaluate(*frame).theta.value();
        if (th <= 0.0) return;
        const PathNorms pn = detail::vector_path_norms(frame, f.evaluate(*frame), l);
        out[0] = th * std::pow(pn.tensor_norms[0], p);
        out[1] = th * std::pow(pn.sobolev1, p);
        out[2] = out[0] + out[1];
    });
    SobolevEstimate e;
    e.lp = pth_root(res.mean_over_all(0), res.stderr_over_all(0), p);
    e.norm1 = pth_root(res.mean_over_all(1), res.stderr_over_all(1), p);
    e.norm = pth_root(res.mean_over_all(2), res.stderr_over_all(2), p);
    for (auto c : res.nonfinite) e.nonfinite += c;
    if (e.nonfinite > 0) throw EstimatorFailure("Sobolev norm estimate", e.nonfinite);
    return e;
}

struct DiagnosticsReport {
    Estimate S;         // max(1, ||(det sigma)^-1||_{p,Theta})
    Estimate Q;         // 1 + ||F||_{1,q,p,Theta} + ||LF||_{q-2,p,Theta}
    Estimate Q_pair;    // Q_{F,Fbar,Theta}(q,p) when Fbar is given
    Estimate m;         // m_{q,p}(Theta)
    Estimate U;         // max(1, E_Theta(det^-p) (||F||_{1,q+2,p,Theta} + ||LF||_{q,p,Theta}))
    Estimate theta_mass;
    bool unbounded = false;   // det sigma vanished on a localized sample
    std::size_t degenerate = 0;
    std::size_t samples = 0;
};

namespace detail {

/// Norms needed by the diagnostics for one functional on one sample.
/// Returns {|F|_{1,q}^p, |LF|_{q-2}^p, |F|_{1,q+2}^p, |LF|_q^p}.
inline std::array<double, 4> diagnostic_terms(const FramePtr& frame, const PolyVec& f, int q, int p) {
    PolyVec lf;
    for (const auto& x : f) lf.push_back(ou_operator(*frame, x));
    const auto nf = vector_path_norms(frame, f, q + 2);
    const auto nl = vector_path_norms(frame, lf, q);
    double f1q = 0.0, lq2 = 0.0, lq = 0.0;
    for (int k = 1; k <= q; ++k) f1q += nf.tensor_norms[static_cast<std::size_t>(k)];
    for (int k = 0; k <= q - 2; ++k) lq2 += nl.tensor_norms[static_cast<std::size_t>(k)];
    for (int k = 0; k <= q; ++k) lq += nl.tensor_norms[static_cast<std::size_t>(k)];
    return {std::pow(f1q, p), std::pow(lq2, p), std::pow(nf.sobolev1, p), std::pow(lq, p)};
}

}  // namespace detail

/// S, Q, m, U of the density bounds, all from one shared sample set.
[[nodiscard]] inline DiagnosticsReport diagnostics(const NoiseSpec& noise, const FunctionalSet& f,
                                                   const FunctionalSet* fbar, const LocalizationSpec& theta_spec,
                                                   int q, int p, const McSettings& mc) {
    if (q < 2) throw ConfigurationError("diagnostics need q >= 2");
    if (p < 1) throw ConfigurationError("p must be a positive integer");
    if (mc.samples < 2) throw ConfigurationError("at least two samples are required");
    const Localizer theta(theta_spec);
    auto active = detail::merge_active(f.variables(), theta_spec.variables());
    if (fbar) active = detail::merge_active(active, std::set<std::size_t>(fbar->variables().begin(), fbar->variables().end()));
    const int order = q + 2;
    // columns: theta, theta det^-p, |F|_{1,q}^p, |LF|_{q-2}^p, |F|_{1,q+2}^p, |LF|_q^p,
    //          Fbar: |.|_{1,q}^p, |L.|_{q-2}^p, theta |ln theta|_{1,q}^p, degenerate, unbounded
    const auto res = mc_moments(mc, 0xd1a6u, 11, [&](RandomStream& rng, std::span<double> out) {
        const auto v = noise.sample(rng);
        const FramePtr frame = make_frame(noise, v, active, order);
        const ThetaSample th = theta.evaluate(*frame);
        const double t = th.theta.value();
        out[0] = t;
        if (t <= 0.0) return;
        const PolyVec fv = f.evaluate(*frame);
        std::vector<PolyVec> df;
        for (const auto& x : fv) df.push_back(malliavin_derivative(*frame, x));
        const auto rep = covariance_jets(*frame, df).report;
        out[9] = rep.degenerate ? 1.0 : 0.0;
        if (rep.det > 0.0) out[1] = t * std::pow(rep.det, -p);
        else out[10] = 1.0;
        const auto a = detail::diagnostic_terms(frame, fv, q, p);
        for (int k = 0; k < 4; ++k) out[2 + static_cast<std::size_t>(k)] = t * a[static_cast<std::size_t>(k)];
        if (fbar) {
            const auto b = detail::diagnostic_terms(frame, fbar->evaluate(*frame), q, p);
            out[6] = t * b[0];
            out[7] = t * b[1];
        }
        if (th.log_theta) out[8] = t * std::pow(path_norms(Jet(frame, *th.log_theta), q).sobolev1, p);
    });
    DiagnosticsReport r;
    r.samples = res.samples;
    r.theta_mass = {res.mean_over_all(0), res.stderr_over_all(0)};
    r.degenerate = static_cast<std::size_t>(std::llround(res.moments[9].sum()));
    r.unbounded = res.moments[10].sum() > 0.0 || res.nonfinite[1] > 0;
    auto root = [&](std::size_t c) { return pth_root(res.mean_over_all(c), res.stderr_over_all(c), p); };
    const Estimate inv_det = root(1);
    const double inf = std::numeric_limits<double>::infinity();
    r.S = r.unbounded ? Estimate{inf, 0.0}
                      : Estimate{std::max(1.0, inv_det.value), inv_det.value > 1.0 ? inv_det.std_error : 0.0};
    const Estimate f1q = root(2), lq2 = root(3), f1q2 = root(4), lq = root(5);
    r.Q = {1.0 + f1q.value + lq2.value, f1q.std_error + lq2.std_error};
    if (fbar) {
        const Estimate b1 = root(6), b2 = root(7);
        r.Q_pair = {r.Q.value + b1.value + b2.value, r.Q.std_error + b1.std_error + b2.std_error};
    }
    const Estimate lnorm = root(8);
    r.m = {std::max(1.0, lnorm.value), lnorm.value > 1.0 ? lnorm.std_error : 0.0};
    if (r.unbounded) {
        r.U = {inf, 0.0};
    } else {
        const double e = res.mean_over_all(1), e_se = res.stderr_over_all(1);
        const double s = f1q2.value + lq.value, s_se = f1q2.std_error + lq.std_error;
        const double u = e * s;
        r.U = {std::max(1.0, u), u > 1.0 ? e_se * s + e * s_se : 0.0};
    }
    return r;
}

}  // namespace mkit
