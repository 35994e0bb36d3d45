#pragma once

// Integration-by-parts weights.
//
//   H_r(F, G)           = sum_r' delta(G gamma^{r'r} DF^{r'})
//                       = G delta(W^r) - <DG, W^r>,   W^r = sum_r' gamma^{r'r} DF^{r'}
//   H_(b1..bq)(F, G)    = H_b1(F, H_(b2..bq)(F, G))
//   H_{r,Theta}(F, G)   = H_r(F, G) - G <D ln Theta, W^r>
//
// so that E(Theta d_beta phi(F) G) = E(Theta phi(F) H_{beta,Theta}(F, G)).
// Every level of the recursion consumes one jet order: with F known to order
// K, H^q has order K - 1 - q.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mkit/errors.hpp"
#include "mkit/functional.hpp"
#include "mkit/localization.hpp"
#include "mkit/malliavin.hpp"
#include "mkit/montecarlo.hpp"

namespace mkit {

/// Per-sample state shared by every weight computed for one F.
class IbpContext {
public:
    /// `theta` may be null (no localization).
    IbpContext(FramePtr frame, PolyVec f, const ThetaSample* theta = nullptr)
        : frame_(std::move(frame)), f_(std::move(f)) {
        const Frame& fr = *frame_;
        for (const auto& x : f_) df_.push_back(malliavin_derivative(fr, x));
        cov_ = covariance_jets(fr, df_);
        if (cov_.report.degenerate) return;
        const std::size_t d = f_.size();
        for (std::size_t r = 0; r < d; ++r) {
            PolyVec w;
            for (std::size_t i = 0; i < fr.nvars(); ++i) {
                TaylorPoly s = cov_.gamma[0][r] * df_[0][i];
                for (std::size_t rp = 1; rp < d; ++rp) s += cov_.gamma[rp][r] * df_[rp][i];
                w.push_back(std::move(s));
            }
            w_.push_back(std::move(w));
        }
        if (theta && theta->log_theta) {
            const PolyVec dl = malliavin_derivative(fr, *theta->log_theta);
            for (std::size_t r = 0; r < d; ++r) log_corr_.push_back(inner(fr, dl, w_[r]));
        }
    }

    [[nodiscard]] const FramePtr& frame() const noexcept { return frame_; }
    [[nodiscard]] const PolyVec& functionals() const noexcept { return f_; }
    [[nodiscard]] const std::vector<PolyVec>& derivatives() const noexcept { return df_; }
    [[nodiscard]] const CovarianceJets& covariance() const noexcept { return cov_; }
    [[nodiscard]] bool degenerate() const noexcept { return cov_.report.degenerate; }
    [[nodiscard]] bool localized() const noexcept { return !log_corr_.empty(); }
    [[nodiscard]] std::size_t dimension() const noexcept { return f_.size(); }

    /// H_r(F, G) (localized when the context carries ln Theta), as delta(G W^r).
    [[nodiscard]] TaylorPoly weight(std::size_t r, const TaylorPoly& g) const {
        check(r);
        PolyVec u;
        u.reserve(frame_->nvars());
        for (const auto& w : w_[r]) u.push_back(g * w);
        TaylorPoly h = divergence(*frame_, u);
        if (localized()) h -= g * log_corr_[r];
        return h;
    }

    /// Same weight through G delta(W^r) - <DG, W^r>.
    [[nodiscard]] TaylorPoly weight_expanded(std::size_t r, const TaylorPoly& g) const {
        check(r);
        TaylorPoly h = g * divergence(*frame_, w_[r]) - inner(*frame_, malliavin_derivative(*frame_, g), w_[r]);
        if (localized()) h -= g * log_corr_[r];
        return h;
    }

    /// H^q_beta(F, G), composed right to left.
    [[nodiscard]] TaylorPoly weight(std::span<const std::size_t> beta, TaylorPoly g) const {
        if (beta.empty()) return g;
        const int need = static_cast<int>(beta.size());
        if (g.order() < need) throw ConfigurationError("insufficient jet order for a weight of order " + std::to_string(need));
        for (std::size_t k = beta.size(); k-- > 0;) g = weight(beta[k], g);
        return g;
    }

private:
    void check(std::size_t r) const {
        if (degenerate()) throw DomainError("degenerate covariance: localize before computing weights");
        if (r >= f_.size()) throw ConfigurationError("weight index outside the dimension of F");
    }

    FramePtr frame_;
    PolyVec f_;
    std::vector<PolyVec> df_;
    CovarianceJets cov_;
    std::vector<PolyVec> w_;
    PolyVec log_corr_;
};

struct WeightSample {
    std::vector<std::size_t> beta;
    std::optional<Jet> weight;  // absent when degenerate
    bool degenerate = false;
};

[[nodiscard]] inline WeightSample h_weight_multi(const IbpContext& ctx, std::vector<std::size_t> beta,
                                                 const TaylorPoly& g) {
    WeightSample s;
    s.beta = std::move(beta);
    s.degenerate = ctx.degenerate();
    if (!s.degenerate) s.weight = Jet(ctx.frame(), ctx.weight(s.beta, g));
    return s;
}

[[nodiscard]] inline WeightSample h_weight(const IbpContext& ctx, std::size_t r, const TaylorPoly& g) {
    return h_weight_multi(ctx, {r}, g);
}

// ============================================================================
// Pathwise bound quantities
// ============================================================================

struct BoundReport {
    double m_F = 1.0;
    double A = 0.0;             // A_{l+q}(F)
    double weight_norm = 0.0;   // |H^q_beta(F, G)|_l
    double g_norm = 0.0;        // |G|_{l+q}
    double ratio = 0.0;         // |H|_l / (A_{l+q}^q |G|_{l+q})
    bool degenerate = false;
};

/// A_l(F) = m_F^{l+1} (1 + |F|_{1,l+1}^{2d(l+2)} + |LF|_{l-1}^2).
[[nodiscard]] inline double a_bound(const IbpContext& ctx, int l) {
    const auto& fr = ctx.frame();
    const double d = static_cast<double>(ctx.dimension());
    const auto nf = detail::vector_path_norms(fr, ctx.functionals(), l + 1);
    double lf = 0.0;
    if (l >= 1) {
        PolyVec lv;
        for (const auto& x : ctx.functionals()) lv.push_back(ou_operator(*fr, x));
        lf = detail::vector_path_norms(fr, lv, l - 1).sobolev;
    }
    return std::pow(ctx.covariance().report.m_F, l + 1) * (1.0 + std::pow(nf.sobolev1, 2.0 * d * (l + 2)) + lf * lf);
}

/// Requires F to order l + q + 1.
[[nodiscard]] inline BoundReport bound_report(const IbpContext& ctx, const TaylorPoly& g,
                                              std::span<const std::size_t> beta, int l) {
    BoundReport b;
    b.degenerate = ctx.degenerate();
    b.m_F = ctx.covariance().report.m_F;
    if (b.degenerate) return b;
    const int q = static_cast<int>(beta.size());
    b.A = a_bound(ctx, l + q);
    b.weight_norm = path_norms(Jet(ctx.frame(), ctx.weight(beta, g)), l).sobolev;
    b.g_norm = path_norms(Jet(ctx.frame(), g), l + q).sobolev;
    b.ratio = b.weight_norm / (std::pow(b.A, q) * b.g_norm);
    return b;
}

// ============================================================================
// Monte Carlo self-tests
// ============================================================================

struct SelfTestResult {
    std::string name;
    Estimate lhs;
    Estimate rhs;
    Estimate difference;  // paired, per sample
    double z = 0.0;
    std::size_t degenerate = 0;
    std::size_t samples = 0;
    bool warning = false;  // more than 1% of localized samples degenerate

    [[nodiscard]] bool passed(double threshold) const { return std::isfinite(z) && std::abs(z) < threshold; }
};

namespace detail {

inline SelfTestResult finish_selftest(std::string name, const McMoments& res) {
    SelfTestResult r;
    r.name = std::move(name);
    r.samples = res.samples;
    r.lhs = {res.mean_over_all(0), res.stderr_over_all(0)};
    r.rhs = {res.mean_over_all(1), res.stderr_over_all(1)};
    r.difference = {res.mean_over_all(2), res.stderr_over_all(2)};
    r.degenerate = static_cast<std::size_t>(std::llround(res.moments[3].sum()));
    const double d = r.difference.value, se = r.difference.std_error;
    r.z = se > 0.0 ? d / se : (d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    r.warning = r.degenerate * 100 > r.samples;
    for (auto c : res.nonfinite)
        if (c > 0) r.z = std::numeric_limits<double>::infinity();
    return r;
}

/// d_beta phi at the point F (phi uses variable r for F^r).
inline double phi_derivative(const Program& phi, std::span<const double> f, std::span<const std::size_t> beta) {
    const int q = static_cast<int>(beta.size());
    const auto space = TaylorSpace::get(f.size(), q);
    std::vector<TaylorPoly> vars;
    for (std::size_t r = 0; r < f.size(); ++r) vars.push_back(TaylorPoly::variable(space, r, f[r]));
    const TaylorPoly p = phi.run<TaylorPoly>(vars, vars.empty() ? TaylorPoly::constant(space, 0.0) : vars[0]).front();
    if (beta.empty()) return p.value();
    std::vector<std::uint32_t> m(beta.begin(), beta.end());
    return p.partial(space->index_of(m));
}

}  // namespace detail

/// Both sides of E_Theta(d_beta phi(F) G) = E_Theta(phi(F) H^q_{beta,Theta}(F, G)).
[[nodiscard]] inline SelfTestResult ibp_selftest(const NoiseSpec& noise, const FunctionalSet& f, const Expr& g,
                                                 const Expr& phi, std::vector<std::size_t> beta,
                                                 const LocalizationSpec& theta_spec, const McSettings& mc,
                                                 std::string name = "ibp") {
    const Localizer theta(theta_spec);
    const Program g_prog(g);
    const Program phi_prog(phi);
    for (auto b : beta)
        if (b >= f.dimension()) throw ConfigurationError("multi-index entry outside the dimension of F");
    if (phi_prog.arity() > f.dimension()) throw ConfigurationError("test function uses more variables than F has");
    auto active = detail::merge_active(f.variables(), theta_spec.variables());
    active = detail::merge_active(active, g.variables());
    const int order = static_cast<int>(beta.size()) + 1;
    const auto res = mc_moments(mc, 0x1b9u, 4, [&](RandomStream& rng, std::span<double> out) {
        const auto v = noise.sample(rng);
        const FramePtr frame = make_frame(noise, v, active, order);
        const ThetaSample th = theta.evaluate(*frame);
        const double t = th.theta.value();
        if (t <= 0.0) return;
        const IbpContext ctx(frame, f.evaluate(*frame), theta.trivial() ? nullptr : &th);
        if (ctx.degenerate()) {
            out[3] = 1.0;
            return;
        }
        const TaylorPoly gp = eval_polys(g_prog, *frame).front();
        std::vector<double> fv;
        for (const auto& x : ctx.functionals()) fv.push_back(x.value());
        const double lhs = t * detail::phi_derivative(phi_prog, fv, beta) * gp.value();
        const double rhs = t * phi_prog.run<double>(fv, 0.0).front() * ctx.weight(beta, gp).value();
        out[0] = lhs;
        out[1] = rhs;
        out[2] = lhs - rhs;
    });
    return detail::finish_selftest(std::move(name), res);
}

/// Both sides of E<DF, U>_J = E(F delta(U)); u[i] is the entry on coordinate i.
[[nodiscard]] inline SelfTestResult duality_selftest(const NoiseSpec& noise, const Expr& f, const std::vector<Expr>& u,
                                                     const McSettings& mc, std::string name = "duality") {
    if (u.size() != noise.size()) throw ConfigurationError("simple process must have one entry per coordinate");
    std::vector<Expr> all{f};
    all.insert(all.end(), u.begin(), u.end());
    const Program prog(all);
    std::vector<std::size_t> active(noise.size());
    for (std::size_t i = 0; i < active.size(); ++i) active[i] = i;
    const auto res = mc_moments(mc, 0xd0a1u, 4, [&](RandomStream& rng, std::span<double> out) {
        const auto v = noise.sample(rng);
        const FramePtr frame = make_frame(noise, v, active, 1);
        auto polys = eval_polys(prog, *frame);
        const TaylorPoly fp = polys[0];
        const PolyVec up(polys.begin() + 1, polys.end());
        const double lhs = inner(*frame, malliavin_derivative(*frame, fp), up).value();
        const double rhs = fp.value() * divergence(*frame, up).value();
        out[0] = lhs;
        out[1] = rhs;
        out[2] = lhs - rhs;
    });
    return detail::finish_selftest(std::move(name), res);
}

}  // namespace mkit
