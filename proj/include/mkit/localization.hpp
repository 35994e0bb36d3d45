#pragma once

// Composite localizers Theta = prod psi_{a_i}(Theta_i) * prod phi_{a_i}(Theta_i).
//
// ln Theta is always assembled as the sum of the logs of its factors, so it
// stays accurate where Theta itself underflows.

#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "mkit/bumps.hpp"
#include "mkit/expr.hpp"
#include "mkit/functional.hpp"
#include "mkit/montecarlo.hpp"
#include "mkit/noise.hpp"

namespace mkit {

enum class BumpKind { Psi, Phi };

struct LocalizationTerm {
    Expr statistic;
    BumpKind kind = BumpKind::Psi;
    double radius = 1.0;
};

struct LocalizationSpec {
    std::vector<LocalizationTerm> terms;

    [[nodiscard]] bool trivial() const noexcept { return terms.empty(); }
    [[nodiscard]] std::set<std::size_t> variables() const {
        std::set<std::size_t> s;
        for (const auto& t : terms) {
            const auto v = t.statistic.variables();
            s.insert(v.begin(), v.end());
        }
        return s;
    }
};

struct ThetaSample {
    TaylorPoly theta;
    std::optional<TaylorPoly> log_theta;  // absent where Theta = 0
    std::vector<TaylorPoly> statistics;
};

[[nodiscard]] inline double bump(BumpKind kind, double a, double x) {
    return kind == BumpKind::Psi ? psi_bump(a, x) : phi_bump(a, x);
}

/// Theta and ln Theta from already evaluated statistics.
[[nodiscard]] inline ThetaSample theta_from_statistics(const LocalizationSpec& spec, std::vector<TaylorPoly> stats,
                                                       const TaylorPoly& one) {
    ThetaSample out{one, one * 0.0, std::move(stats)};
    for (std::size_t i = 0; i < spec.terms.size(); ++i) {
        const auto& t = spec.terms[i];
        const TaylorPoly& s = out.statistics[i];
        const double v = t.kind == BumpKind::Psi ? psi_bump(t.radius, s.value()) : phi_bump(t.radius, s.value());
        out.theta = out.theta * (t.kind == BumpKind::Psi ? psi_bump(t.radius, s) : phi_bump(t.radius, s));
        if (v <= 0.0) {
            out.log_theta.reset();
        } else if (out.log_theta) {
            *out.log_theta += t.kind == BumpKind::Psi ? log_psi(t.radius, s) : log_phi(t.radius, s);
        }
    }
    return out;
}

/// A localization spec with its statistics compiled once.
class Localizer {
public:
    Localizer() = default;
    explicit Localizer(LocalizationSpec spec) : spec_(std::move(spec)) {
        std::vector<Expr> stats;
        for (const auto& t : spec_.terms) {
            if (!(t.radius > 0.0)) throw ConfigurationError("localization radius must be positive");
            stats.push_back(t.statistic);
        }
        program_ = Program(stats);
    }

    [[nodiscard]] const LocalizationSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] bool trivial() const noexcept { return spec_.trivial(); }

    [[nodiscard]] ThetaSample evaluate(const Frame& frame) const {
        std::vector<TaylorPoly> stats;
        if (!trivial()) stats = eval_polys(program_, frame);
        return theta_from_statistics(spec_, std::move(stats), frame.constant(1.0));
    }

    /// Theta at a noise point, without derivatives.
    [[nodiscard]] double value(std::span<const double> v) const {
        if (trivial()) return 1.0;
        const auto stats = program_.run<double>(v, 0.0);
        double th = 1.0;
        for (std::size_t i = 0; i < stats.size(); ++i) th *= bump(spec_.terms[i].kind, spec_.terms[i].radius, stats[i]);
        return th;
    }

private:
    LocalizationSpec spec_;
    Program program_;
};

/// m_{q,p}(Theta) = 1 v ||ln Theta||_{1,q,p,Theta} next to the bound term
/// sum_i a_i^-q ||Theta_i||_{1,q,p,Theta}.
struct MqpEstimate {
    Estimate m;
    Estimate log_norm;   // ||ln Theta||_{1,q,p,Theta}
    Estimate bound_sum;  // sum_i a_i^-q ||Theta_i||_{1,q,p,Theta}
    Estimate theta_mass; // E Theta
};

[[nodiscard]] inline MqpEstimate m_qp_estimate(const LocalizationSpec& spec, const NoiseSpec& noise, int q, int p,
                                               const McSettings& mc) {
    if (q < 1 || p < 1) throw ConfigurationError("m_{q,p} needs q >= 1 and p >= 1");
    MqpEstimate out;
    if (spec.trivial()) {
        out.m = {1.0, 0.0};
        out.theta_mass = {1.0, 0.0};
        return out;
    }
    const Localizer loc(spec);
    const auto vars = spec.variables();
    const std::vector<std::size_t> active(vars.begin(), vars.end());
    const std::size_t nt = spec.terms.size();
    // columns: Theta |ln Theta|_{1,q}^p, Theta, Theta |Theta_i|_{1,q}^p ...
    const auto res = mc_moments(mc, 0x6d71u, 2 + nt, [&](RandomStream& rng, std::span<double> out) {
        const auto v = noise.sample(rng);
        const FramePtr frame = make_frame(noise, v, active, q);
        const ThetaSample th = loc.evaluate(*frame);
        const double t = th.theta.value();
        out[1] = t;
        if (t <= 0.0) return;
        out[0] = t * std::pow(path_norms(Jet(frame, *th.log_theta), q).sobolev1, p);
        for (std::size_t i = 0; i < nt; ++i)
            out[2 + i] = t * std::pow(path_norms(Jet(frame, th.statistics[i]), q).sobolev1, p);
    });
    out.log_norm = pth_root(res.mean_over_all(0), res.stderr_over_all(0), p);
    out.m = {std::max(1.0, out.log_norm.value), out.log_norm.value > 1.0 ? out.log_norm.std_error : 0.0};
    out.theta_mass = {res.mean_over_all(1), res.stderr_over_all(1)};
    for (std::size_t i = 0; i < nt; ++i) {
        const Estimate e = pth_root(res.mean_over_all(2 + i), res.stderr_over_all(2 + i), p);
        const double w = std::pow(spec.terms[i].radius, -q);
        out.bound_sum.value += w * e.value;
        out.bound_sum.std_error += w * e.std_error;
    }
    return out;
}

}  // namespace mkit
