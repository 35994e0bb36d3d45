#pragma once

// The basic noise vector V = (V_1, ..., V_J): an independent product of
// one-dimensional laws, each paired with a weight pi_i used by the derivative
// D_i F = pi_i(V) d_i f(V).

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "mkit/bumps.hpp"
#include "mkit/errors.hpp"
#include "mkit/expr.hpp"
#include "mkit/random.hpp"
#include "mkit/series.hpp"
#include "mkit/taylor.hpp"

namespace mkit {

struct GaussianLaw {
    double mean = 0.0;
    double variance = 1.0;
};

struct ExponentialLaw {
    double rate = 1.0;
};

/// Density proportional to exp(log_density(v)) on (lo, hi), both finite.
/// Expressions use variable 0 for v; the gradient is supplied analytically.
struct TruncatedSmoothLaw {
    Expr log_density;
    Expr log_density_grad;
    double lo = 0.0;
    double hi = 1.0;
};

/// A coordinate sampled by its owner (jump marks); only the log-density
/// gradient on the open support is needed by the calculus.
struct ExternalLaw {
    Expr log_density_grad;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
};

using ComponentLaw = std::variant<GaussianLaw, ExponentialLaw, TruncatedSmoothLaw, ExternalLaw>;

struct ConstantWeight {
    double value = 1.0;
};

/// 1 for |v - center| <= inner, 0 for |v - center| >= outer, C^inf between.
struct SmoothCutoffWeight {
    double center = 0.0;
    double inner = 1.0;
    double outer = 2.0;
};

using WeightSpec = std::variant<ConstantWeight, SmoothCutoffWeight>;

struct NoiseComponent {
    ComponentLaw law;
    WeightSpec weight;
};

inline constexpr std::size_t kMaxNoiseDimension = 1u << 16;

[[nodiscard]] inline double support_lo(const ComponentLaw& law) {
    return std::visit(
        [](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, GaussianLaw>) return -std::numeric_limits<double>::infinity();
            else if constexpr (std::is_same_v<L, ExponentialLaw>) return 0.0;
            else return l.lo;
        },
        law);
}

[[nodiscard]] inline double support_hi(const ComponentLaw& law) {
    return std::visit(
        [](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, GaussianLaw> || std::is_same_v<L, ExponentialLaw>)
                return std::numeric_limits<double>::infinity();
            else return l.hi;
        },
        law);
}

namespace detail {

/// Series of a one-variable expression around v (variable 0).
inline Series univariate_series(const Program& prog, double v, int order) {
    const auto space = TaylorSpace::get(1, order);
    const TaylorPoly x = TaylorPoly::variable(space, 0, v);
    const std::vector<TaylorPoly> vars{x};
    const TaylorPoly r = prog.run<TaylorPoly>(vars, x).front();
    Series s(order);
    for (int k = 0; k <= std::min(order, r.order()); ++k) s[static_cast<std::size_t>(k)] = r.coeff(static_cast<std::size_t>(k));
    return s;
}

/// Maximum of exp(log_density) over a fine grid, padded, as a rejection envelope.
inline double envelope_log_max(const Program& logp, double lo, double hi) {
    constexpr int kGrid = 2049;
    double m = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGrid; ++i) {
        const double v = lo + (hi - lo) * (i + 0.5) / kGrid;
        const double x[1] = {v};
        m = std::max(m, logp.eval(x));
    }
    return m + std::log(1.25);
}

}  // namespace detail

class NoiseSpec {
public:
    NoiseSpec() = default;
    explicit NoiseSpec(std::vector<NoiseComponent> components) : components_(std::move(components)) { validate(); }

    [[nodiscard]] std::size_t size() const noexcept { return components_.size(); }
    [[nodiscard]] const NoiseComponent& component(std::size_t i) const { return components_.at(i); }
    [[nodiscard]] const std::vector<NoiseComponent>& components() const noexcept { return components_; }

    /// Negative control: flip the sign of every log-density gradient.
    [[nodiscard]] bool flipped() const noexcept { return flip_; }
    [[nodiscard]] NoiseSpec with_flipped_log_gradient(bool flip = true) const {
        NoiseSpec s = *this;
        s.flip_ = flip;
        return s;
    }

    [[nodiscard]] bool constant_weights() const noexcept {
        for (const auto& c : components_)
            if (!std::holds_alternative<ConstantWeight>(c.weight)) return false;
        return true;
    }

    [[nodiscard]] bool in_support(std::size_t i, double v) const {
        const auto& law = components_.at(i).law;
        return v > support_lo(law) && v < support_hi(law);
    }

    /// Series of d/dv ln p_i around v.
    [[nodiscard]] Series log_density_grad_series(std::size_t i, double v, int order) const {
        if (!in_support(i, v)) throw DomainError("coordinate " + std::to_string(i) + " outside its support");
        const double sign = flip_ ? -1.0 : 1.0;
        Series s = std::visit(
            [&](const auto& l) -> Series {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, GaussianLaw>) {
                    Series g = Series::variable(order, v);
                    return (-1.0 / l.variance) * (g + (-l.mean));
                } else if constexpr (std::is_same_v<L, ExponentialLaw>) {
                    return Series(order, -l.rate);
                } else {
                    return detail::univariate_series(grad_programs_[i], v, order);
                }
            },
            components_[i].law);
        return sign * s;
    }

    [[nodiscard]] double log_density_grad(std::size_t i, double v) const { return log_density_grad_series(i, v, 0)[0]; }

    /// Series of pi_i around v.
    [[nodiscard]] Series weight_series(std::size_t i, double v, int order) const {
        return std::visit(
            [&](const auto& w) -> Series {
                using W = std::decay_t<decltype(w)>;
                if constexpr (std::is_same_v<W, ConstantWeight>) {
                    return Series(order, w.value);
                } else {
                    const double s = v - w.center;
                    Series c = cutoff_series(w.inner, w.outer, std::abs(s), order);
                    if (s < 0.0) detail::flip_odd(c);
                    return c;
                }
            },
            components_.at(i).weight);
    }

    [[nodiscard]] double weight(std::size_t i, double v) const { return weight_series(i, v, 0)[0]; }

    [[nodiscard]] double sample_component(std::size_t i, RandomStream& rng) const {
        return std::visit(
            [&](const auto& l) -> double {
                using L = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<L, GaussianLaw>) {
                    return rng.normal(l.mean, std::sqrt(l.variance));
                } else if constexpr (std::is_same_v<L, ExponentialLaw>) {
                    return rng.exponential(l.rate);
                } else if constexpr (std::is_same_v<L, TruncatedSmoothLaw>) {
                    const Program& lp = log_programs_[i];
                    const double env = envelopes_[i];
                    for (int it = 0; it < 1000000; ++it) {
                        const double x[1] = {rng.uniform(l.lo, l.hi)};
                        const double lv = lp.eval(x);
                        if (lv > env) throw ModelViolation("rejection envelope exceeded for component " + std::to_string(i));
                        if (std::log(rng.uniform()) < lv - env) return x[0];
                    }
                    throw ModelViolation("rejection sampler exceeded its iteration cap");
                } else {
                    throw ConfigurationError("component " + std::to_string(i) + " is sampled by its owner");
                }
            },
            components_[i].law);
    }

    [[nodiscard]] std::vector<double> sample(RandomStream& rng) const {
        std::vector<double> v(components_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = sample_component(i, rng);
        return v;
    }

private:
    void validate() {
        if (components_.empty()) throw ConfigurationError("noise spec needs at least one component");
        if (components_.size() > kMaxNoiseDimension) throw ResourceError("noise dimension exceeds cap");
        grad_programs_.resize(components_.size());
        log_programs_.resize(components_.size());
        envelopes_.assign(components_.size(), 0.0);
        for (std::size_t i = 0; i < components_.size(); ++i) {
            const auto& c = components_[i];
            const double lo = support_lo(c.law), hi = support_hi(c.law);
            if (!(lo < hi)) throw ConfigurationError("empty support for component " + std::to_string(i));
            if (const auto* g = std::get_if<GaussianLaw>(&c.law); g && !(g->variance > 0.0))
                throw ConfigurationError("gaussian variance must be positive");
            if (const auto* e = std::get_if<ExponentialLaw>(&c.law); e && !(e->rate > 0.0))
                throw ConfigurationError("exponential rate must be positive");
            if (const auto* t = std::get_if<TruncatedSmoothLaw>(&c.law)) {
                if (!std::isfinite(t->lo) || !std::isfinite(t->hi))
                    throw ConfigurationError("truncated law needs a finite support");
                grad_programs_[i] = Program(t->log_density_grad);
                log_programs_[i] = Program(t->log_density);
                envelopes_[i] = detail::envelope_log_max(log_programs_[i], t->lo, t->hi);
            }
            if (const auto* x = std::get_if<ExternalLaw>(&c.law)) grad_programs_[i] = Program(x->log_density_grad);
            if (const auto* w = std::get_if<ConstantWeight>(&c.weight); w && !(w->value > 0.0 && w->value <= 1.0))
                throw ConfigurationError("constant weight must lie in (0, 1]");
            if (const auto* w = std::get_if<SmoothCutoffWeight>(&c.weight)) {
                if (!(w->inner >= 0.0 && w->outer > w->inner))
                    throw ConfigurationError("cutoff weight needs 0 <= inner < outer");
                // {pi > 0} must sit inside the support.
                if (!(w->center - w->outer >= lo && w->center + w->outer <= hi))
                    throw ConfigurationError("cutoff weight not contained in the support of component " +
                                             std::to_string(i));
            }
        }
    }

    std::vector<NoiseComponent> components_;
    std::vector<Program> grad_programs_;
    std::vector<Program> log_programs_;
    std::vector<double> envelopes_;
    bool flip_ = false;
};

/// Dyadic Brownian increments: J = N 2^n Gaussian coordinates of variance
/// 2^-n with constant weight 2^{-n/2}, ordered driver-major.
[[nodiscard]] inline NoiseSpec brownian_grid_spec(std::size_t drivers, unsigned level,
                                                  std::size_t cap = kMaxNoiseDimension) {
    if (drivers < 1) throw ConfigurationError("brownian grid needs at least one driver");
    if (level > 30) throw ResourceError("dyadic level too large");
    const std::size_t per = std::size_t{1} << level;
    if (drivers * per > cap) throw ResourceError("brownian grid exceeds the dimension cap");
    const double h = std::ldexp(1.0, -static_cast<int>(level));
    std::vector<NoiseComponent> comps(drivers * per, NoiseComponent{GaussianLaw{0.0, h}, ConstantWeight{std::sqrt(h)}});
    return NoiseSpec(std::move(comps));
}

/// J independent copies of one component.
[[nodiscard]] inline NoiseSpec iid_spec(std::size_t J, const NoiseComponent& c) {
    return NoiseSpec(std::vector<NoiseComponent>(J, c));
}

[[nodiscard]] inline NoiseSpec standard_gaussian_spec(std::size_t J) {
    return iid_spec(J, NoiseComponent{GaussianLaw{}, ConstantWeight{1.0}});
}

}  // namespace mkit
