#pragma once

// Simple functionals F = f(V) and their weighted derivative jets.
//
// A Frame fixes one noise sample: the active coordinates (the ones the
// functionals touch), a Taylor space over them, and the weights pi_i and log
// density gradients as polynomials in the local variables. Every functional
// evaluated in the frame is a TaylorPoly; a Jet pairs one with its frame.
//
// Because pi_i depends on v_i only, the operators pi_i d_i and pi_j d_j
// commute for i != j, so D^(k)F is symmetric in its indices even for
// non-constant weights. Tensors are therefore addressed by multisets and the
// entry for a multiset with counts m_j is
//   D_m F = sum_{s <= m} prod_j c_{m_j, s_j}(v_j) d^s f(v),
// where (pi d)^m = sum_s c_{m,s} d^s in one variable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "mkit/errors.hpp"
#include "mkit/expr.hpp"
#include "mkit/noise.hpp"
#include "mkit/series.hpp"
#include "mkit/taylor.hpp"

namespace mkit {

struct Frame {
    SpacePtr space;
    int order = 0;
    std::vector<std::size_t> coords;      // global index of each local variable
    std::vector<double> point;            // full noise point (global indexing)
    std::vector<TaylorPoly> vars;         // local variables as polynomials
    std::vector<TaylorPoly> weights;      // pi_i
    std::vector<TaylorPoly> log_grad;     // d_i ln p_i (zero where pi_i vanishes)
    std::vector<Series> weight_series;    // pi_i around v_i, univariate
    bool constant_weights = true;

    [[nodiscard]] std::size_t nvars() const noexcept { return coords.size(); }

    /// Local index of a global coordinate, or nvars() when inactive.
    [[nodiscard]] std::size_t local_of(std::size_t global) const {
        const auto it = std::lower_bound(coords.begin(), coords.end(), global);
        return (it != coords.end() && *it == global) ? static_cast<std::size_t>(it - coords.begin()) : coords.size();
    }

    [[nodiscard]] TaylorPoly constant(double c) const { return TaylorPoly::constant(space, c); }

    /// Binds global variable indices for Program::run: active coordinates are
    /// local variables, every other coordinate is a constant.
    [[nodiscard]] std::vector<TaylorPoly> bindings(std::size_t arity) const {
        std::vector<TaylorPoly> b;
        b.reserve(arity);
        for (std::size_t g = 0; g < arity; ++g) {
            const std::size_t l = local_of(g);
            b.push_back(l < coords.size() ? vars[l] : constant(g < point.size() ? point[g] : 0.0));
        }
        return b;
    }
};

using FramePtr = std::shared_ptr<const Frame>;

/// Builds the frame of `spec` at point v over the given active coordinates.
[[nodiscard]] inline FramePtr make_frame(const NoiseSpec& spec, std::span<const double> v,
                                         std::vector<std::size_t> active, int order) {
    if (v.size() != spec.size()) throw ConfigurationError("noise point has the wrong dimension");
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
    auto f = std::make_shared<Frame>();
    f->space = TaylorSpace::get(active.size(), order);
    f->order = order;
    f->coords = std::move(active);
    f->point.assign(v.begin(), v.end());
    const std::size_t n = f->coords.size();
    f->vars.reserve(n);
    f->weights.reserve(n);
    f->log_grad.reserve(n);
    f->weight_series.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t g = f->coords[i];
        if (g >= spec.size()) throw ConfigurationError("active coordinate outside the noise dimension");
        const double x = v[g];
        f->vars.push_back(TaylorPoly::variable(f->space, i, x));
        Series w = spec.weight_series(g, x, order);
        const bool constant_w = std::holds_alternative<ConstantWeight>(spec.component(g).weight);
        f->constant_weights = f->constant_weights && constant_w;
        f->weights.push_back(constant_w ? f->constant(w[0]) : f->vars[i].apply(w));
        bool vanishes = true;
        for (int k = 0; k <= order; ++k) vanishes = vanishes && w[static_cast<std::size_t>(k)] == 0.0;
        if (vanishes && !spec.in_support(g, x))
            f->log_grad.push_back(f->constant(0.0));
        else
            f->log_grad.push_back(f->vars[i].apply(spec.log_density_grad_series(g, x, order)));
        f->weight_series.push_back(std::move(w));
    }
    return f;
}

/// Frame whose active set is every variable used by the given expressions.
[[nodiscard]] inline FramePtr make_frame(const NoiseSpec& spec, std::span<const double> v,
                                         std::span<const Expr> exprs, int order) {
    std::set<std::size_t> s;
    for (const auto& e : exprs) {
        const auto vs = e.variables();
        s.insert(vs.begin(), vs.end());
    }
    return make_frame(spec, v, std::vector<std::size_t>(s.begin(), s.end()), order);
}

namespace detail {

inline Series series_derivative(const Series& s) {
    const int n = s.order();
    if (n == 0) return Series(0, 0.0);
    Series d(n - 1);
    for (int k = 0; k < n; ++k) d[static_cast<std::size_t>(k)] = (k + 1) * s[static_cast<std::size_t>(k) + 1];
    return d;
}

inline Series truncate(const Series& s, int order) {
    std::vector<double> c(s.coeffs().begin(), s.coeffs().begin() + order + 1);
    return Series(std::move(c));
}

/// Values at the expansion point of c_{m,s} for (pi d)^m = sum_s c_{m,s} d^s, m <= M.
inline std::vector<std::vector<double>> weighted_power_table(const Series& pi, int M) {
    std::vector<std::vector<double>> table(static_cast<std::size_t>(M) + 1);
    std::vector<Series> c{Series(pi.order(), 1.0)};
    table[0] = {1.0};
    for (int m = 1; m <= M; ++m) {
        const int ord = pi.order() - m;
        const Series p = truncate(pi, ord);
        std::vector<Series> next(static_cast<std::size_t>(m) + 1, Series(ord, 0.0));
        for (int s = 0; s < m; ++s) {
            next[static_cast<std::size_t>(s)] = next[static_cast<std::size_t>(s)] + p * series_derivative(c[static_cast<std::size_t>(s)]);
            next[static_cast<std::size_t>(s) + 1] = next[static_cast<std::size_t>(s) + 1] + p * truncate(c[static_cast<std::size_t>(s)], ord);
        }
        c = std::move(next);
        table[static_cast<std::size_t>(m)].resize(static_cast<std::size_t>(m) + 1);
        for (int s = 0; s <= m; ++s) table[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)] = c[static_cast<std::size_t>(s)][0];
    }
    return table;
}

}  // namespace detail

/// Value of a simple functional with its weighted derivative tensors.
class Jet {
public:
    Jet() = default;
    Jet(FramePtr frame, TaylorPoly poly) : frame_(std::move(frame)), poly_(std::move(poly)) {}

    [[nodiscard]] const FramePtr& frame() const noexcept { return frame_; }
    [[nodiscard]] const TaylorPoly& poly() const noexcept { return poly_; }
    [[nodiscard]] double value() const noexcept { return poly_.value(); }
    [[nodiscard]] int order() const noexcept { return poly_.order(); }

    /// D_(a_1..a_k) F for global coordinate indices a (any order).
    [[nodiscard]] double entry(std::span<const std::size_t> alpha) const {
        if (static_cast<int>(alpha.size()) > order()) throw ConfigurationError("tensor order exceeds the jet order");
        std::vector<std::uint32_t> local;
        local.reserve(alpha.size());
        for (auto g : alpha) {
            const std::size_t l = frame_->local_of(g);
            if (l == frame_->nvars()) return 0.0;
            local.push_back(static_cast<std::uint32_t>(l));
        }
        if (local.empty()) return value();
        return monomial_entry(frame_->space->index_of(local));
    }

    /// Euclidean norm of the order-k tensor (sum over ordered tuples).
    [[nodiscard]] double tensor_norm(int k) const {
        if (k == 0) return std::abs(value());
        if (k > order()) throw ConfigurationError("tensor order exceeds the jet order");
        const auto& sp = *frame_->space;
        double s = 0.0;
        for (std::size_t m = sp.size_upto(k - 1); m < sp.size_upto(k); ++m) {
            const double e = monomial_entry(m);
            s += sp.multiplicity(m) * e * e;
        }
        return std::sqrt(s);
    }

    /// Symmetric tensor of order k as (sorted global index tuple, value) pairs.
    [[nodiscard]] std::vector<std::pair<std::vector<std::size_t>, double>> tensor(int k) const {
        std::vector<std::pair<std::vector<std::size_t>, double>> out;
        const auto& sp = *frame_->space;
        for (std::size_t m = sp.size_upto(k - 1); m < sp.size_upto(k); ++m) {
            std::vector<std::size_t> idx;
            for (int i = 0; i < k; ++i) idx.push_back(frame_->coords[sp.monomial(m)[static_cast<std::size_t>(i)]]);
            out.emplace_back(std::move(idx), monomial_entry(m));
        }
        return out;
    }

private:
    double monomial_entry(std::size_t m) const {
        const auto& sp = *frame_->space;
        const int k = sp.degree(m);
        const auto& mono = sp.monomial(m);
        if (frame_->constant_weights) {
            double w = 1.0;
            for (int i = 0; i < k; ++i) w *= frame_->weights[mono[static_cast<std::size_t>(i)]].value();
            return w * poly_.partial(m);
        }
        // Distinct variables with their counts.
        std::vector<std::pair<std::uint32_t, int>> groups;
        for (int i = 0; i < k; ++i) {
            const auto v = mono[static_cast<std::size_t>(i)];
            if (!groups.empty() && groups.back().first == v) ++groups.back().second;
            else groups.push_back({v, 1});
        }
        std::vector<std::vector<std::vector<double>>> tables;
        for (const auto& [v, cnt] : groups) tables.push_back(detail::weighted_power_table(frame_->weight_series[v], cnt));
        // Sum over sub-multisets s <= m.
        std::vector<int> s(groups.size(), 0);
        double total = 0.0;
        for (;;) {
            double coef = 1.0;
            std::vector<std::uint32_t> sub;
            for (std::size_t g = 0; g < groups.size(); ++g) {
                coef *= tables[g][static_cast<std::size_t>(groups[g].second)][static_cast<std::size_t>(s[g])];
                for (int r = 0; r < s[g]; ++r) sub.push_back(groups[g].first);
            }
            if (coef != 0.0) total += coef * poly_.partial(sub.empty() ? 0 : sp.index_of(sub));
            std::size_t g = 0;
            while (g < groups.size() && s[g] == groups[g].second) s[g++] = 0;
            if (g == groups.size()) break;
            ++s[g];
        }
        return total;
    }

    FramePtr frame_;
    TaylorPoly poly_;
};

struct PathNorms {
    std::vector<double> tensor_norms;  // |D^(k)F| for k = 0..l
    double sobolev1 = 0.0;             // |F|_{1,l}
    double sobolev = 0.0;              // |F|_l
};

[[nodiscard]] inline PathNorms path_norms(const Jet& jet, int l) {
    PathNorms out;
    for (int k = 0; k <= l; ++k) out.tensor_norms.push_back(jet.tensor_norm(k));
    for (int k = 1; k <= l; ++k) out.sobolev1 += out.tensor_norms[static_cast<std::size_t>(k)];
    out.sobolev = out.tensor_norms[0] + out.sobolev1;
    return out;
}

/// Evaluates a compiled program in a frame.
[[nodiscard]] inline std::vector<TaylorPoly> eval_polys(const Program& prog, const Frame& frame) {
    const auto b = frame.bindings(prog.arity());
    return prog.run<TaylorPoly>(b, frame.constant(0.0));
}

/// Jets of several functionals sharing subgraphs.
[[nodiscard]] inline std::vector<Jet> vector_jet(std::span<const Expr> exprs, const NoiseSpec& spec,
                                                 std::span<const double> v, int order) {
    const FramePtr frame = make_frame(spec, v, exprs, order);
    const Program prog(exprs);
    std::vector<Jet> out;
    for (auto& p : eval_polys(prog, *frame)) out.emplace_back(frame, std::move(p));
    return out;
}

[[nodiscard]] inline Jet eval_jet(const Expr& expr, const NoiseSpec& spec, std::span<const double> v, int order) {
    return vector_jet(std::span<const Expr>(&expr, 1), spec, v, order).front();
}

}  // namespace mkit
