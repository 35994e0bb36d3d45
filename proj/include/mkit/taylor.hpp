#pragma once

// Multivariate truncated Taylor polynomials.
//
// A TaylorPoly over n local variables with order K stores the normalized
// coefficients c_a = d^a f / a! for every multi-index |a| <= K, graded by
// total degree. Products are truncated convolutions driven by a precomputed
// multiplication table, partial derivatives lower the valid order by one, and
// smooth scalar primitives are applied by Horner composition with their
// univariate series. Every weighted Malliavin operator in the library is an
// exact manipulation of these polynomials, so derivatives of derivatives come
// out without any finite differencing.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mkit/errors.hpp"
#include "mkit/series.hpp"

namespace mkit {

inline constexpr int kMaxJetOrder = 8;

/// Monomial tables for a fixed (number of variables, order) pair.
class TaylorSpace {
public:
    struct MulEntry {
        std::uint32_t a, b, out;
    };
    struct DerivEntry {
        std::uint32_t src, dst;
        double factor;
    };
    using Monomial = std::array<std::uint32_t, kMaxJetOrder>;

    /// Shared, cached instance. Throws ResourceError above the table cap.
    static std::shared_ptr<const TaylorSpace> get(std::size_t nvars, int order);

    [[nodiscard]] std::size_t nvars() const noexcept { return nvars_; }
    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] std::size_t size() const noexcept { return degree_of_.size(); }
    /// Number of monomials of total degree <= deg.
    [[nodiscard]] std::size_t size_upto(int deg) const noexcept {
        if (deg < 0) return 0;
        return degree_start_[static_cast<std::size_t>(std::min(deg, order_)) + 1];
    }
    [[nodiscard]] int degree(std::size_t m) const noexcept { return degree_of_[m]; }
    /// Sorted variable list of monomial m (first degree(m) entries are valid).
    [[nodiscard]] const Monomial& monomial(std::size_t m) const noexcept { return monomials_[m]; }
    [[nodiscard]] std::size_t variable_index(std::size_t var) const noexcept { return 1 + var; }

    [[nodiscard]] std::span<const MulEntry> mul_entries(int max_out_degree) const noexcept {
        const std::size_t end = mul_end_[static_cast<std::size_t>(std::clamp(max_out_degree, 0, order_))];
        return {mul_.data(), end};
    }
    [[nodiscard]] std::span<const DerivEntry> deriv_entries(std::size_t var, int max_dst_degree) const noexcept {
        const auto& tab = deriv_[var];
        const auto& ends = deriv_end_[var];
        if (max_dst_degree < 0) return {};
        return {tab.data(), ends[static_cast<std::size_t>(std::min(max_dst_degree, order_ - 1))]};
    }
    /// Index of a monomial given its sorted variable list.
    [[nodiscard]] std::size_t index_of(std::span<const std::uint32_t> vars) const;

    /// Number of ordered tuples (a1..ak) that collapse to monomial m: k!/a!.
    [[nodiscard]] double multiplicity(std::size_t m) const noexcept { return multiplicity_[m]; }
    /// a! for monomial m.
    [[nodiscard]] double factorial_weight(std::size_t m) const noexcept { return factorial_[m]; }

    TaylorSpace(std::size_t nvars, int order);

private:
    struct Hash {
        std::size_t operator()(const Monomial& m) const noexcept {
            std::size_t h = 1469598103934665603ull;
            for (auto v : m) h = (h ^ v) * 1099511628211ull;
            return h;
        }
    };

    std::size_t nvars_;
    int order_;
    std::vector<Monomial> monomials_;
    std::vector<int> degree_of_;
    std::vector<std::size_t> degree_start_;
    std::vector<double> multiplicity_;
    std::vector<double> factorial_;
    std::unordered_map<Monomial, std::uint32_t, Hash> index_;
    std::vector<MulEntry> mul_;
    std::vector<std::size_t> mul_end_;
    std::vector<std::vector<DerivEntry>> deriv_;
    std::vector<std::vector<std::size_t>> deriv_end_;
};

using SpacePtr = std::shared_ptr<const TaylorSpace>;

namespace detail {

inline constexpr std::uint32_t kUnusedVar = 0xFFFFFFFFu;

inline double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

}  // namespace detail

inline TaylorSpace::TaylorSpace(std::size_t nvars, int order) : nvars_(nvars), order_(order) {
    if (order < 0 || order > kMaxJetOrder) throw ConfigurationError("jet order outside [0, 8]");
    Monomial zero;
    zero.fill(detail::kUnusedVar);
    monomials_.push_back(zero);
    degree_of_.push_back(0);
    degree_start_.push_back(0);
    degree_start_.push_back(1);
    // Degree k monomials extend degree k-1 ones by a variable >= their last.
    for (int k = 1; k <= order; ++k) {
        const std::size_t begin = degree_start_[static_cast<std::size_t>(k) - 1];
        const std::size_t end = degree_start_[static_cast<std::size_t>(k)];
        for (std::size_t m = begin; m < end; ++m) {
            const std::uint32_t last = k == 1 ? 0u : monomials_[m][static_cast<std::size_t>(k) - 2];
            for (std::uint32_t v = last; v < nvars; ++v) {
                Monomial next = monomials_[m];
                next[static_cast<std::size_t>(k) - 1] = v;
                monomials_.push_back(next);
                degree_of_.push_back(k);
            }
        }
        degree_start_.push_back(monomials_.size());
    }
    for (std::size_t m = 0; m < monomials_.size(); ++m) index_.emplace(monomials_[m], static_cast<std::uint32_t>(m));

    multiplicity_.resize(monomials_.size());
    factorial_.resize(monomials_.size());
    for (std::size_t m = 0; m < monomials_.size(); ++m) {
        const int k = degree_of_[m];
        double kf = 1.0;
        for (int i = 2; i <= k; ++i) kf *= i;
        double af = 1.0;
        int run = 1;
        for (int i = 1; i < k; ++i) {
            if (monomials_[m][static_cast<std::size_t>(i)] == monomials_[m][static_cast<std::size_t>(i) - 1]) {
                ++run;
                af *= run;
            } else {
                run = 1;
            }
        }
        factorial_[m] = af;
        multiplicity_[m] = kf / af;
    }

    // Multiplication table grouped by output degree.
    mul_end_.assign(static_cast<std::size_t>(order) + 1, 0);
    for (int k = 0; k <= order; ++k) {
        for (int da = 0; da <= k; ++da) {
            const int db = k - da;
            for (std::size_t a = degree_start_[static_cast<std::size_t>(da)]; a < degree_start_[static_cast<std::size_t>(da) + 1]; ++a) {
                for (std::size_t b = degree_start_[static_cast<std::size_t>(db)]; b < degree_start_[static_cast<std::size_t>(db) + 1]; ++b) {
                    Monomial out;
                    out.fill(detail::kUnusedVar);
                    std::merge(monomials_[a].begin(), monomials_[a].begin() + da, monomials_[b].begin(),
                               monomials_[b].begin() + db, out.begin());
                    mul_.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), index_.at(out)});
                }
            }
        }
        mul_end_[static_cast<std::size_t>(k)] = mul_.size();
    }

    // Derivative tables: d/dv_i maps monomial src (containing i) to src - e_i.
    deriv_.assign(nvars, {});
    deriv_end_.assign(nvars, std::vector<std::size_t>(static_cast<std::size_t>(std::max(order, 1)), 0));
    for (int dk = 0; dk < order; ++dk) {
        for (std::size_t src = degree_start_[static_cast<std::size_t>(dk) + 1]; src < degree_start_[static_cast<std::size_t>(dk) + 2]; ++src) {
            const auto& mono = monomials_[src];
            const int k = dk + 1;
            for (int i = 0; i < k;) {
                const std::uint32_t v = mono[static_cast<std::size_t>(i)];
                int j = i;
                while (j < k && mono[static_cast<std::size_t>(j)] == v) ++j;
                Monomial dst;
                dst.fill(detail::kUnusedVar);
                int w = 0;
                for (int t = 0; t < k; ++t)
                    if (t != i) dst[static_cast<std::size_t>(w++)] = mono[static_cast<std::size_t>(t)];
                deriv_[v].push_back({static_cast<std::uint32_t>(src), index_.at(dst), static_cast<double>(j - i)});
                i = j;
            }
        }
        for (std::size_t v = 0; v < nvars; ++v) deriv_end_[v][static_cast<std::size_t>(dk)] = deriv_[v].size();
    }
}

inline std::size_t TaylorSpace::index_of(std::span<const std::uint32_t> vars) const {
    Monomial m;
    m.fill(detail::kUnusedVar);
    std::copy(vars.begin(), vars.end(), m.begin());
    std::sort(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(vars.size()));
    return index_.at(m);
}

inline std::shared_ptr<const TaylorSpace> TaylorSpace::get(std::size_t nvars, int order) {
    static std::mutex mutex;
    static std::map<std::pair<std::size_t, int>, std::shared_ptr<const TaylorSpace>> cache;
    constexpr double kMaxMulEntries = 4.0e7;
    if (order < 0 || order > kMaxJetOrder) throw ConfigurationError("jet order outside [0, 8]");
    if (detail::binomial(2 * nvars + static_cast<std::size_t>(order), static_cast<std::size_t>(order)) > kMaxMulEntries)
        throw ResourceError("taylor space too large: " + std::to_string(nvars) + " variables at order " +
                            std::to_string(order));
    std::lock_guard lock(mutex);
    auto& slot = cache[{nvars, order}];
    if (!slot) slot = std::make_shared<const TaylorSpace>(nvars, order);
    return slot;
}

// ============================================================================
// TaylorPoly
// ============================================================================

class TaylorPoly {
public:
    TaylorPoly() = default;

    TaylorPoly(SpacePtr space, int order) : space_(std::move(space)), order_(order) {
        if (order_ > space_->order()) order_ = space_->order();
        if (order_ < 0) throw ConfigurationError("insufficient jet order");
        c_.assign(space_->size_upto(order_), 0.0);
    }

    static TaylorPoly constant(const SpacePtr& space, double value) {
        TaylorPoly p(space, space->order());
        p.c_[0] = value;
        return p;
    }

    static TaylorPoly variable(const SpacePtr& space, std::size_t var, double value) {
        TaylorPoly p = constant(space, value);
        if (space->order() >= 1) p.c_[space->variable_index(var)] = 1.0;
        return p;
    }

    [[nodiscard]] bool valid() const noexcept { return static_cast<bool>(space_); }
    [[nodiscard]] const SpacePtr& space() const noexcept { return space_; }
    [[nodiscard]] int order() const noexcept { return order_; }
    [[nodiscard]] double value() const noexcept { return c_[0]; }
    [[nodiscard]] std::span<const double> coeffs() const noexcept { return c_; }
    [[nodiscard]] std::span<double> coeffs() noexcept { return c_; }
    [[nodiscard]] double coeff(std::size_t m) const noexcept { return m < c_.size() ? c_[m] : 0.0; }

    /// Partial derivative at the expansion point for the monomial m: a! c_a.
    [[nodiscard]] double partial(std::size_t m) const noexcept { return coeff(m) * space_->factorial_weight(m); }

    /// First partial derivative d/dv_i at the expansion point.
    [[nodiscard]] double gradient(std::size_t var) const noexcept {
        return order_ >= 1 ? c_[space_->variable_index(var)] : 0.0;
    }

    [[nodiscard]] bool is_constant() const noexcept {
        for (std::size_t i = 1; i < c_.size(); ++i)
            if (c_[i] != 0.0) return false;
        return true;
    }

    /// Same polynomial with its valid order lowered to `order`.
    [[nodiscard]] TaylorPoly truncated(int order) const {
        TaylorPoly p = *this;
        if (order < p.order_) {
            if (order < 0) throw ConfigurationError("insufficient jet order");
            p.order_ = order;
            p.c_.resize(space_->size_upto(order));
        }
        return p;
    }

    TaylorPoly& operator+=(const TaylorPoly& o) {
        combine_order(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    TaylorPoly& operator-=(const TaylorPoly& o) {
        combine_order(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    TaylorPoly& operator+=(double x) noexcept {
        c_[0] += x;
        return *this;
    }
    TaylorPoly& operator-=(double x) noexcept {
        c_[0] -= x;
        return *this;
    }
    TaylorPoly& operator*=(double x) noexcept {
        for (auto& v : c_) v *= x;
        return *this;
    }

    friend TaylorPoly operator+(TaylorPoly a, const TaylorPoly& b) { return a += b; }
    friend TaylorPoly operator-(TaylorPoly a, const TaylorPoly& b) { return a -= b; }
    friend TaylorPoly operator+(TaylorPoly a, double x) { return a += x; }
    friend TaylorPoly operator+(double x, TaylorPoly a) { return a += x; }
    friend TaylorPoly operator-(TaylorPoly a, double x) { return a -= x; }
    friend TaylorPoly operator-(double x, TaylorPoly a) {
        a *= -1.0;
        return a += x;
    }
    friend TaylorPoly operator-(TaylorPoly a) {
        a *= -1.0;
        return a;
    }
    friend TaylorPoly operator*(TaylorPoly a, double x) { return a *= x; }
    friend TaylorPoly operator*(double x, TaylorPoly a) { return a *= x; }
    friend TaylorPoly operator/(TaylorPoly a, double x) { return a *= 1.0 / x; }

    friend TaylorPoly operator*(const TaylorPoly& a, const TaylorPoly& b) {
        assert(a.space_ == b.space_);
        const int m = std::min(a.order_, b.order_);
        if (a.is_constant()) return b.truncated(m) * a.c_[0];
        if (b.is_constant()) return a.truncated(m) * b.c_[0];
        TaylorPoly r(a.space_, m);
        double* out = r.c_.data();
        const double* pa = a.c_.data();
        const double* pb = b.c_.data();
        for (const auto& e : a.space_->mul_entries(m)) out[e.out] += pa[e.a] * pb[e.b];
        return r;
    }

    friend TaylorPoly operator/(const TaylorPoly& a, const TaylorPoly& b) {
        return a * b.apply(reciprocal_series(b.value(), b.order_));
    }
    friend TaylorPoly operator/(double x, const TaylorPoly& b) {
        return b.apply(reciprocal_series(b.value(), b.order_)) * x;
    }

    /// d/dv_var; the valid order drops by one.
    [[nodiscard]] TaylorPoly derivative(std::size_t var) const {
        if (order_ < 1) throw ConfigurationError("insufficient jet order for a derivative");
        TaylorPoly r(space_, order_ - 1);
        for (const auto& e : space_->deriv_entries(var, order_ - 1)) r.c_[e.dst] = e.factor * c_[e.src];
        return r;
    }

    /// f(this) where f is given by its Taylor coefficients around value().
    [[nodiscard]] TaylorPoly apply(const Series& f) const {
        TaylorPoly dev = *this;
        dev.c_[0] = 0.0;
        const int n = std::min(order_, f.order());
        TaylorPoly r = constant(space_, f[static_cast<std::size_t>(n)]).truncated(order_);
        for (int k = n - 1; k >= 0; --k) {
            r = r * dev;
            r.c_[0] += f[static_cast<std::size_t>(k)];
        }
        return r;
    }

private:
    void combine_order(const TaylorPoly& o) {
        assert(space_ == o.space_);
        if (o.order_ < order_) {
            order_ = o.order_;
            c_.resize(o.c_.size());
        }
    }

    SpacePtr space_;
    int order_ = 0;
    std::vector<double> c_;
};

// Elementary functions on polynomials (found by ADL from generic code).
inline TaylorPoly exp(const TaylorPoly& p) { return p.apply(exp_series(p.value(), p.order())); }
inline TaylorPoly log(const TaylorPoly& p) { return p.apply(log_series(p.value(), p.order())); }
inline TaylorPoly sin(const TaylorPoly& p) { return p.apply(sin_series(p.value(), p.order())); }
inline TaylorPoly cos(const TaylorPoly& p) { return p.apply(cos_series(p.value(), p.order())); }
inline TaylorPoly sqrt(const TaylorPoly& p) { return p.apply(sqrt_series(p.value(), p.order())); }
inline TaylorPoly tanh(const TaylorPoly& p) { return p.apply(tanh_series(p.value(), p.order())); }
inline TaylorPoly pow(const TaylorPoly& p, double c) {
    if (c == 2.0) return p * p;
    return p.apply(pow_series(p.value(), c, p.order()));
}

inline double value_of(double x) noexcept { return x; }
inline double value_of(const TaylorPoly& p) noexcept { return p.value(); }

}  // namespace mkit
