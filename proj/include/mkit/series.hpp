#pragma once

// Univariate truncated Taylor series a_0 + a_1 h + ... + a_K h^K.
//
// These are the building blocks for composing smooth scalar primitives with
// multivariate jets: f(P) = sum_k f_k (P - P(0))^k where f_k = f^(k)(x0)/k!.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "mkit/errors.hpp"

namespace mkit {

class Series {
public:
    Series() = default;
    explicit Series(int order, double value = 0.0) : a_(static_cast<std::size_t>(order) + 1, 0.0) { a_[0] = value; }
    Series(std::vector<double> coeffs) : a_(std::move(coeffs)) {}

    /// x0 + h, the identity series around x0.
    static Series variable(int order, double x0) {
        Series s(order, x0);
        if (order >= 1) s.a_[1] = 1.0;
        return s;
    }

    [[nodiscard]] int order() const noexcept { return static_cast<int>(a_.size()) - 1; }
    [[nodiscard]] double operator[](std::size_t k) const { return a_[k]; }
    double& operator[](std::size_t k) { return a_[k]; }
    [[nodiscard]] const std::vector<double>& coeffs() const noexcept { return a_; }

    /// k-th derivative at the expansion point.
    [[nodiscard]] double derivative(int k) const {
        double f = 1.0;
        for (int i = 2; i <= k; ++i) f *= i;
        return a_[static_cast<std::size_t>(k)] * f;
    }

    friend Series operator+(Series a, const Series& b) {
        for (std::size_t k = 0; k < a.a_.size(); ++k) a.a_[k] += b.a_[k];
        return a;
    }
    friend Series operator-(Series a, const Series& b) {
        for (std::size_t k = 0; k < a.a_.size(); ++k) a.a_[k] -= b.a_[k];
        return a;
    }
    friend Series operator-(Series a) {
        for (auto& x : a.a_) x = -x;
        return a;
    }
    friend Series operator+(Series a, double c) {
        a.a_[0] += c;
        return a;
    }
    friend Series operator+(double c, Series a) { return std::move(a) + c; }
    friend Series operator-(double c, const Series& a) { return (-a) + c; }
    friend Series operator-(Series a, double c) {
        a.a_[0] -= c;
        return a;
    }
    friend Series operator/(Series a, double c) {
        for (auto& x : a.a_) x /= c;
        return a;
    }
    friend Series operator*(Series a, double c) {
        for (auto& x : a.a_) x *= c;
        return a;
    }
    friend Series operator*(double c, Series a) { return std::move(a) * c; }

    friend Series operator*(const Series& a, const Series& b) {
        const std::size_t n = a.a_.size();
        Series c(static_cast<int>(n) - 1);
        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i <= k; ++i) s += a.a_[i] * b.a_[k - i];
            c.a_[k] = s;
        }
        return c;
    }

    friend Series operator/(const Series& a, const Series& b) {
        if (b.a_[0] == 0.0) throw DomainError("series division by zero");
        const std::size_t n = a.a_.size();
        Series c(static_cast<int>(n) - 1);
        for (std::size_t k = 0; k < n; ++k) {
            double s = a.a_[k];
            for (std::size_t i = 1; i <= k; ++i) s -= b.a_[i] * c.a_[k - i];
            c.a_[k] = s / b.a_[0];
        }
        return c;
    }

    friend Series operator/(double c, const Series& b) { return Series(b.order(), c) / b; }

    friend Series exp(const Series& a) {
        const std::size_t n = a.a_.size();
        Series e(static_cast<int>(n) - 1, std::exp(a.a_[0]));
        for (std::size_t k = 1; k < n; ++k) {
            double s = 0.0;
            for (std::size_t j = 1; j <= k; ++j) s += static_cast<double>(j) * a.a_[j] * e.a_[k - j];
            e.a_[k] = s / static_cast<double>(k);
        }
        return e;
    }

    friend Series log(const Series& a) {
        if (!(a.a_[0] > 0.0)) throw DomainError("series log of non-positive value");
        const std::size_t n = a.a_.size();
        Series l(static_cast<int>(n) - 1, std::log(a.a_[0]));
        for (std::size_t k = 1; k < n; ++k) {
            double s = 0.0;
            for (std::size_t j = 1; j < k; ++j) s += static_cast<double>(j) * l.a_[j] * a.a_[k - j];
            l.a_[k] = (a.a_[k] - s / static_cast<double>(k)) / a.a_[0];
        }
        return l;
    }

    /// outer(inner(h)) where outer is expanded around inner[0].
    friend Series compose(const Series& outer, const Series& inner) {
        Series dev = inner;
        dev.a_[0] = 0.0;
        const int n = outer.order();
        Series r(inner.order(), outer.a_[static_cast<std::size_t>(n)]);
        for (int k = n - 1; k >= 0; --k) r = r * dev + outer.a_[static_cast<std::size_t>(k)];
        return r;
    }

private:
    std::vector<double> a_;
};

// ---------------------------------------------------------------------------
// Taylor coefficients of elementary functions around x0
// ---------------------------------------------------------------------------

[[nodiscard]] inline Series exp_series(double x0, int order) { return exp(Series::variable(order, x0)); }

[[nodiscard]] inline Series log_series(double x0, int order) {
    if (!(x0 > 0.0)) throw DomainError("log of non-positive value");
    Series s(order, std::log(x0));
    double p = 1.0;
    for (int k = 1; k <= order; ++k) {
        p /= x0;
        s[static_cast<std::size_t>(k)] = (k % 2 == 1 ? 1.0 : -1.0) * p / k;
    }
    return s;
}

[[nodiscard]] inline Series reciprocal_series(double x0, int order) {
    if (x0 == 0.0) throw DomainError("division by zero");
    Series s(order);
    double p = 1.0 / x0;
    for (int k = 0; k <= order; ++k) {
        s[static_cast<std::size_t>(k)] = (k % 2 == 0 ? 1.0 : -1.0) * p;
        p /= x0;
    }
    return s;
}

/// (x0 + h)^c. Integer exponents accept any base; others need x0 > 0.
[[nodiscard]] inline Series pow_series(double x0, double c, int order) {
    const bool integral = std::floor(c) == c;
    if (!integral && !(x0 > 0.0)) throw DomainError("non-integer power of non-positive value");
    if (integral && c < 0 && x0 == 0.0) throw DomainError("negative power of zero");
    Series s(order);
    double binom = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) binom *= (c - (k - 1)) / k;
        if (binom == 0.0) break;
        s[static_cast<std::size_t>(k)] = binom * std::pow(x0, c - k);
    }
    return s;
}

[[nodiscard]] inline Series sqrt_series(double x0, int order) {
    if (x0 < 0.0 || (x0 == 0.0 && order > 0)) throw DomainError("sqrt outside (0, inf)");
    return pow_series(x0, 0.5, order);
}

[[nodiscard]] inline Series sin_series(double x0, int order) {
    Series s(order);
    const double sv = std::sin(x0), cv = std::cos(x0);
    double f = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) f /= k;
        const double d = (k % 4 == 0) ? sv : (k % 4 == 1) ? cv : (k % 4 == 2) ? -sv : -cv;
        s[static_cast<std::size_t>(k)] = d * f;
    }
    return s;
}

[[nodiscard]] inline Series cos_series(double x0, int order) {
    Series s(order);
    const double sv = std::sin(x0), cv = std::cos(x0);
    double f = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) f /= k;
        const double d = (k % 4 == 0) ? cv : (k % 4 == 1) ? -sv : (k % 4 == 2) ? -cv : sv;
        s[static_cast<std::size_t>(k)] = d * f;
    }
    return s;
}

[[nodiscard]] inline Series tanh_series(double x0, int order) {
    if (x0 >= 0.0) {
        const Series e = exp(-2.0 * Series::variable(order, x0));
        return (1.0 - e) / (e + 1.0);
    }
    const Series e = exp(2.0 * Series::variable(order, x0));
    return (e - 1.0) / (e + 1.0);
}

}  // namespace mkit
