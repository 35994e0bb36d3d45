#pragma once

// Compensated moment accumulators and the handful of classical tests used by
// the estimators and their self-checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace mkit {

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    void merge(const CompensatedSum& o) noexcept {
        add(o.sum_);
        add(o.comp_);
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Sample mean and standard error of one scalar quantity.
class MomentAccumulator {
public:
    void add(double x) noexcept {
        ++n_;
        s1_.add(x);
        s2_.add(x * x);
    }
    void merge(const MomentAccumulator& o) noexcept {
        n_ += o.n_;
        s1_.merge(o.s1_);
        s2_.merge(o.s2_);
    }
    [[nodiscard]] std::size_t count() const noexcept { return n_; }
    [[nodiscard]] double sum() const noexcept { return s1_.value(); }
    [[nodiscard]] double mean() const noexcept { return n_ == 0 ? 0.0 : s1_.value() / static_cast<double>(n_); }
    [[nodiscard]] double variance() const noexcept {
        if (n_ < 2) return 0.0;
        const double n = static_cast<double>(n_);
        const double m = s1_.value() / n;
        return std::max(0.0, (s2_.value() - n * m * m) / (n - 1.0));
    }
    [[nodiscard]] double stderr_mean() const noexcept {
        return n_ < 2 ? 0.0 : std::sqrt(variance() / static_cast<double>(n_));
    }

private:
    std::size_t n_ = 0;
    CompensatedSum s1_;
    CompensatedSum s2_;
};

/// A fixed-width bundle of accumulators, mergeable in block order.
class MomentVector {
public:
    MomentVector() = default;
    explicit MomentVector(std::size_t width) : acc_(width) {}

    void add(std::span<const double> xs) {
        for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i].add(xs[i]);
    }
    void merge(const MomentVector& o) {
        if (acc_.empty()) acc_.resize(o.acc_.size());
        for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i].merge(o.acc_[i]);
    }
    [[nodiscard]] std::size_t width() const noexcept { return acc_.size(); }
    [[nodiscard]] const MomentAccumulator& operator[](std::size_t i) const { return acc_[i]; }
    [[nodiscard]] MomentAccumulator& operator[](std::size_t i) { return acc_[i]; }

private:
    std::vector<MomentAccumulator> acc_;
};

[[nodiscard]] inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

[[nodiscard]] inline double normal_pdf(double x, double mean = 0.0, double variance = 1.0) {
    const double z = x - mean;
    return std::exp(-0.5 * z * z / variance) / std::sqrt(2.0 * M_PI * variance);
}

[[nodiscard]] inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
[[nodiscard]] inline double kolmogorov_survival(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov test with the Stephens small-sample correction.
[[nodiscard]] inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

/// Pearson chi-square goodness of fit; bins with expected count < 5 are pooled
/// into their right neighbour.
[[nodiscard]] inline double chi_square_p_value(std::span<const double> observed, std::span<const double> expected) {
    double stat = 0.0;
    int df = -1;
    double obs_acc = 0.0;
    double exp_acc = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        obs_acc += observed[i];
        exp_acc += expected[i];
        if (exp_acc >= 5.0) {
            stat += (obs_acc - exp_acc) * (obs_acc - exp_acc) / exp_acc;
            ++df;
            obs_acc = exp_acc = 0.0;
        }
    }
    if (exp_acc > 0.0) stat += (obs_acc - exp_acc) * (obs_acc - exp_acc) / std::max(exp_acc, 1e-300);
    if (df < 1) return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), stat));
}

[[nodiscard]] inline std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

[[nodiscard]] inline double pearson(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

[[nodiscard]] inline double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

}  // namespace mkit
