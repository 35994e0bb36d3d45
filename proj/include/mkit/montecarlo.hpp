#pragma once

// Reproducible Monte Carlo moments.
//
// Sample j always draws from root(seed).substream(tag).substream(j), and
// block results are merged in block order, so estimates are bitwise identical
// for any worker count.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mkit/parallel.hpp"
#include "mkit/random.hpp"
#include "mkit/stats.hpp"

namespace mkit {

struct McSettings {
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    int workers = 1;
};

/// Per-column moments; non-finite values are counted and left out.
struct McMoments {
    MomentVector moments;
    std::vector<std::size_t> nonfinite;
    std::size_t samples = 0;

    void merge(const McMoments& o) {
        moments.merge(o.moments);
        if (nonfinite.empty()) nonfinite.assign(o.nonfinite.size(), 0);
        for (std::size_t i = 0; i < o.nonfinite.size(); ++i) nonfinite[i] += o.nonfinite[i];
        samples += o.samples;
    }
    [[nodiscard]] double mean_over_all(std::size_t col) const {
        return samples == 0 ? 0.0 : moments[col].sum() / static_cast<double>(samples);
    }
    /// Standard error of the mean over all samples (skipped ones count as 0).
    [[nodiscard]] double stderr_over_all(std::size_t col) const {
        if (samples < 2) return 0.0;
        const double n = static_cast<double>(samples);
        const auto& m = moments[col];
        const double k = static_cast<double>(m.count());
        const double mean = m.sum() / n;
        const double s2 = m.variance() * (k - 1.0) + k * m.mean() * m.mean();  // sum of squares
        return std::sqrt(std::max(0.0, (s2 - n * mean * mean) / (n - 1.0)) / n);
    }
};

/// Runs fn(rng, out) for every sample; `out` has `width` slots preset to 0.
template <class Fn>
McMoments mc_moments(const McSettings& s, std::uint64_t tag, std::size_t width, Fn&& fn) {
    const RandomStream root = RandomStream(s.seed).substream(tag);
    McMoments init;
    init.moments = MomentVector(width);
    init.nonfinite.assign(width, 0);
    return reduce_blocks(
        s.samples, s.workers, init,
        [&](std::size_t begin, std::size_t end) {
            McMoments acc;
            acc.moments = MomentVector(width);
            acc.nonfinite.assign(width, 0);
            std::vector<double> out(width);
            for (std::size_t j = begin; j < end; ++j) {
                RandomStream rng = root.substream(j);
                std::fill(out.begin(), out.end(), 0.0);
                fn(rng, std::span<double>(out));
                for (std::size_t c = 0; c < width; ++c) {
                    if (std::isfinite(out[c])) acc.moments[c].add(out[c]);
                    else ++acc.nonfinite[c];
                }
                ++acc.samples;
            }
            return acc;
        },
        [](McMoments& a, const McMoments& b) { a.merge(b); });
}

/// Runs fn(rng, j) for every sample and collects results in sample order.
template <class T, class Fn>
std::vector<T> mc_collect(const McSettings& s, std::uint64_t tag, Fn&& fn) {
    const RandomStream root = RandomStream(s.seed).substream(tag);
    std::vector<T> out(s.samples);
    for_each_block(s.samples, s.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
            RandomStream rng = root.substream(j);
            out[j] = fn(rng, j);
        }
    });
    return out;
}

/// A mean with its standard error.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// (E X)^{1/p} with a delta-method standard error.
[[nodiscard]] inline Estimate pth_root(double mean, double se, double p) {
    if (mean <= 0.0) return {0.0, se > 0.0 ? std::pow(se, 1.0 / p) : 0.0};
    const double v = std::pow(mean, 1.0 / p);
    return {v, v / (p * mean) * se};
}

}  // namespace mkit
