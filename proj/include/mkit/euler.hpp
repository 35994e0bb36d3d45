#pragma once

// Euler scheme of a scalar diffusion dX = b(X) dt + s(X) dW on [0, t] as a
// simple functional of the Brownian increments, and the TV study of X_t^n
// against the finest scheme.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "mkit/density.hpp"
#include "mkit/errors.hpp"
#include "mkit/expr.hpp"
#include "mkit/malliavin.hpp"
#include "mkit/montecarlo.hpp"
#include "mkit/noise.hpp"
#include "mkit/stats.hpp"

namespace mkit {

/// Coefficients use variable 0 for the state.
struct DiffusionModel {
    Expr drift = Expr(0.0);
    Expr diffusion = Expr(1.0);
    double x0 = 0.0;
    double horizon = 1.0;
};

/// n increments of variance t/n with weight sqrt(t/n), so D_i F = sqrt(t/n) d_i f
/// is the Malliavin derivative of F in the i-th time cell.
[[nodiscard]] inline NoiseSpec euler_noise(const DiffusionModel& m, std::size_t steps) {
    if (steps < 1) throw ConfigurationError("Euler scheme needs at least one step");
    if (!(m.horizon > 0.0)) throw ConfigurationError("horizon must be positive");
    const double h = m.horizon / static_cast<double>(steps);
    return iid_spec(steps, NoiseComponent{GaussianLaw{0.0, h}, ConstantWeight{std::sqrt(h)}});
}

/// X_t^n as an expression in the increments.
[[nodiscard]] inline Expr euler_expr(const DiffusionModel& m, std::size_t steps) {
    const double h = m.horizon / static_cast<double>(steps);
    Expr x(m.x0);
    for (std::size_t k = 0; k < steps; ++k) {
        const Expr b[1] = {x};
        x = x + substitute(m.drift, b) * h + substitute(m.diffusion, b) * Expr::var(k);
    }
    return x;
}

/// X_t^n from the increments, without building a graph.
class EulerScheme {
public:
    EulerScheme(const DiffusionModel& m, std::size_t steps)
        : model_(m), steps_(steps), noise_(euler_noise(m, steps)), drift_(m.drift), diffusion_(m.diffusion) {}

    [[nodiscard]] const NoiseSpec& noise() const noexcept { return noise_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }

    [[nodiscard]] double value(std::span<const double> dw) const {
        const double h = model_.horizon / static_cast<double>(steps_);
        double x = model_.x0;
        for (std::size_t k = 0; k < steps_; ++k) {
            const double s[1] = {x};
            x += drift_.eval(s) * h + diffusion_.eval(s) * dw[k];
        }
        return x;
    }

private:
    DiffusionModel model_;
    std::size_t steps_;
    NoiseSpec noise_;
    Program drift_, diffusion_;
};

/// Exact law of the Euler scheme for dX = -k X dt + s dW: Gaussian with
/// mean (1 - k h)^n x0 and variance s^2 h sum_j (1 - k h)^{2j}.
[[nodiscard]] inline std::pair<double, double> ou_euler_law(double k, double s, double x0, double t, std::size_t n) {
    const double h = t / static_cast<double>(n), a = 1.0 - k * h;
    double var = 0.0, p = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        var += p;
        p *= a * a;
    }
    return {std::pow(a, static_cast<double>(n)) * x0, s * s * h * var};
}

struct EulerStudySettings {
    std::vector<std::size_t> steps{2, 4, 8, 16, 32};
    std::size_t density_samples = 20000;  // per level (0 disables the density TV)
    std::size_t grid_points = 61;
    std::size_t hist_samples = 100000;    // per level
    std::size_t bins = 60;
    std::size_t sobolev_samples = 200;    // per level (0 disables)
    int sobolev_order = 3;
    int sobolev_p = 2;
    std::size_t sobolev_max_steps = 16;   // order-3 jets grow as n^3
    std::size_t profile_samples = 5000;   // per level (0 disables)
    std::vector<double> eps{1e-3, 1e-2, 1e-1};
    std::uint64_t seed = 1;
    int workers = 1;
};

struct EulerStudyRow {
    std::size_t steps = 0;
    std::optional<DistanceEstimate> tv_density;
    DistanceEstimate tv_hist;
    std::optional<SobolevEstimate> sobolev;
    double degenerate_fraction = 0.0;
};

struct EulerStudy {
    std::vector<EulerStudyRow> rows;
    std::size_t reference_steps = 0;
    double spearman_density = 0.0;
    double spearman_hist = 0.0;
    std::vector<double> grid;
    std::vector<std::vector<double>> densities;  // per level, on `grid`
    std::vector<std::vector<double>> density_se;
    std::optional<NondegeneracyProfile> profile;
};

[[nodiscard]] inline EulerStudy euler_tv_experiment(const DiffusionModel& model, const EulerStudySettings& st) {
    if (st.steps.empty()) throw ConfigurationError("empty step list");
    if (!std::is_sorted(st.steps.begin(), st.steps.end())) throw ConfigurationError("step list must be sorted");
    if (st.hist_samples < 2) throw ConfigurationError("sample count must be at least 2");
    EulerStudy study;
    study.reference_steps = st.steps.back();

    auto finals = [&](const EulerScheme& e, std::uint64_t tag) {
        return mc_collect<double>(McSettings{st.hist_samples, st.seed, st.workers}, tag,
                                  [&](RandomStream& rng, std::size_t) { return e.value(e.noise().sample(rng)); });
    };
    const EulerScheme ref(model, study.reference_steps);
    const auto ref_x = finals(ref, 0xe100u + study.reference_steps);
    const auto [lo_it, hi_it] = std::minmax_element(ref_x.begin(), ref_x.end());
    const double span = std::max(*hi_it - *lo_it, 1e-9);
    const double lo = *lo_it - 0.05 * span, hi = *hi_it + 0.05 * span;

    std::vector<DensityGrid> grids;
    if (st.density_samples > 0) {
        study.grid = linear_grid(lo, hi, st.grid_points);
        std::vector<std::vector<double>> ys;
        for (double y : study.grid) ys.push_back({y});
        for (std::size_t n : st.steps) {
            const DensityProblem prob{euler_noise(model, n), FunctionalSet({euler_expr(model, n)}), {}};
            grids.push_back(density_grid(prob, ys, McSettings{st.density_samples, st.seed + n, st.workers}));
            std::vector<double> p, se;
            for (const auto& e : grids.back().points) {
                p.push_back(e.value);
                se.push_back(e.std_error);
            }
            study.densities.push_back(std::move(p));
            study.density_se.push_back(std::move(se));
        }
    }

    std::vector<FamilyMember> family;
    for (std::size_t i = 0; i < st.steps.size(); ++i) {
        const std::size_t n = st.steps[i];
        EulerStudyRow row;
        row.steps = n;
        const EulerScheme e(model, n);
        if (n == study.reference_steps) row.tv_hist = histogram_tv(ref_x, ref_x, lo, hi, st.bins);
        else row.tv_hist = histogram_tv(finals(e, 0xe100u + n), ref_x, lo, hi, st.bins);
        if (!grids.empty()) {
            const std::size_t r = st.steps.size() - 1;
            row.tv_density = tv_tabulated(study.grid, study.densities[i], study.density_se[i], study.densities[r],
                                          study.density_se[r]);
            row.degenerate_fraction = grids[i].points.front().degenerate_fraction;
        }
        if (st.sobolev_samples > 0 && n <= st.sobolev_max_steps)
            row.sobolev = sobolev_norm_mc(e.noise(), FunctionalSet({euler_expr(model, n)}), st.sobolev_order,
                                          st.sobolev_p, Localizer{}, McSettings{st.sobolev_samples, st.seed, st.workers});
        if (st.profile_samples > 0) family.push_back({e.noise(), FunctionalSet({euler_expr(model, n)})});
        study.rows.push_back(std::move(row));
    }
    if (!family.empty()) study.profile = nondegeneracy_profile(family, st.eps, McSettings{st.profile_samples, st.seed, st.workers});
    std::vector<double> lv, th, td;
    for (const auto& r : study.rows) {
        lv.push_back(static_cast<double>(r.steps));
        th.push_back(r.tv_hist.value);
        td.push_back(r.tv_density ? r.tv_density->value : 0.0);
    }
    if (lv.size() >= 2) {
        study.spearman_hist = spearman(lv, th);
        study.spearman_density = spearman(lv, td);
    }
    return study;
}

}  // namespace mkit
