#pragma once

// Canned experiments driven by JSON configs. Each runner returns the CSV it
// produced and an exit status: 0 success, 1 a check in the config failed.
// Configuration problems throw ConfigurationError (exit status 2 in the CLI).
//
// Every config carries a mandatory "seed"; the CSV starts with '#' header
// lines recording the command, seed and sample counts.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mkit/density.hpp"
#include "mkit/euler.hpp"
#include "mkit/ibp.hpp"
#include "mkit/io_json.hpp"
#include "mkit/jump_sde.hpp"
#include "mkit/malliavin.hpp"
#include "mkit/parallel.hpp"

namespace mkit {

struct RunOptions {
    std::optional<std::uint64_t> seed;  // overrides the config seed
    int workers = 1;
    std::filesystem::path base_dir = ".";  // for relative model paths
};

struct RunOutput {
    std::string csv;
    std::string summary;
    int status = 0;
};

namespace detail {

inline std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

inline std::string join(const std::vector<double>& v, char sep = ';') {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += fmt(v[i]);
    }
    return s;
}

inline std::string join_index(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ';';
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::uint64_t config_seed(const Json& cfg, const RunOptions& opt) {
    if (opt.seed) return *opt.seed;
    const auto& s = require(cfg, "seed");
    if (!s.is_number_unsigned()) throw ConfigurationError("seed must be a non-negative integer");
    return s.get<std::uint64_t>();
}

inline std::size_t count(const Json& cfg, const char* key, std::size_t fallback) {
    const std::size_t n = cfg.value(key, fallback);
    if (n < 2) throw ConfigurationError(std::string(key) + " must be at least 2");
    return n;
}

/// An inline object, or a path (relative to the config) to a JSON file.
inline Json resolve(const Json& j, const RunOptions& opt) {
    if (j.is_string() && j.get<std::string>() != "default") {
        std::filesystem::path p = j.get<std::string>();
        if (p.is_relative()) p = opt.base_dir / p;
        return load_json_file(p.string());
    }
    return j;
}

inline std::vector<double> sorted_grid(const Json& j, const char* what) {
    auto v = j.get<std::vector<double>>();
    if (v.empty()) throw ConfigurationError(std::string(what) + " must not be empty");
    if (!std::is_sorted(v.begin(), v.end())) throw ConfigurationError(std::string(what) + " must be sorted");
    return v;
}

inline std::string header(const char* command, std::uint64_t seed) {
    return std::string("# command=") + command + "\n# seed=" + std::to_string(seed) + "\n";
}

}  // namespace detail

// ============================================================================
// density
// ============================================================================
//
// {"seed", "samples", "noise", "functionals": [expr], "localization": [...],
//  "grid": {"lo", "hi", "n"} | "points": [[y...]], "alphas": [[...]],
//  "expected": [value per row], "tolerance_se": 4}

[[nodiscard]] inline RunOutput run_density(const Json& cfg, const RunOptions& opt) {
    const std::uint64_t seed = detail::config_seed(cfg, opt);
    const McSettings mc{detail::count(cfg, "samples", 100000), seed, opt.workers};
    DensityProblem prob{noise_from_json(detail::resolve(detail::require(cfg, "noise"), opt)),
                        FunctionalSet(exprs_from_json(detail::require(cfg, "functionals"))),
                        localization_from_json(cfg.value("localization", Json()))};
    const std::size_t d = prob.functionals.dimension();
    std::vector<std::vector<double>> ys;
    if (cfg.contains("grid")) {
        const auto& g = cfg["grid"];
        if (d != 1) throw ConfigurationError("grid form needs a scalar functional; use points");
        for (double y : linear_grid(detail::number(detail::require(g, "lo"), "lo"), detail::number(detail::require(g, "hi"), "hi"),
                                    detail::require(g, "n").get<std::size_t>()))
            ys.push_back({y});
    } else {
        ys = detail::require(cfg, "points").get<std::vector<std::vector<double>>>();
    }
    if (ys.empty()) throw ConfigurationError("no density points");
    const auto alphas = cfg.value("alphas", std::vector<std::vector<std::size_t>>{{}});

    std::vector<DensityEstimate> rows;
    for (const auto& a : alphas) {
        if (a.empty()) {
            auto g = density_grid(prob, ys, mc);
            for (auto& e : g.points) rows.push_back(std::move(e));
        } else {
            for (const auto& y : ys) rows.push_back(density_point(prob, y, a, mc));
        }
    }
    RunOutput out;
    out.csv = detail::header("density", seed) + "# samples=" + std::to_string(mc.samples) +
              "\npoint,alpha,estimate,stderr,n_samples,degenerate_fraction\n";
    for (const auto& e : rows)
        out.csv += detail::join(e.point) + "," + detail::join_index(e.alpha) + "," + detail::fmt(e.value) + "," +
                   detail::fmt(e.std_error) + "," + std::to_string(e.samples) + "," + detail::fmt(e.degenerate_fraction) + "\n";
    if (cfg.contains("expected")) {
        const auto exp = cfg["expected"].get<std::vector<double>>();
        if (exp.size() != rows.size()) throw ConfigurationError("expected must list one value per output row");
        const double tol = cfg.value("tolerance_se", 4.0);
        std::size_t bad = 0;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!(std::abs(rows[i].value - exp[i]) <= tol * rows[i].std_error)) ++bad;
        out.summary = std::to_string(rows.size() - bad) + "/" + std::to_string(rows.size()) + " rows within " +
                      detail::fmt(tol) + " s.e. of the expected values";
        out.status = bad ? 1 : 0;
    } else {
        out.summary = std::to_string(rows.size()) + " density rows";
    }
    return out;
}

// ============================================================================
// ibp-suite
// ============================================================================
//
// {"seed", "samples", "threshold": 4, "noise", "flip_log_gradient": false,
//  "tests": [{"kind": "ibp", "name", "functionals", "g", "phi", "beta",
//             "localization", "expected"} |
//            {"kind": "duality", "name", "functional", "u": [expr per coordinate]}]}
// A test passes when |z| < threshold and, if "expected" is given, both sides
// lie within 3 s.e. of it.

[[nodiscard]] inline RunOutput run_ibp_suite(const Json& cfg, const RunOptions& opt) {
    const std::uint64_t seed = detail::config_seed(cfg, opt);
    const std::size_t samples = detail::count(cfg, "samples", 100000);
    const double threshold = cfg.value("threshold", 4.0);
    NoiseSpec noise = noise_from_json(detail::resolve(detail::require(cfg, "noise"), opt));
    if (cfg.value("flip_log_gradient", false)) noise = noise.with_flipped_log_gradient();
    const auto& tests = detail::require(cfg, "tests");
    if (!tests.is_array() || tests.empty()) throw ConfigurationError("the battery has no tests");

    RunOutput out;
    out.csv = detail::header("ibp-suite", seed) + "# threshold=" + detail::fmt(threshold) +
              (noise.flipped() ? "\n# flip_log_gradient=true" : "") +
              "\nname,lhs,lhs_stderr,rhs,rhs_stderr,difference,difference_stderr,z,samples,degenerate,passed\n";
    std::size_t failed = 0;
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const auto& t = tests[i];
        const std::string kind = t.value("kind", std::string("ibp"));
        const std::string name = t.value("name", kind + "_" + std::to_string(i));
        const McSettings mc{t.value("samples", samples), seed, opt.workers};
        SelfTestResult r;
        if (kind == "ibp") {
            const FunctionalSet f(exprs_from_json(detail::require(t, "functionals")));
            const Expr g = t.contains("g") ? expr_from_json(t["g"]) : Expr(1.0);
            r = ibp_selftest(noise, f, g, expr_from_json(detail::require(t, "phi")),
                             t.value("beta", std::vector<std::size_t>{}), localization_from_json(t.value("localization", Json())),
                             mc, name);
        } else if (kind == "duality") {
            r = duality_selftest(noise, expr_from_json(detail::require(t, "functional")), exprs_from_json(detail::require(t, "u")),
                                 mc, name);
        } else {
            throw ConfigurationError("unknown test kind '" + kind + "'");
        }
        bool ok = r.passed(threshold);
        if (t.contains("expected")) {
            const double e = detail::number(t["expected"], "expected");
            ok = ok && std::abs(r.lhs.value - e) <= 3.0 * r.lhs.std_error && std::abs(r.rhs.value - e) <= 3.0 * r.rhs.std_error;
        }
        if (!ok) ++failed;
        out.csv += r.name + "," + detail::fmt(r.lhs.value) + "," + detail::fmt(r.lhs.std_error) + "," +
                   detail::fmt(r.rhs.value) + "," + detail::fmt(r.rhs.std_error) + "," + detail::fmt(r.difference.value) +
                   "," + detail::fmt(r.difference.std_error) + "," + detail::fmt(r.z) + "," + std::to_string(r.samples) +
                   "," + std::to_string(r.degenerate) + "," + (ok ? "1" : "0") + "\n";
    }
    out.status = failed ? 1 : 0;
    out.summary = std::to_string(tests.size() - failed) + "/" + std::to_string(tests.size()) + " self-tests passed";
    return out;
}

// ============================================================================
// euler-tv
// ============================================================================
//
// {"seed", "model": {"drift", "diffusion", "x0", "horizon"} | path, "steps": [n...],
//  "density_samples", "grid_points", "hist_samples", "bins", "sobolev_samples",
//  "sobolev_max_steps", "profile_samples", "eps": [...],
//  "require_decreasing": false, "ou_oracle": {"k", "s"}}

[[nodiscard]] inline RunOutput run_euler_tv(const Json& cfg, const RunOptions& opt) {
    const std::uint64_t seed = detail::config_seed(cfg, opt);
    const DiffusionModel model = diffusion_from_json(detail::resolve(detail::require(cfg, "model"), opt));
    EulerStudySettings st;
    st.seed = seed;
    st.workers = opt.workers;
    if (cfg.contains("steps")) {
        st.steps = cfg["steps"].get<std::vector<std::size_t>>();
        if (st.steps.empty() || !std::is_sorted(st.steps.begin(), st.steps.end()))
            throw ConfigurationError("steps must be a non-empty sorted list");
    }
    st.density_samples = cfg.value("density_samples", st.density_samples);
    st.grid_points = cfg.value("grid_points", st.grid_points);
    st.hist_samples = detail::count(cfg, "hist_samples", st.hist_samples);
    st.bins = cfg.value("bins", st.bins);
    st.sobolev_samples = cfg.value("sobolev_samples", st.sobolev_samples);
    st.sobolev_max_steps = cfg.value("sobolev_max_steps", st.sobolev_max_steps);
    st.profile_samples = cfg.value("profile_samples", st.profile_samples);
    if (cfg.contains("eps")) st.eps = detail::sorted_grid(cfg["eps"], "eps");
    const EulerStudy s = euler_tv_experiment(model, st);

    RunOutput out;
    out.csv = detail::header("euler-tv", seed) + "# reference_steps=" + std::to_string(s.reference_steps) +
              "\n# density_samples=" + std::to_string(st.density_samples) + "\n# hist_samples=" +
              std::to_string(st.hist_samples) + "\n";
    double ou_z = 0.0;
    if (cfg.contains("ou_oracle") && !s.grid.empty()) {
        const auto& o = cfg["ou_oracle"];
        const auto [m, v] = ou_euler_law(detail::number(detail::require(o, "k"), "k"), detail::number(detail::require(o, "s"), "s"),
                                         model.x0, model.horizon, s.reference_steps);
        for (std::size_t i = 0; i < s.grid.size(); ++i) {
            const double p = normal_pdf((s.grid[i] - m) / std::sqrt(v)) / std::sqrt(v);
            const double se = s.density_se.back()[i];
            if (se > 0.0) ou_z = std::max(ou_z, std::abs(s.densities.back()[i] - p) / se);
        }
        out.csv += "# ou_max_z=" + detail::fmt(ou_z) + "\n";
    }
    out.csv += "steps,tv_density,tv_density_halfwidth,tv_hist,tv_hist_halfwidth,sobolev,sobolev_stderr,degenerate_fraction";
    if (s.profile)
        for (double e : s.profile->eps) out.csv += ",eta_" + detail::fmt(e);
    out.csv += "\n";
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        const auto& r = s.rows[i];
        out.csv += std::to_string(r.steps) + "," + (r.tv_density ? detail::fmt(r.tv_density->value) : "") + "," +
                   (r.tv_density ? detail::fmt(r.tv_density->half_width) : "") + "," + detail::fmt(r.tv_hist.value) + "," +
                   detail::fmt(r.tv_hist.half_width) + "," + (r.sobolev ? detail::fmt(r.sobolev->norm.value) : "") + "," +
                   (r.sobolev ? detail::fmt(r.sobolev->norm.std_error) : "") + "," + detail::fmt(r.degenerate_fraction);
        if (s.profile)
            for (std::size_t e = 0; e < s.profile->eps.size(); ++e)
                out.csv += "," + detail::fmt(s.profile->rows[i * s.profile->eps.size() + e].p_det);
        out.csv += "\n";
    }
    const double rho = s.grid.empty() ? s.spearman_hist : s.spearman_density;
    out.summary = "spearman(steps, TV) = " + detail::fmt(rho);
    if (cfg.value("require_decreasing", false) && !(rho < 0.0)) out.status = 1;
    if (cfg.contains("ou_oracle") && ou_z >= 4.0) out.status = 1;
    return out;
}

// ============================================================================
// jump-converge
// ============================================================================
//
// {"seed", "model": "default" | {...} | path, "levels": [M...], "horizon", "paths",
//  "bins", "density_paths", "grid_points", "localization", "sobolev_paths",
//  "profile_paths", "eps": [...], "require_decreasing": false}

[[nodiscard]] inline RunOutput run_jump_convergence(const Json& cfg, const RunOptions& opt) {
    const std::uint64_t seed = detail::config_seed(cfg, opt);
    const JumpModel model = jump_model_from_json(detail::resolve(cfg.value("model", Json("default")), opt));
    JumpStudySettings st;
    st.seed = seed;
    st.workers = opt.workers;
    if (cfg.contains("levels")) {
        st.levels = cfg["levels"].get<std::vector<int>>();
        if (st.levels.empty() || !std::is_sorted(st.levels.begin(), st.levels.end()))
            throw ConfigurationError("levels must be a non-empty sorted list");
    }
    st.horizon = cfg.value("horizon", st.horizon);
    st.paths = detail::count(cfg, "paths", st.paths);
    st.bins = cfg.value("bins", st.bins);
    st.density_paths = cfg.value("density_paths", st.density_paths);
    st.grid_points = cfg.value("grid_points", st.grid_points);
    st.localization = cfg.value("localization", st.localization);
    st.sobolev_paths = cfg.value("sobolev_paths", st.sobolev_paths);
    st.profile_paths = cfg.value("profile_paths", st.profile_paths);
    if (cfg.contains("eps")) st.eps = detail::sorted_grid(cfg["eps"], "eps");
    const JumpStudy s = tv_convergence_experiment(model, st);

    RunOutput out;
    out.csv = detail::header("jump-converge", seed) + "# horizon=" + detail::fmt(st.horizon) + "\n# paths=" +
              std::to_string(st.paths) + "\n# reference_level=" + std::to_string(s.reference_level) +
              "\n# reference_error=" + detail::fmt(s.reference_error) + "\n# lambda_M=";
    for (std::size_t i = 0; i < s.rows.size(); ++i)
        out.csv += (i ? ";" : "") + std::to_string(s.rows[i].level) + ":" + detail::fmt(s.rows[i].lambda);
    out.csv += "\nlevel,lambda,tv_hist,tv_hist_halfwidth,tv_density,tv_density_halfwidth,localized_mass,atom,sobolev,sobolev_stderr";
    if (s.profile)
        for (double e : s.profile->eps) out.csv += ",eta_" + detail::fmt(e);
    out.csv += "\n";
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        const auto& r = s.rows[i];
        out.csv += std::to_string(r.level) + "," + detail::fmt(r.lambda) + "," + detail::fmt(r.tv_hist.value) + "," +
                   detail::fmt(r.tv_hist.half_width) + "," + (r.tv_density ? detail::fmt(r.tv_density->value) : "") + "," +
                   (r.tv_density ? detail::fmt(r.tv_density->half_width) : "") + "," + detail::fmt(r.localized_mass) + "," +
                   detail::fmt(r.atom) + "," + (r.sobolev ? detail::fmt(r.sobolev->value) : "") + "," +
                   (r.sobolev ? detail::fmt(r.sobolev->std_error) : "");
        if (s.profile)
            for (std::size_t e = 0; e < s.profile->eps.size(); ++e)
                out.csv += "," + detail::fmt(s.profile->rows[i * s.profile->eps.size() + e].p_det);
        out.csv += "\n";
    }
    out.summary = "spearman(M, TV) = " + detail::fmt(s.spearman);
    if (cfg.value("require_decreasing", false) && !(s.spearman < 0.0)) out.status = 1;
    return out;
}

// ============================================================================
// diagnostics
// ============================================================================
//
// {"seed", "samples", "noise", "functionals", "fbar": [expr], "localization", "q": 2, "p": 2}

[[nodiscard]] inline RunOutput run_diagnostics(const Json& cfg, const RunOptions& opt) {
    const std::uint64_t seed = detail::config_seed(cfg, opt);
    const McSettings mc{detail::count(cfg, "samples", 10000), seed, opt.workers};
    const NoiseSpec noise = noise_from_json(detail::resolve(detail::require(cfg, "noise"), opt));
    const FunctionalSet f(exprs_from_json(detail::require(cfg, "functionals")));
    std::optional<FunctionalSet> fbar;
    if (cfg.contains("fbar")) fbar.emplace(exprs_from_json(cfg["fbar"]));
    const int q = cfg.value("q", 2), p = cfg.value("p", 2);
    const DiagnosticsReport r =
        diagnostics(noise, f, fbar ? &*fbar : nullptr, localization_from_json(cfg.value("localization", Json())), q, p, mc);
    RunOutput out;
    out.csv = detail::header("diagnostics", seed) + "# samples=" + std::to_string(r.samples) + "\n# q=" +
              std::to_string(q) + "\n# p=" + std::to_string(p) + "\nquantity,value,stderr\n";
    const std::pair<const char*, Estimate> rows[] = {{"S", r.S}, {"Q", r.Q}, {"Q_pair", r.Q_pair},
                                                     {"m", r.m}, {"U", r.U}, {"theta_mass", r.theta_mass}};
    for (const auto& [name, e] : rows) {
        if (std::string(name) == "Q_pair" && !fbar) continue;
        out.csv += std::string(name) + "," + detail::fmt(e.value) + "," + detail::fmt(e.std_error) + "\n";
    }
    out.csv += "degenerate," + std::to_string(r.degenerate) + ",0\nunbounded," + (r.unbounded ? "1" : "0") + ",0\n";
    out.summary = "U = " + detail::fmt(r.U.value) + (r.unbounded ? " (unbounded)" : "");
    return out;
}

}  // namespace mkit
