// mkit: Malliavin-calculus toolkit driver.
//
//   mkit <density|ibp-suite|euler-tv|jump-converge|diagnostics> --config FILE
//        [--seed N] [--workers N] [--out FILE]
//
// Exit status: 0 ok, 1 a check in the config failed, 2 configuration or IO error.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mkit/experiments.hpp"

namespace {

constexpr const char* kSchemas = R"(CSV outputs start with '#' lines (command, seed, sample counts).
  density        point,alpha,estimate,stderr,n_samples,degenerate_fraction
  ibp-suite      name,lhs,lhs_stderr,rhs,rhs_stderr,difference,difference_stderr,z,samples,degenerate,passed
  euler-tv       steps,tv_density,tv_density_halfwidth,tv_hist,tv_hist_halfwidth,sobolev,sobolev_stderr,
                 degenerate_fraction,eta_<eps>...
  jump-converge  level,lambda,tv_hist,tv_hist_halfwidth,tv_density,tv_density_halfwidth,localized_mass,atom,
                 sobolev,sobolev_stderr,eta_<eps>...   (header records lambda_M per level)
  diagnostics    quantity,value,stderr
Points and multi-indices are ';'-separated. Empty cells mean "not computed".
Exit status: 0 ok, 1 a check in the config failed, 2 configuration or IO error.
MKIT_WORKERS sets the default worker count.)";

using Runner = mkit::RunOutput (*)(const mkit::Json&, const mkit::RunOptions&);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo Malliavin toolkit"};
    app.footer(kSchemas);
    app.require_subcommand(1);

    std::string config, out_path;
    std::uint64_t seed = 0;
    int workers = mkit::default_workers();
    const std::pair<const char*, Runner> commands[] = {
        {"density", mkit::run_density},         {"ibp-suite", mkit::run_ibp_suite},
        {"euler-tv", mkit::run_euler_tv},       {"jump-converge", mkit::run_jump_convergence},
        {"diagnostics", mkit::run_diagnostics},
    };
    const char* help[] = {"Density and derivative estimates on a grid", "Duality and integration-by-parts self-tests",
                          "Euler scheme TV convergence study", "Jump SDE truncation convergence study",
                          "Malliavin covariance and Sobolev diagnostics"};
    std::vector<CLI::App*> subs;
    std::vector<CLI::Option*> seed_opts;
    for (std::size_t i = 0; i < std::size(commands); ++i) {
        auto* sub = app.add_subcommand(commands[i].first, help[i]);
        sub->add_option("--config", config, "JSON configuration file")->required();
        seed_opts.push_back(sub->add_option("--seed", seed, "Override the config seed"));
        sub->add_option("--workers", workers, "Worker threads (default MKIT_WORKERS or hardware)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", out_path, "CSV output file (default stdout)");
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            const mkit::Json cfg = mkit::load_json_file(config);
            mkit::RunOptions opt;
            if (seed_opts[i]->count()) opt.seed = seed;
            opt.workers = workers;
            opt.base_dir = std::filesystem::path(config).parent_path();
            const mkit::RunOutput r = commands[i].second(cfg, opt);
            if (out_path.empty()) {
                std::cout << r.csv << std::flush;
            } else {
                std::ofstream f(out_path, std::ios::binary);
                f << r.csv;
                f.close();
                if (!f) throw mkit::ConfigurationError("cannot write " + out_path);
            }
            std::cerr << commands[i].first << ": " << r.summary << "\n";
            return r.status;
        }
    } catch (const mkit::ConfigurationError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const mkit::Json::exception& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
