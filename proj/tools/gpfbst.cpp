// Command-line front end: droplet reproduction run, custom-dataset tests,
// the Stokes threshold derivation, and GP path draws.
//
// Exit codes: 0 success, 1 usage/config, 2 data, 3 numerical.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gpfbst/experiment.hpp"

namespace {

struct CliOverrides {
    std::string config;
    std::string data;
    std::string out;
    std::string epsilon;
    std::string measure;
    std::string grid;
    std::string hypotheses;
    std::optional<double> alpha;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CliOverrides& o) {
    cmd->add_option("--config", o.config, "flat dotted-key config file");
    cmd->add_option("--data", o.data, "dataset CSV (t,radius[,v_mean])");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--alpha", o.alpha, "test level in (0,1)");
    cmd->add_option("--epsilon", o.epsilon, "pragmatic radius: a number, 'stokes', or 'none'");
    cmd->add_option("--seed", o.seed, "RNG seed for path draws");
    cmd->add_option("--measure", o.measure,
                    "pragmatic covariate measure: uniform, dp:TAU, or dp:TAU:LO:HI");
    cmd->add_option("--grid", o.grid, "finite domain: 'lo:step:hi', comma list, or 'continuous'");
    cmd->add_option("--hypotheses", o.hypotheses,
                    "comma list: intercept+slope, intercept-only, file:PATH");
}

void apply_overrides(gpfbst::ExperimentConfig& cfg, const CliOverrides& o) {
    if (!o.config.empty()) gpfbst::load_config_file(cfg, o.config);
    if (!o.data.empty()) cfg.data_path = o.data;
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (!o.epsilon.empty()) cfg.epsilon = o.epsilon;
    if (!o.measure.empty()) gpfbst::apply_config_entry(cfg, "pragmatic.measure", o.measure);
    if (!o.grid.empty()) cfg.grid = o.grid;
    if (!o.hypotheses.empty()) gpfbst::apply_config_entry(cfg, "hypotheses", o.hypotheses);
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.seed) cfg.seed = *o.seed;
}

void print_table(const gpfbst::RunReport& rep) {
    std::printf("%-18s %-9s %-9s %12s %12s %12s  %s\n", "hypothesis", "domain", "pragmatic",
                "statistic", "threshold", "e_value", "reject");
    for (const auto& row : rep.rows) {
        std::printf("%-18s %-9s %-9s %12.6g %12.6g %12.6g  %s\n", row.hypothesis.c_str(),
                    row.domain.c_str(), row.pragmatic ? "yes" : "no", row.outcome.statistic,
                    row.outcome.threshold, row.outcome.e_value,
                    row.outcome.reject ? "true" : "false");
        if (!row.outcome.notes.empty())
            std::printf("    note: %s\n", row.outcome.notes.c_str());
    }
}

int run_tests(const CliOverrides& o, bool droplet) {
    gpfbst::ExperimentConfig cfg =
        droplet ? gpfbst::droplet_defaults("data/droplet.csv") : gpfbst::ExperimentConfig{};
    apply_overrides(cfg, o);
    const gpfbst::RunReport rep =
        droplet ? gpfbst::run_droplet(cfg) : gpfbst::run_custom(cfg);
    std::filesystem::create_directories(cfg.output_dir);
    gpfbst::write_report(cfg, rep);
    print_table(rep);
    if (rep.stokes)
        std::printf("stokes threshold: eps_inf = %.6g, eps_l2 = %.6g\n", rep.stokes->eps_inf,
                    rep.stokes->eps_l2);
    std::printf("outputs written to %s\n", cfg.output_dir.c_str());
    return 0;
}

int run_threshold(const CliOverrides& o) {
    gpfbst::ExperimentConfig cfg = gpfbst::droplet_defaults("data/droplet.csv");
    apply_overrides(cfg, o);
    const gpfbst::Dataset d = gpfbst::load_dataset(cfg.data_path, false);
    if (!d.has_v_mean) throw gpfbst::DataError("threshold needs a v_mean column");
    const auto st = gpfbst::stokes_threshold(d.t(), d.v_mean(), d.radius(), cfg.stokes.delta,
                                             cfg.stokes.eta, cfg.stokes.ks);
    std::printf("eps_inf = %.10g\neps_l2 = %.10g\n", st.eps_inf, st.eps_l2);
    return 0;
}

int run_draws(const CliOverrides& o, bool droplet_defaults_requested) {
    gpfbst::ExperimentConfig cfg = droplet_defaults_requested
                                       ? gpfbst::droplet_defaults("data/droplet.csv")
                                       : gpfbst::ExperimentConfig{};
    apply_overrides(cfg, o);
    if (cfg.data_path.empty()) throw gpfbst::ConfigError("data_path is required");
    const gpfbst::Dataset d = gpfbst::load_dataset(cfg.data_path, false);

    std::vector<gpfbst::DropletRecord> sorted = d.records;
    std::sort(sorted.begin(), sorted.end(),
              [](const gpfbst::DropletRecord& a, const gpfbst::DropletRecord& b) {
                  if (a.t != b.t) return a.t < b.t;
                  return a.radius < b.radius;
              });
    gpfbst::PointMatrix x(static_cast<Eigen::Index>(sorted.size()), 1);
    gpfbst::Vector y(static_cast<Eigen::Index>(sorted.size()));
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = sorted[i].t;
        y(static_cast<Eigen::Index>(i)) = sorted[i].radius;
    }

    gpfbst::Vector dense(cfg.paths.points);
    const double step = (cfg.paths.hi - cfg.paths.lo) / (cfg.paths.points - 1);
    for (int i = 0; i < cfg.paths.points; ++i) dense(i) = cfg.paths.lo + i * step;
    const gpfbst::PointMatrix grid = gpfbst::points_1d(dense);

    gpfbst::GpPrior prior;
    prior.mean = gpfbst::constant_mean(cfg.prior.mean_const);
    prior.kernel = gpfbst::Kernel{cfg.prior.kernel, cfg.prior.length_scale, cfg.prior.amplitude};
    prior.noise_var = cfg.prior.noise_var;

    gpfbst::GpPosterior prior_on_grid;
    prior_on_grid.grid = grid;
    prior_on_grid.mean = gpfbst::eval_mean(prior.mean, grid);
    prior_on_grid.cov = gpfbst::kernel_matrix(prior.kernel, grid, grid);
    const gpfbst::GpPosterior post_on_grid = gpfbst::posterior(prior, x, y, grid);

    const gpfbst::Matrix prior_paths = gpfbst::draw_paths(prior_on_grid, cfg.paths.count, cfg.seed);
    const gpfbst::Matrix post_paths =
        gpfbst::draw_paths(post_on_grid, cfg.paths.count, cfg.seed + 1);

    std::filesystem::create_directories(cfg.output_dir);
    const std::string dir = cfg.output_dir;
    {
        std::ofstream f(dir + "/paths_prior.csv", std::ios::binary);
        f << gpfbst::paths_csv(grid, prior_on_grid.mean, prior_paths);
    }
    {
        std::ofstream f(dir + "/paths_posterior.csv", std::ios::binary);
        f << gpfbst::paths_csv(grid, post_on_grid.mean, post_paths);
    }
    std::printf("paths written to %s\n", dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian significance tests for linear-model adequacy under a GP prior"};
    app.require_subcommand(1);

    CliOverrides o;
    CLI::App* droplet = app.add_subcommand("droplet", "reproduce the water-droplet analysis");
    CLI::App* test = app.add_subcommand("test", "run the tests on a custom dataset");
    CLI::App* threshold = app.add_subcommand("threshold", "Stokes-law epsilon from v_mean");
    CLI::App* draws = app.add_subcommand("draws", "emit prior/posterior GP path draws");
    for (CLI::App* cmd : {droplet, test, threshold, draws}) add_common(cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (droplet->parsed()) return run_tests(o, true);
        if (test->parsed()) return run_tests(o, false);
        if (threshold->parsed()) return run_threshold(o);
        if (draws->parsed()) return run_draws(o, !o.data.empty() ? false : true);
        return 1;
    } catch (const gpfbst::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const gpfbst::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const gpfbst::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
