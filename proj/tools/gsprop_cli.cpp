// Command-line front end: runs the forecast-accuracy experiment, exports the
// truth pdf evolution, and dumps the progressive-selection sampling pdfs.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "gsprop/config.hpp"
#include "gsprop/experiment.hpp"
#include "gsprop/seeder.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitNumericalError = 2;

gsprop::ExperimentConfig load_with_overrides(const std::string& config_path, int runs,
                                             long long seed, const std::string& out_dir) {
  gsprop::ExperimentConfig cfg = gsprop::load_config(config_path);
  if (runs > 0) {
    cfg.monte_carlo_runs = runs;
  }
  if (seed >= 0) {
    cfg.rng_seed = static_cast<std::uint64_t>(seed);
  }
  if (!out_dir.empty()) {
    cfg.output_dir = out_dir;
  }
  cfg.validate();
  return cfg;
}

int cmd_run(const std::string& config_path, int runs, long long seed,
            const std::string& out_dir) {
  const gsprop::ExperimentConfig cfg = load_with_overrides(config_path, runs, seed, out_dir);
  std::printf("running %d Monte Carlo repetition(s), base seed %llu\n",
              cfg.monte_carlo_runs, static_cast<unsigned long long>(cfg.rng_seed));
  auto progress = [&](int done, int total) {
    if (done == total || done % 10 == 0) {
      std::printf("  GS_DEC run %d/%d\n", done, total);
      std::fflush(stdout);
    }
  };
  const gsprop::ExperimentResult res = gsprop::run_and_write(cfg, progress);

  const auto& agg = res.aggregate;
  std::printf("\n%-8s %12s %12s %12s %12s\n", "method", "L_hat", "R_err", "ISD", "WISD");
  std::printf("%-8s %12.4g %12s %12s %12s\n", "TRUTH", agg.truth_expected_loss, "-", "-",
              "-");
  for (const auto& m : agg.means) {
    std::printf("%-8s %12.4g %12.4g %12.4g %12.4g\n", m.method.c_str(), m.expected_loss,
                m.relative_error, m.isd, m.wisd);
  }
  if (agg.failed_runs > 0) {
    std::printf("excluded %d failed run(s) from the aggregates\n", agg.failed_runs);
  }
  std::printf("wrote runs.csv, aggregate.csv, pdf_t8.csv to %s\n", cfg.output_dir.c_str());
  return kExitOk;
}

int cmd_truth(const std::string& config_path, const std::string& out_dir) {
  gsprop::ExperimentConfig cfg = gsprop::load_config(config_path);
  if (!out_dir.empty()) {
    cfg.output_dir = out_dir;
  }
  cfg.validate();
  const gsprop::TruthResult truth = gsprop::solve_truth(cfg, /*epoch_snapshots=*/true);

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  for (const auto& snap : truth.solution.snapshots) {
    char name[64];
    std::snprintf(name, sizeof(name), "truth_t%g.csv", snap.time);
    std::ofstream out(dir / name);
    out << "x,p\n";
    for (std::size_t i = 0; i < snap.x.size(); ++i) {
      out << gsprop::detail::format_double(snap.x[i]) << ','
          << gsprop::detail::format_double(snap.p[i]) << '\n';
    }
  }
  std::printf("truth expected loss at t_d = %.6g\n", truth.expected_loss);
  if (truth.solution.boundary_warning) {
    std::printf("warning: boundary density reached %.3g (threshold %.3g)\n",
                truth.solution.max_boundary_density,
                cfg.make_grid_spec().boundary_density_tol);
  }
  std::printf("wrote %zu snapshot file(s) to %s\n", truth.solution.snapshots.size(),
              cfg.output_dir.c_str());
  return kExitOk;
}

int cmd_seed_demo(const std::string& config_path, long long seed,
                  const std::string& out_dir) {
  gsprop::ExperimentConfig cfg = gsprop::load_config(config_path);
  if (seed >= 0) {
    cfg.rng_seed = static_cast<std::uint64_t>(seed);
  }
  if (!out_dir.empty()) {
    cfg.output_dir = out_dir;
  }
  cfg.validate();

  const gsprop::DynamicsModel model = cfg.make_model();
  const gsprop::SeedingOutcome outcome = gsprop::progressive_selection(
      cfg.make_initial_pdf(), model, cfg.make_seeder_config(cfg.rng_seed),
      cfg.make_loss());

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  gsprop::write_sampling_iterations_csv((dir / "sampling_iters.csv").string(),
                                        outcome.sampling_history, cfg.make_grid_spec());

  std::printf("progressive selection: %d iteration(s), %s, best alpha %.6g\n",
              outcome.iterations,
              outcome.converged ? "converged" : "stopped at max_iter",
              outcome.best_alpha);
  std::printf("seeded %zu zero-weight component(s):\n",
              outcome.mixture.size() - cfg.make_initial_pdf().size());
  for (std::size_t i = cfg.make_initial_pdf().size(); i < outcome.mixture.size(); ++i) {
    const auto& c = outcome.mixture.components[i];
    std::printf("  mean %.6g  cov %.6g\n", c.mean(0), c.cov(0, 0));
  }
  std::printf("wrote sampling_iters.csv to %s\n", cfg.output_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-sensitive Gaussian-sum uncertainty propagation"};
  app.require_subcommand(1);

  std::string config_path = "paper_experiment";
  int runs = -1;
  long long seed = -1;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "run the Monte-Carlo forecast comparison");
  run->add_option("--config", config_path, "config file or 'paper_experiment'");
  run->add_option("--runs", runs, "override monte_carlo_runs");
  run->add_option("--seed", seed, "override the base rng seed");
  run->add_option("--out", out_dir, "override the output directory");

  auto* truth = app.add_subcommand("truth", "solve and export the truth pdf");
  truth->add_option("--config", config_path, "config file or 'paper_experiment'");
  truth->add_option("--out", out_dir, "override the output directory");

  auto* demo = app.add_subcommand("seed-demo",
                                  "run progressive selection once and export the "
                                  "per-iteration sampling pdfs");
  demo->add_option("--config", config_path, "config file or 'paper_experiment'");
  demo->add_option("--seed", seed, "override the rng seed");
  demo->add_option("--out", out_dir, "override the output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, runs, seed, out_dir);
    }
    if (truth->parsed()) {
      return cmd_truth(config_path, out_dir);
    }
    if (demo->parsed()) {
      return cmd_seed_demo(config_path, seed, out_dir);
    }
  } catch (const gsprop::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumericalError;
  }
  return kExitOk;
}
