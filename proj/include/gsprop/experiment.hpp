#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsprop/config.hpp"
#include "gsprop/fpke_weights.hpp"
#include "gsprop/metrics.hpp"
#include "gsprop/seeder.hpp"
#include "gsprop/truth_solver.hpp"

namespace gsprop {

enum class Method { kEkf, kGsBck, kGsDec };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kEkf:
      return "EKF";
    case Method::kGsBck:
      return "GS_BCK";
    case Method::kGsDec:
      return "GS_DEC";
  }
  return "?";
}

struct TruthResult {
  FpkeSolution solution;
  double expected_loss = 0.0;
};

/// Reference solve used by every method comparison; snapshots are taken at
/// the weight-update epochs so the pdf evolution can be exported.
inline TruthResult solve_truth(const ExperimentConfig& cfg, bool epoch_snapshots = false) {
  const DynamicsModel model = cfg.make_model();
  const GaussianMixture initial = cfg.make_initial_pdf();
  std::vector<double> snaps;
  if (epoch_snapshots) {
    for (double t = cfg.weight_update_interval; t < cfg.decision_time - 1e-12;
         t += cfg.weight_update_interval) {
      snaps.push_back(t);
    }
  }
  TruthResult out;
  out.solution = solve_fpke(model, initial, cfg.make_grid_spec(), cfg.decision_time,
                            std::move(snaps));
  out.expected_loss = expected_loss_on_grid(out.solution.final_pdf(), cfg.make_loss());
  return out;
}

/// Final-time mixture of one method. EKF collapses the initial pdf to its
/// moments and propagates without weight adaptation; the two Gaussian-sum
/// methods seed extra components and adapt weights every update interval.
inline GaussianMixture run_method_mixture(const ExperimentConfig& cfg, Method method,
                                          std::uint64_t seed) {
  const DynamicsModel model = cfg.make_model();
  const GaussianMixture initial = cfg.make_initial_pdf();
  const LossFunction loss = cfg.make_loss();
  const PropagationSchedule schedule = cfg.make_schedule();

  if (method == Method::kEkf) {
    const auto [mu0, p0] = mixture_moments(initial);
    const GaussianComponent start(1.0, mu0, p0);
    GaussianMixture out;
    out.components.push_back(
        propagate_component(model, start, schedule.t_start, schedule.t_end, cfg.ode_step));
    return out;
  }

  GaussianMixture seeded;
  if (method == Method::kGsBck) {
    seeded = backprop_seed(initial, model, loss, cfg.decision_time, cfg.backprop_count,
                           cfg.backprop_variance, cfg.ode_step);
  } else {
    seeded = progressive_selection(initial, model, cfg.make_seeder_config(seed), loss)
                 .mixture;
  }
  const WeightAdapter adapter = make_fpke_weight_adapter(cfg.make_quadrature_spec());
  return propagate_mixture(model, seeded, schedule, adapter).final_state();
}

/// One Monte-Carlo row: runs the method and scores it against the cached truth.
inline RunReport run_method(const ExperimentConfig& cfg, Method method,
                            std::uint64_t seed, const TruthResult& truth) {
  RunReport report;
  report.method = method_name(method);
  report.seed = seed;
  try {
    const GaussianMixture final_mix = run_method_mixture(cfg, method, seed);
    const LossFunction loss = cfg.make_loss();
    report.expected_loss = expected_loss_mixture(final_mix, loss);
    report.relative_error = relative_error(report.expected_loss, truth.expected_loss);
    report.isd = isd(truth.solution.final_pdf(), final_mix);
    report.wisd = wisd(truth.solution.final_pdf(), final_mix, loss);
  } catch (const std::exception& e) {
    report.failed = true;
    report.failure = e.what();
    report.expected_loss = report.relative_error = report.isd = report.wisd =
        std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

/// Nearest-rank percentile on a sorted sample; 0% is the minimum, 100% the
/// maximum.
inline double percentile_nearest_rank(const std::vector<double>& sorted, double percent) {
  detail::require(!sorted.empty(), "percentile of empty sample");
  const auto n = static_cast<long>(sorted.size());
  long rank = static_cast<long>(std::ceil(percent / 100.0 * static_cast<double>(n)));
  rank = std::clamp<long>(rank, 1, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

struct MethodMean {
  std::string method;
  double expected_loss = 0.0;
  double relative_error = 0.0;
  double isd = 0.0;
  double wisd = 0.0;
};

struct PercentileRow {
  double percent = 0.0;
  double expected_loss = 0.0;
  double relative_error = 0.0;
  double isd = 0.0;
  double wisd = 0.0;
};

struct AggregateReport {
  double truth_expected_loss = 0.0;
  std::vector<MethodMean> means;          // EKF, GS_BCK, GS_DEC
  std::vector<PercentileRow> percentiles;  // GS_DEC only
  std::vector<RunReport> runs;
  int failed_runs = 0;
};

struct ExperimentResult {
  AggregateReport aggregate;
  GridPdf truth_final;
  GaussianMixture ekf_final;
  GaussianMixture gsbck_final;
  GaussianMixture gsdec_first;  // final mixture of the first seeded run
};

inline constexpr double kPercentLevels[] = {0.0,  5.0,  10.0, 25.0, 50.0,
                                            75.0, 90.0, 95.0, 100.0};

/// Runs the full comparison: one truth solve, the deterministic EKF and
/// GS_BCK rows, and monte_carlo_runs seeded GS_DEC rows (seed = base + index).
/// Failed rows stay in `runs` but are excluded from means and percentiles.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(int, int)>& progress = {}) {
  cfg.validate();
  ExperimentResult result;

  const TruthResult truth = solve_truth(cfg);
  result.truth_final = truth.solution.final_pdf();
  result.aggregate.truth_expected_loss = truth.expected_loss;

  // EKF and GS_BCK have no sampling stage: compute once, replicate per row.
  const RunReport ekf_row = run_method(cfg, Method::kEkf, cfg.rng_seed, truth);
  const RunReport bck_row = run_method(cfg, Method::kGsBck, cfg.rng_seed, truth);
  if (!ekf_row.failed) {
    result.ekf_final = run_method_mixture(cfg, Method::kEkf, cfg.rng_seed);
  }
  if (!bck_row.failed) {
    result.gsbck_final = run_method_mixture(cfg, Method::kGsBck, cfg.rng_seed);
  }

  std::vector<RunReport> dec_rows;
  dec_rows.reserve(static_cast<std::size_t>(cfg.monte_carlo_runs));
  for (int i = 0; i < cfg.monte_carlo_runs; ++i) {
    const std::uint64_t seed = cfg.rng_seed + static_cast<std::uint64_t>(i);
    dec_rows.push_back(run_method(cfg, Method::kGsDec, seed, truth));
    if (i == 0 && !dec_rows.front().failed) {
      result.gsdec_first = run_method_mixture(cfg, Method::kGsDec, seed);
    }
    if (progress) {
      progress(i + 1, cfg.monte_carlo_runs);
    }
  }

  auto& agg = result.aggregate;
  for (int i = 0; i < cfg.monte_carlo_runs; ++i) {
    const std::uint64_t seed = cfg.rng_seed + static_cast<std::uint64_t>(i);
    RunReport e = ekf_row;
    RunReport b = bck_row;
    e.seed = b.seed = seed;
    agg.runs.push_back(e);
    agg.runs.push_back(b);
    agg.runs.push_back(dec_rows[static_cast<std::size_t>(i)]);
  }

  auto mean_of = [&agg](const char* name) {
    MethodMean mm;
    mm.method = name;
    long count = 0;
    for (const auto& r : agg.runs) {
      if (r.method != name || r.failed) {
        continue;
      }
      mm.expected_loss += r.expected_loss;
      mm.relative_error += r.relative_error;
      mm.isd += r.isd;
      mm.wisd += r.wisd;
      ++count;
    }
    if (count > 0) {
      const double inv = 1.0 / static_cast<double>(count);
      mm.expected_loss *= inv;
      mm.relative_error *= inv;
      mm.isd *= inv;
      mm.wisd *= inv;
    }
    return mm;
  };
  agg.means = {mean_of("EKF"), mean_of("GS_BCK"), mean_of("GS_DEC")};

  std::vector<double> lhat, rerr, visd, vwisd;
  for (const auto& r : dec_rows) {
    if (r.failed) {
      ++agg.failed_runs;
      continue;
    }
    lhat.push_back(r.expected_loss);
    rerr.push_back(r.relative_error);
    visd.push_back(r.isd);
    vwisd.push_back(r.wisd);
  }
  std::sort(lhat.begin(), lhat.end());
  std::sort(rerr.begin(), rerr.end());
  std::sort(visd.begin(), visd.end());
  std::sort(vwisd.begin(), vwisd.end());
  if (!lhat.empty()) {
    for (double pct : kPercentLevels) {
      PercentileRow row;
      row.percent = pct;
      row.expected_loss = percentile_nearest_rank(lhat, pct);
      row.relative_error = percentile_nearest_rank(rerr, pct);
      row.isd = percentile_nearest_rank(visd, pct);
      row.wisd = percentile_nearest_rank(vwisd, pct);
      agg.percentiles.push_back(row);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_runs_csv(const std::string& path, const std::vector<RunReport>& runs) {
  std::ofstream out(path);
  if (!out) {
    throw NumericalError("cannot open output file: " + path);
  }
  out << "method,seed,L_hat,R_err,ISD,WISD\n";
  for (const auto& r : runs) {
    out << r.method << ',' << r.seed << ',' << detail::format_double(r.expected_loss)
        << ',' << detail::format_double(r.relative_error) << ','
        << detail::format_double(r.isd) << ',' << detail::format_double(r.wisd) << '\n';
  }
}

inline std::vector<RunReport> read_runs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw NumericalError("cannot open runs file: " + path);
  }
  std::vector<RunReport> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    RunReport r;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, r.method, ',');
    std::getline(ss, field, ',');
    r.seed = std::stoull(field);
    std::getline(ss, field, ',');
    r.expected_loss = std::stod(field);
    std::getline(ss, field, ',');
    r.relative_error = std::stod(field);
    std::getline(ss, field, ',');
    r.isd = std::stod(field);
    std::getline(ss, field, ',');
    r.wisd = std::stod(field);
    r.failed = std::isnan(r.expected_loss);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_aggregate_csv(const std::string& path, const AggregateReport& agg) {
  std::ofstream out(path);
  if (!out) {
    throw NumericalError("cannot open output file: " + path);
  }
  out << "method,stat,L_hat,R_err,ISD,WISD\n";
  out << "TRUTH,mean," << detail::format_double(agg.truth_expected_loss) << ",,,\n";
  for (const auto& m : agg.means) {
    out << m.method << ",mean," << detail::format_double(m.expected_loss) << ','
        << detail::format_double(m.relative_error) << ',' << detail::format_double(m.isd)
        << ',' << detail::format_double(m.wisd) << '\n';
  }
  for (const auto& p : agg.percentiles) {
    char stat[16];
    std::snprintf(stat, sizeof(stat), "p%g", p.percent);
    out << "GS_DEC," << stat << ',' << detail::format_double(p.expected_loss) << ','
        << detail::format_double(p.relative_error) << ',' << detail::format_double(p.isd)
        << ',' << detail::format_double(p.wisd) << '\n';
  }
}

/// Decision-time density comparison (plot data for the four methods).
inline void write_pdf_comparison_csv(const std::string& path, const ExperimentResult& res) {
  std::ofstream out(path);
  if (!out) {
    throw NumericalError("cannot open output file: " + path);
  }
  const MixtureEvaluator ekf(res.ekf_final);
  const MixtureEvaluator bck(res.gsbck_final);
  const bool have_dec = !res.gsdec_first.components.empty();
  const std::optional<MixtureEvaluator> dec =
      have_dec ? std::optional<MixtureEvaluator>(MixtureEvaluator(res.gsdec_first))
               : std::nullopt;
  out << "x,truth,ekf,gs_bck,gs_dec\n";
  for (std::size_t i = 0; i < res.truth_final.x.size(); ++i) {
    const double x = res.truth_final.x[i];
    out << detail::format_double(x) << ',' << detail::format_double(res.truth_final.p[i])
        << ',' << detail::format_double(ekf.at1d(x)) << ','
        << detail::format_double(bck.at1d(x)) << ',';
    if (dec) {
      out << detail::format_double(dec->at1d(x));
    }
    out << '\n';
  }
}

/// Per-iteration sampling pdf of one progressive-selection run (long format:
/// iter, x, p) evaluated on the truth grid abscissa.
inline void write_sampling_iterations_csv(const std::string& path,
                                          const std::vector<GaussianMixture>& history,
                                          const FpkeGridSpec& grid) {
  std::ofstream out(path);
  if (!out) {
    throw NumericalError("cannot open output file: " + path);
  }
  out << "iter,x,p\n";
  const double h = (grid.x_hi - grid.x_lo) / (grid.nodes - 1);
  for (std::size_t it = 0; it < history.size(); ++it) {
    const MixtureEvaluator eval(history[it]);
    for (int i = 0; i < grid.nodes; ++i) {
      const double x = grid.x_lo + i * h;
      out << (it + 1) << ',' << detail::format_double(x) << ','
          << detail::format_double(eval.at1d(x)) << '\n';
    }
  }
}

/// Runs the experiment and writes runs.csv, aggregate.csv and pdf_t8.csv
/// into cfg.output_dir.
inline ExperimentResult run_and_write(const ExperimentConfig& cfg,
                                      const std::function<void(int, int)>& progress = {}) {
  const ExperimentResult res = run_experiment(cfg, progress);
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  write_runs_csv((dir / "runs.csv").string(), res.aggregate.runs);
  write_aggregate_csv((dir / "aggregate.csv").string(), res.aggregate);
  write_pdf_comparison_csv((dir / "pdf_t8.csv").string(), res);
  return res;
}

}  // namespace gsprop
