#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsprop/dynamics.hpp"
#include "gsprop/fpke_weights.hpp"
#include "gsprop/gaussian.hpp"
#include "gsprop/propagator.hpp"
#include "gsprop/seeder.hpp"
#include "gsprop/truth_solver.hpp"

namespace gsprop {

/// Thrown for unparsable config text, unknown keys, or invalid values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full experiment description. Defaults encode the reference experiment:
/// sin(x) drift with unit noise intensity, initial N(-0.3, 0.3²), Gaussian
/// loss N(π/2, 0.1²) at t_d = 8 s, weight updates every 0.5 s, five seeded
/// components with β = 0.9 and weight tolerance 1e-3.
struct ExperimentConfig {
  std::string model_name = "sine";
  double linear_a = -1.0;
  double noise_q = 1.0;

  std::vector<double> initial_means = {-0.3};
  std::vector<double> initial_covs = {0.09};
  std::vector<double> initial_weights = {1.0};

  double loss_mean = M_PI / 2.0;
  double loss_cov = 0.01;

  double decision_time = 8.0;
  double ode_step = 0.01;
  double weight_update_interval = 0.5;

  int seeder_components = 5;       // M
  double seeder_default_cov = 0.01;  // D
  double seeder_beta = 0.9;
  double seeder_weight_tol = 1e-3;
  int seeder_max_iter = 25;
  int seeder_gamma_attempts = 100;

  int backprop_count = 5;
  double backprop_variance = 1e-10;

  double truth_x_lo = -6.0;
  double truth_x_hi = 6.0;
  int truth_nodes = 1201;
  double truth_dt = 1e-3;

  int quadrature_nodes = 801;
  double quadrature_sigma_pad = 6.0;
  // Residual quadrature volume cap; defaults to the truth-solver domain so
  // separatrix-widened components do not balloon the integration box.
  double quadrature_clamp_lo = -6.0;
  double quadrature_clamp_hi = 6.0;

  int monte_carlo_runs = 500;
  std::uint64_t rng_seed = 1;
  std::string output_dir = "out";

  static ExperimentConfig paper_experiment() { return ExperimentConfig{}; }

  [[nodiscard]] DynamicsModel make_model() const {
    return make_model_by_name(model_name, noise_q, linear_a);
  }

  [[nodiscard]] GaussianMixture make_initial_pdf() const {
    if (initial_means.size() != initial_covs.size() ||
        initial_means.size() != initial_weights.size()) {
      throw ConfigError("initial_means/initial_covs/initial_weights lengths differ");
    }
    GaussianMixture mix;
    for (std::size_t i = 0; i < initial_means.size(); ++i) {
      mix.components.emplace_back(initial_weights[i],
                                  Vector::Constant(1, initial_means[i]),
                                  Matrix::Constant(1, 1, initial_covs[i]));
    }
    return mix;
  }

  [[nodiscard]] LossFunction make_loss() const {
    LossFunction loss;
    loss.mean = Vector::Constant(1, loss_mean);
    loss.cov = Matrix::Constant(1, 1, loss_cov);
    loss.action_label = "assess";
    return loss;
  }

  [[nodiscard]] PropagationSchedule make_schedule() const {
    return PropagationSchedule{0.0, decision_time, ode_step, weight_update_interval};
  }

  [[nodiscard]] SeederConfig make_seeder_config(std::uint64_t seed) const {
    SeederConfig sc;
    sc.t_d = decision_time;
    sc.extra_components = seeder_components;
    sc.default_cov = Matrix::Constant(1, 1, seeder_default_cov);
    sc.weight_tol = seeder_weight_tol;
    sc.beta = seeder_beta;
    sc.max_iter = seeder_max_iter;
    sc.rng_seed = seed;
    sc.ode_step = ode_step;
    sc.gamma_max_attempts = seeder_gamma_attempts;
    return sc;
  }

  [[nodiscard]] FpkeGridSpec make_grid_spec() const {
    FpkeGridSpec gs;
    gs.x_lo = truth_x_lo;
    gs.x_hi = truth_x_hi;
    gs.nodes = truth_nodes;
    gs.dt = truth_dt;
    return gs;
  }

  [[nodiscard]] QuadratureSpec make_quadrature_spec() const {
    QuadratureSpec qs;
    qs.nodes = quadrature_nodes;
    qs.sigma_pad = quadrature_sigma_pad;
    qs.clamp_lo = quadrature_clamp_lo;
    qs.clamp_hi = quadrature_clamp_hi;
    return qs;
  }

  void validate() const {
    try {
      (void)make_model();
      make_initial_pdf().validate();
      make_loss().validate();
      make_schedule().validate();
      make_seeder_config(rng_seed).validate();
      make_grid_spec().validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    if (monte_carlo_runs < 1) {
      throw ConfigError("monte_carlo_runs must be at least 1");
    }
    if (quadrature_nodes < 3) {
      throw ConfigError("quadrature_nodes must be at least 3");
    }
    if (backprop_count < 1 || backprop_variance <= 0.0) {
      throw ConfigError("invalid backprop seeding parameters");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse '" + value + "' as a number");
  }
  if (pos != value.size()) {
    throw ConfigError("key '" + key + "': trailing characters in '" + value + "'");
  }
  return v;
}

inline long parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  const long n = static_cast<long>(v);
  if (static_cast<double>(n) != v) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + value + "'");
  }
  return n;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_double(key, trim(item)));
  }
  if (out.empty()) {
    throw ConfigError("key '" + key + "': empty list");
  }
  return out;
}

}  // namespace detail

/// Parses the flat key/value experiment grammar:
///   key = value            one setting per line
///   # ...                  comment (full line or after the value)
/// Unknown keys are errors; omitted keys keep the reference-experiment
/// defaults. List values are comma-separated numbers.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    }

    if (key == "model") {
      cfg.model_name = value;
    } else if (key == "linear_a") {
      cfg.linear_a = detail::parse_double(key, value);
    } else if (key == "noise_q") {
      cfg.noise_q = detail::parse_double(key, value);
    } else if (key == "initial_means") {
      cfg.initial_means = detail::parse_list(key, value);
    } else if (key == "initial_covs") {
      cfg.initial_covs = detail::parse_list(key, value);
    } else if (key == "initial_weights") {
      cfg.initial_weights = detail::parse_list(key, value);
    } else if (key == "loss_mean") {
      cfg.loss_mean = detail::parse_double(key, value);
    } else if (key == "loss_cov") {
      cfg.loss_cov = detail::parse_double(key, value);
    } else if (key == "decision_time") {
      cfg.decision_time = detail::parse_double(key, value);
    } else if (key == "ode_step") {
      cfg.ode_step = detail::parse_double(key, value);
    } else if (key == "weight_update_interval") {
      cfg.weight_update_interval = detail::parse_double(key, value);
    } else if (key == "seeder_components") {
      cfg.seeder_components = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "seeder_default_cov") {
      cfg.seeder_default_cov = detail::parse_double(key, value);
    } else if (key == "seeder_beta") {
      cfg.seeder_beta = detail::parse_double(key, value);
    } else if (key == "seeder_weight_tol") {
      cfg.seeder_weight_tol = detail::parse_double(key, value);
    } else if (key == "seeder_max_iter") {
      cfg.seeder_max_iter = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "seeder_gamma_attempts") {
      cfg.seeder_gamma_attempts = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "backprop_count") {
      cfg.backprop_count = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "backprop_variance") {
      cfg.backprop_variance = detail::parse_double(key, value);
    } else if (key == "truth_x_lo") {
      cfg.truth_x_lo = detail::parse_double(key, value);
    } else if (key == "truth_x_hi") {
      cfg.truth_x_hi = detail::parse_double(key, value);
    } else if (key == "truth_nodes") {
      cfg.truth_nodes = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "truth_dt") {
      cfg.truth_dt = detail::parse_double(key, value);
    } else if (key == "quadrature_nodes") {
      cfg.quadrature_nodes = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "quadrature_sigma_pad") {
      cfg.quadrature_sigma_pad = detail::parse_double(key, value);
    } else if (key == "quadrature_clamp_lo") {
      cfg.quadrature_clamp_lo = detail::parse_double(key, value);
    } else if (key == "quadrature_clamp_hi") {
      cfg.quadrature_clamp_hi = detail::parse_double(key, value);
    } else if (key == "monte_carlo_runs") {
      cfg.monte_carlo_runs = static_cast<int>(detail::parse_int(key, value));
    } else if (key == "rng_seed") {
      cfg.rng_seed = static_cast<std::uint64_t>(detail::parse_int(key, value));
    } else if (key == "output_dir") {
      cfg.output_dir = value;
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

/// Loads a config file; the name "paper_experiment" selects the built-in
/// reference preset without touching the filesystem.
inline ExperimentConfig load_config(const std::string& path) {
  if (path == "paper_experiment") {
    return ExperimentConfig::paper_experiment();
  }
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

}  // namespace gsprop
