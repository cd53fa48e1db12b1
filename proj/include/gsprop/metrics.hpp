#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gsprop/gaussian.hpp"
#include "gsprop/truth_solver.hpp"

namespace gsprop {

/// Per-run performance measures of one method against the truth pdf.
struct RunReport {
  std::string method;
  std::uint64_t seed = 0;
  double expected_loss = 0.0;    // L_hat
  double relative_error = 0.0;   // R_err
  double isd = 0.0;              // ∫ |p − p_hat|² dx
  double wisd = 0.0;             // ∫ L(x) |p − p_hat|² dx
  bool failed = false;
  std::string failure;
};

/// Closed-form mixture expected loss Σ_i w_i N(μ_L | μ_i, P_i + Σ_L).
inline double expected_loss_mixture(const GaussianMixture& mix, const LossFunction& loss) {
  mix.validate();
  double acc = 0.0;
  for (const auto& c : mix.components) {
    if (c.weight == 0.0) {
      continue;
    }
    acc += c.weight * gaussian_density(loss.mean, c.mean, c.cov + loss.cov);
  }
  return acc;
}

inline double relative_error(double l_hat, double l_true) {
  detail::require(l_true > 0.0, "relative error needs a positive true expected loss");
  return std::abs(l_true - l_hat) / l_true;
}

/// Integral square difference between the truth grid and a mixture.
inline double isd(const GridPdf& truth, const GaussianMixture& mix) {
  MixtureEvaluator eval(mix);
  std::vector<double> sq(truth.x.size());
  for (std::size_t i = 0; i < truth.x.size(); ++i) {
    const double d = truth.p[i] - eval.at1d(truth.x[i]);
    sq[i] = d * d;
  }
  return trapezoid(truth.x, sq);
}

/// Loss-weighted integral square difference.
inline double wisd(const GridPdf& truth, const GaussianMixture& mix,
                   const LossFunction& loss) {
  detail::require(loss.dim() == 1, "weighted ISD is one-dimensional");
  MixtureEvaluator eval(mix);
  const double mu = loss.mean(0);
  const double var = loss.cov(0, 0);
  std::vector<double> sq(truth.x.size());
  for (std::size_t i = 0; i < truth.x.size(); ++i) {
    const double d = truth.p[i] - eval.at1d(truth.x[i]);
    sq[i] = gaussian_density_1d(truth.x[i], mu, var) * d * d;
  }
  return trapezoid(truth.x, sq);
}

}  // namespace gsprop
