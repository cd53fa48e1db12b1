#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "gsprop/dynamics.hpp"
#include "gsprop/gaussian.hpp"
#include "gsprop/propagator.hpp"
#include "gsprop/simplex_qp.hpp"

namespace gsprop {

/// Inputs of the progressive-selection loop.
struct SeederConfig {
  double t_d = 1.0;           // decision time
  int extra_components = 5;   // M
  Matrix default_cov;         // D, the default seed covariance
  double weight_tol = 1e-3;   // keep candidates whose final QP weight reaches this
  double beta = 0.9;          // sampling-variance annealing coefficient
  int max_iter = 25;
  std::uint64_t rng_seed = 0;
  double ode_step = 0.01;
  int gamma_max_attempts = 100;

  void validate() const {
    detail::require(t_d > 0.0, "decision time must be positive");
    detail::require(extra_components >= 2, "seeder needs M >= 2");
    detail::require(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1]");
    detail::require(weight_tol >= 0.0, "weight tolerance must be nonnegative");
    detail::require(max_iter >= 1, "max_iter must be at least 1");
    detail::require(gamma_max_attempts >= 1, "gamma_max_attempts must be at least 1");
    detail::require(default_cov.rows() > 0 && default_cov.rows() == default_cov.cols(),
                    "default covariance D must be square");
  }
};

struct SeedingIteration {
  std::vector<Vector> initial_means;   // candidate means at t = 0
  Matrix initial_cov;                  // γD shared by the candidates
  double gamma = 0.0;
  double alpha = 0.0;                  // clamped to >= 1
  Vector weights;                      // sensitivity-QP weights
};

struct SeedingOutcome {
  GaussianMixture mixture;   // original pdf plus zero-weight seeded components
  bool converged = false;    // α reached 1 within max_iter
  int iterations = 0;
  double best_alpha = std::numeric_limits<double>::infinity();
  std::vector<GaussianMixture> sampling_history;  // pdf used at each iteration
  SeedingIteration selected;                      // iteration the output came from
};

/// Draw M candidate means: M−1 iid samples from the sampling pdf, the last
/// forced so the arithmetic mean of all M equals mu0 exactly.
template <class Rng>
std::vector<Vector> sample_candidate_means(const GaussianMixture& sampling_pdf,
                                           const Vector& mu0, int m, Rng& rng) {
  detail::require(m >= 2, "need at least two candidate means");
  std::vector<Vector> means;
  means.reserve(static_cast<std::size_t>(m));
  Vector partial_sum = Vector::Zero(mu0.size());
  for (int i = 0; i < m - 1; ++i) {
    means.push_back(sample_mixture(sampling_pdf, rng));
    partial_sum += means.back();
  }
  means.push_back(static_cast<double>(m) * mu0 - partial_sum);
  return means;
}

/// Covariance-matching factor:
///   γ = Tr[P0 − (1/M) Σ (μ_i − μ0)(μ_i − μ0)ᵀ] / Tr[D].
/// γ ≤ 0 is a resample signal, not an error.
inline double solve_gamma(const Matrix& default_cov, const Matrix& p0, const Vector& mu0,
                          const std::vector<Vector>& means) {
  const double m = static_cast<double>(means.size());
  Matrix scatter = Matrix::Zero(p0.rows(), p0.cols());
  for (const auto& mu : means) {
    const Vector d = mu - mu0;
    scatter += d * d.transpose();
  }
  return (p0 - scatter / m).trace() / default_cov.trace();
}

/// Index of the candidate farthest from the loss in the Mahalanobis metric
///   d_i = (μ_L − μ_i)ᵀ (P_i + Σ_L)⁻¹ (μ_L − μ_i).
/// Ties keep the first-listed candidate.
inline std::size_t most_distant_index(const std::vector<GaussianComponent>& candidates,
                                      const LossFunction& loss) {
  detail::require(!candidates.empty(), "most_distant_index needs candidates");
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Vector diff = loss.mean - candidates[i].mean;
    const Matrix k = candidates[i].cov + loss.cov;
    const double d = diff.dot(k.ldlt().solve(diff));
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline GaussianComponent most_distant_component(
    const std::vector<GaussianComponent>& candidates, const LossFunction& loss) {
  return candidates[most_distant_index(candidates, loss)];
}

namespace detail {

inline double alpha_objective(double alpha, const Vector& diff, const Matrix& p_max,
                              const Matrix& loss_cov) {
  const Matrix k = alpha * loss_cov + p_max;
  Eigen::LLT<Matrix> llt(k);
  if (llt.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    log_det += 2.0 * std::log(Matrix(llt.matrixL())(i, i));
  }
  return log_det + diff.dot(llt.solve(diff));
}

inline double golden_section_min(const std::function<double(double)>& f, double a,
                                 double b, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Loss-covariance inflation coefficient from the most distant candidate,
///   α = (1/n) Tr[(U − P_max) Σ_L⁻¹],  U = (μ_L − μ_max)(μ_L − μ_max)ᵀ,
/// clamped below at 1 (α = 1 terminates the selection loop). The closed form
/// is the exact minimizer of J_min in 1D; for n > 1 it only seeds a scalar
/// search, since the trace reduction behind it does not hold in general.
inline double solve_alpha(const Vector& mu_max, const Matrix& p_max,
                          const LossFunction& loss) {
  const Eigen::Index n = loss.dim();
  const Vector diff = loss.mean - mu_max;
  const Matrix u = diff * diff.transpose();
  const double closed =
      (u - p_max).cwiseProduct(loss.cov.inverse().transpose()).sum() /
      static_cast<double>(n);
  double alpha = closed;
  if (n > 1 && closed > 1.0) {
    auto objective = [&](double a) {
      return detail::alpha_objective(a, diff, p_max, loss.cov);
    };
    const double upper = std::max(10.0 * closed, 10.0);
    alpha = detail::golden_section_min(objective, 1e-9, upper, 1e-10 * upper);
  }
  return std::max(alpha, 1.0);
}

/// Sensitivity weights for candidates propagated to the decision time:
///   w = argmin ½ wᵀM w − wᵀN  on the simplex, with
///   m_ij = N(μ_j | μ_i, P_i + P_j) and n_i = N(μ_L | μ_i, P_i + αΣ_L).
inline Vector solve_seed_weight_qp(const std::vector<GaussianComponent>& candidates_at_td,
                                   const LossFunction& loss, double alpha) {
  const int m = static_cast<int>(candidates_at_td.size());
  detail::require(m >= 1, "seed weight QP needs candidates");
  if (m == 1) {
    return Vector::Constant(1, 1.0);
  }
  Matrix overlap(m, m);
  Vector sensitivity(m);
  const Matrix inflated = alpha * loss.cov;
  for (int i = 0; i < m; ++i) {
    const auto& ci = candidates_at_td[static_cast<std::size_t>(i)];
    for (int j = i; j < m; ++j) {
      const auto& cj = candidates_at_td[static_cast<std::size_t>(j)];
      overlap(i, j) = overlap(j, i) =
          gaussian_density(cj.mean, ci.mean, ci.cov + cj.cov);
    }
    sensitivity(i) = gaussian_density(loss.mean, ci.mean, ci.cov + inflated);
  }
  const Vector uniform = Vector::Constant(m, 1.0 / m);
  return solve_simplex_qp(overlap, sensitivity, uniform).weights;
}

/// Progressive selection of loss-sensitive components. Iteratively samples
/// candidate means from an annealed pdf, matches the sampling covariance via
/// γ, propagates candidates to the decision time, scores them against the
/// inflated loss, and contracts the sampling pdf around the winners. Returns
/// the original mixture plus the selected candidates appended with weight
/// exactly zero, so the initial uncertainty is unchanged.
inline SeedingOutcome progressive_selection(const GaussianMixture& initial_pdf,
                                            const DynamicsModel& model,
                                            const SeederConfig& config,
                                            const LossFunction& loss) {
  config.validate();
  initial_pdf.validate();
  loss.validate();
  detail::require(initial_pdf.dim() == model.dimension,
                  "initial pdf / model dimension mismatch");
  detail::require(config.default_cov.rows() == model.dimension,
                  "default covariance D has wrong dimension");

  const int m = config.extra_components;
  std::mt19937_64 rng(config.rng_seed);

  SeedingOutcome out;
  GaussianMixture sampling_pdf = initial_pdf;
  double prev_alpha = std::numeric_limits<double>::infinity();
  bool have_selected = false;

  for (int iter = 0; iter < config.max_iter; ++iter) {
    out.sampling_history.push_back(sampling_pdf);
    ++out.iterations;

    const auto [mu0, p0] = mixture_moments(sampling_pdf);

    // Resample until the covariance-matching factor is positive.
    std::vector<Vector> means;
    double gamma = -1.0;
    int attempts = 0;
    while (gamma <= 0.0) {
      if (++attempts > config.gamma_max_attempts) {
        throw NumericalError(
            "progressive selection: gamma resampling failed; default covariance "
            "too large for the sampling pdf");
      }
      means = sample_candidate_means(sampling_pdf, mu0, m, rng);
      gamma = solve_gamma(config.default_cov, p0, mu0, means);
    }
    const Matrix cand_cov = gamma * config.default_cov;

    std::vector<GaussianComponent> at_td;
    at_td.reserve(means.size());
    for (const auto& mu : means) {
      at_td.push_back(propagate_component(model, GaussianComponent(0.0, mu, cand_cov),
                                          0.0, config.t_d, config.ode_step));
    }

    const std::size_t far = most_distant_index(at_td, loss);
    const double alpha = solve_alpha(at_td[far].mean, at_td[far].cov, loss);
    const Vector weights = solve_seed_weight_qp(at_td, loss, alpha);

    if (!have_selected || alpha < out.best_alpha) {
      have_selected = true;
      out.best_alpha = alpha;
      out.selected.initial_means = means;
      out.selected.initial_cov = cand_cov;
      out.selected.gamma = gamma;
      out.selected.alpha = alpha;
      out.selected.weights = weights;
    }

    // Anneal only while the candidates keep closing in on the loss region.
    const double beta_eff =
        (iter > 0 && alpha < prev_alpha) ? config.beta : 1.0;
    std::vector<GaussianComponent> next;
    next.reserve(means.size());
    for (std::size_t j = 0; j < means.size(); ++j) {
      next.emplace_back(weights(static_cast<Eigen::Index>(j)), means[j],
                        Matrix(beta_eff * cand_cov));
    }
    sampling_pdf = GaussianMixture(std::move(next));
    prev_alpha = alpha;

    if (alpha <= 1.0) {
      out.converged = true;
      break;
    }
  }

  out.mixture = initial_pdf;
  for (std::size_t j = 0; j < out.selected.initial_means.size(); ++j) {
    if (out.selected.weights(static_cast<Eigen::Index>(j)) >= config.weight_tol) {
      out.mixture.components.emplace_back(0.0, out.selected.initial_means[j],
                                          out.selected.initial_cov);
    }
  }
  return out;
}

/// Baseline seeding: back-propagate `count` equidistant samples from the
/// 3σ loss support at t_d to the initial time and append them as zero-weight
/// components with a fixed tiny variance. Defined for scalar state only.
inline GaussianMixture backprop_seed(const GaussianMixture& initial_pdf,
                                     const DynamicsModel& model, const LossFunction& loss,
                                     double t_d, int count, double tiny_var,
                                     double ode_step = 0.01) {
  detail::require(model.dimension == 1, "backprop seeding is defined for 1D models");
  detail::require(count >= 1, "backprop seeding needs at least one sample");
  detail::require(tiny_var > 0.0, "tiny_var must be positive");
  initial_pdf.validate();

  const double sigma = std::sqrt(loss.cov(0, 0));
  const double lo = loss.mean(0) - 3.0 * sigma;
  const double hi = loss.mean(0) + 3.0 * sigma;

  GaussianMixture out = initial_pdf;
  for (int k = 0; k < count; ++k) {
    const double sample =
        (count == 1) ? loss.mean(0)
                     : lo + (hi - lo) * static_cast<double>(k) / (count - 1);
    const Vector mean0 =
        propagate_mean(model, Vector::Constant(1, sample), t_d, 0.0, ode_step);
    out.components.emplace_back(0.0, mean0, Matrix::Constant(1, 1, tiny_var));
  }
  return out;
}

}  // namespace gsprop
