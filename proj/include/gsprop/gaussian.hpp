#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace gsprop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Densities below this are flushed to zero; distant components otherwise
// produce denormal garbage in overlap products.
inline constexpr double kDensityFloor = 1e-300;
inline constexpr double kWeightSumTol = 1e-9;
inline constexpr double kSymmetryTol = 1e-12;

/// Thrown when a numerical procedure fails (lost positive-definiteness,
/// mass-conservation violation, diverging integration, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const char* what) {
  if (!cond) {
    throw std::invalid_argument(what);
  }
}

inline bool is_symmetric(const Matrix& m, double rel_tol = kSymmetryTol) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

}  // namespace detail

/// One weighted Gaussian N(x | mean, cov) of a mixture.
struct GaussianComponent {
  double weight = 1.0;
  Vector mean;
  Matrix cov;

  GaussianComponent() = default;
  GaussianComponent(double w, Vector mu, Matrix p)
      : weight(w), mean(std::move(mu)), cov(std::move(p)) {}

  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }

  void validate() const {
    detail::require(weight >= 0.0, "component weight must be nonnegative");
    detail::require(cov.rows() == dim() && cov.cols() == dim(),
                    "covariance shape does not match mean dimension");
    detail::require(detail::is_symmetric(cov), "covariance must be symmetric");
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("covariance is not positive definite");
    }
  }
};

/// Gaussian-shaped loss N(x | mean, cov) marking the decision-time region
/// of interest, tagged with the action it scores.
struct LossFunction {
  Vector mean;
  Matrix cov;
  std::string action_label;

  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }

  void validate() const {
    detail::require(cov.rows() == dim() && cov.cols() == dim(),
                    "loss covariance shape mismatch");
    detail::require(detail::is_symmetric(cov), "loss covariance must be symmetric");
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("loss covariance is not positive definite");
    }
  }
};

/// Multivariate normal density N(x | mean, cov).
inline double gaussian_density(const Vector& x, const Vector& mean, const Matrix& cov) {
  detail::require(x.size() == mean.size(), "dimension mismatch in gaussian_density");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("gaussian_density: covariance not positive definite");
  }
  const Vector diff = x - mean;
  const Vector z = llt.matrixL().solve(diff);
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    log_det += std::log(llt.matrixL()(i, i));
  }
  const double n = static_cast<double>(x.size());
  const double log_p = -0.5 * z.squaredNorm() - log_det - 0.5 * n * std::log(2.0 * M_PI);
  const double p = std::exp(log_p);
  return p < kDensityFloor ? 0.0 : p;
}

inline double gaussian_density_1d(double x, double mean, double var) {
  const double d = x - mean;
  const double p = std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * M_PI * var);
  return p < kDensityFloor ? 0.0 : p;
}

/// Product-integral identity: ∫ N(x|mu1,P1) N(x|mu2,P2) dx = N(mu1 | mu2, P1+P2).
inline double gaussian_overlap(const Vector& mu1, const Matrix& p1,
                               const Vector& mu2, const Matrix& p2) {
  detail::require(mu1.size() == mu2.size(), "dimension mismatch in gaussian_overlap");
  return gaussian_density(mu1, mu2, p1 + p2);
}

/// Weighted sum of Gaussian pdfs. Weights sum to one unless the mixture is
/// explicitly flagged unnormalized (the seeding stage appends zero-weight
/// components to a candidate set before any weight is assigned).
struct GaussianMixture {
  std::vector<GaussianComponent> components;
  bool unnormalized = false;

  GaussianMixture() = default;
  explicit GaussianMixture(std::vector<GaussianComponent> comps, bool unnorm = false)
      : components(std::move(comps)), unnormalized(unnorm) {}

  static GaussianMixture single(Vector mean, Matrix cov) {
    GaussianMixture mix;
    mix.components.emplace_back(1.0, std::move(mean), std::move(cov));
    return mix;
  }

  [[nodiscard]] Eigen::Index dim() const {
    return components.empty() ? 0 : components.front().dim();
  }
  [[nodiscard]] std::size_t size() const { return components.size(); }

  [[nodiscard]] double weight_sum() const {
    double s = 0.0;
    for (const auto& c : components) {
      s += c.weight;
    }
    return s;
  }

  [[nodiscard]] Vector weights() const {
    Vector w(static_cast<Eigen::Index>(components.size()));
    for (std::size_t i = 0; i < components.size(); ++i) {
      w(static_cast<Eigen::Index>(i)) = components[i].weight;
    }
    return w;
  }

  void set_weights(const Vector& w) {
    detail::require(static_cast<std::size_t>(w.size()) == components.size(),
                    "weight vector length mismatch");
    for (std::size_t i = 0; i < components.size(); ++i) {
      components[i].weight = w(static_cast<Eigen::Index>(i));
    }
  }

  void validate() const {
    detail::require(!components.empty(), "mixture has no components");
    const Eigen::Index n = dim();
    for (const auto& c : components) {
      detail::require(c.dim() == n, "mixture components disagree on dimension");
      c.validate();
    }
    if (!unnormalized && std::abs(weight_sum() - 1.0) > kWeightSumTol) {
      throw std::invalid_argument("mixture weights do not sum to one");
    }
  }
};

/// Per-component factorization cache for evaluating one mixture at many points.
class MixtureEvaluator {
 public:
  explicit MixtureEvaluator(const GaussianMixture& mix) : dim_(mix.dim()) {
    terms_.reserve(mix.size());
    for (const auto& c : mix.components) {
      Term t;
      t.weight = c.weight;
      t.mean = c.mean;
      Eigen::LLT<Matrix> llt(c.cov);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("MixtureEvaluator: component covariance not SPD");
      }
      t.chol_l = llt.matrixL();
      double log_det = 0.0;
      for (Eigen::Index i = 0; i < dim_; ++i) {
        log_det += std::log(t.chol_l(i, i));
      }
      t.log_norm = -log_det - 0.5 * static_cast<double>(dim_) * std::log(2.0 * M_PI);
      terms_.push_back(std::move(t));
    }
  }

  [[nodiscard]] double operator()(const Vector& x) const {
    double total = 0.0;
    for (const auto& t : terms_) {
      if (t.weight == 0.0) {
        continue;
      }
      const Vector z = t.chol_l.triangularView<Eigen::Lower>().solve(x - t.mean);
      const double p = std::exp(t.log_norm - 0.5 * z.squaredNorm());
      total += t.weight * (p < kDensityFloor ? 0.0 : p);
    }
    return total;
  }

  // 1D fast path used by the grid metrics and quadrature loops.
  [[nodiscard]] double at1d(double x) const {
    double total = 0.0;
    for (const auto& t : terms_) {
      if (t.weight == 0.0) {
        continue;
      }
      const double z = (x - t.mean(0)) / t.chol_l(0, 0);
      const double p = std::exp(t.log_norm - 0.5 * z * z);
      total += t.weight * (p < kDensityFloor ? 0.0 : p);
    }
    return total;
  }

 private:
  struct Term {
    double weight;
    Vector mean;
    Matrix chol_l;
    double log_norm;
  };
  Eigen::Index dim_;
  std::vector<Term> terms_;
};

/// Mixture density Σ_i w_i N(x | mu_i, P_i).
inline double eval_density(const GaussianMixture& mix, const Vector& x) {
  detail::require(x.size() == mix.dim(), "point dimension does not match mixture");
  double total = 0.0;
  for (const auto& c : mix.components) {
    if (c.weight == 0.0) {
      continue;
    }
    total += c.weight * gaussian_density(x, c.mean, c.cov);
  }
  return total;
}

/// Mean and covariance of a normalized mixture:
/// mu = Σ w_i mu_i,  P = Σ w_i [P_i + (mu_i - mu)(mu_i - mu)^T].
inline std::pair<Vector, Matrix> mixture_moments(const GaussianMixture& mix) {
  detail::require(!mix.components.empty(), "mixture has no components");
  if (std::abs(mix.weight_sum() - 1.0) > kWeightSumTol) {
    throw std::invalid_argument("mixture_moments requires a normalized mixture");
  }
  const Eigen::Index n = mix.dim();
  Vector mean = Vector::Zero(n);
  for (const auto& c : mix.components) {
    mean += c.weight * c.mean;
  }
  Matrix cov = Matrix::Zero(n, n);
  for (const auto& c : mix.components) {
    const Vector d = c.mean - mean;
    cov += c.weight * (c.cov + d * d.transpose());
  }
  cov = 0.5 * (cov + cov.transpose()).eval();
  return {std::move(mean), std::move(cov)};
}

/// Draw one sample from a mixture (component by weight, then Gaussian draw).
template <class Rng>
Vector sample_mixture(const GaussianMixture& mix, Rng& rng) {
  detail::require(!mix.components.empty(), "mixture has no components");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double total = mix.weight_sum();
  detail::require(total > 0.0, "cannot sample from zero-mass mixture");
  double u = unif(rng) * total;
  std::size_t pick = mix.size() - 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    acc += mix.components[i].weight;
    if (u <= acc) {
      pick = i;
      break;
    }
  }
  const auto& c = mix.components[pick];
  Eigen::LLT<Matrix> llt(c.cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("sample_mixture: component covariance not SPD");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(c.dim());
  for (Eigen::Index i = 0; i < c.dim(); ++i) {
    z(i) = normal(rng);
  }
  return c.mean + Matrix(llt.matrixL()) * z;
}

}  // namespace gsprop
