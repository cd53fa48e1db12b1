#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gsprop/dynamics.hpp"
#include "gsprop/gaussian.hpp"
#include "gsprop/propagator.hpp"
#include "gsprop/simplex_qp.hpp"

namespace gsprop {

/// Instantaneous EKF moment flow (the right-hand sides of the mean and
/// covariance ODEs) for one component at time t.
struct ComponentFlow {
  Vector mean_dot;
  Matrix cov_dot;
};

inline ComponentFlow compute_moment_flow(const DynamicsModel& model,
                                         const GaussianComponent& comp, double t) {
  ComponentFlow flow;
  flow.mean_dot = model.drift(t, comp.mean);
  const Matrix jac = eval_jacobian(model, t, comp.mean);
  const Matrix g = model.diffusion(t, comp.mean);
  flow.cov_dot = jac * comp.cov + comp.cov * jac.transpose() +
                 g * model.noise_intensity * g.transpose();
  return flow;
}

/// FPKE residual of one Gaussian component: the rate of change of the pdf
/// under the EKF moment flow minus the Fokker-Planck operator applied to it.
/// A component whose flow solves the FPKE exactly (pure diffusion, linear
/// drift) has zero residual everywhere.
class FpkeResidual {
 public:
  FpkeResidual(const DynamicsModel& model, const GaussianComponent& comp, double t)
      : model_(&model), t_(t), mean_(comp.mean), n_(comp.dim()) {
    Eigen::LLT<Matrix> llt(comp.cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("FpkeResidual: component covariance not SPD");
    }
    precision_ = llt.solve(Matrix::Identity(n_, n_));
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      log_det += std::log(Matrix(llt.matrixL())(i, i));
    }
    log_norm_ = -log_det - 0.5 * static_cast<double>(n_) * std::log(2.0 * M_PI);

    const ComponentFlow flow = compute_moment_flow(model, comp, t);
    mean_dot_ = flow.mean_dot;
    cov_dot_ = flow.cov_dot;
    trace_s_cov_dot_ = (precision_ * cov_dot_).trace();

    if (model.diffusion_is_constant) {
      const Matrix g = model.diffusion(t, mean_);
      d2_const_ = 0.5 * g * model.noise_intensity * g.transpose();
      trace_s_d2_ = (precision_ * d2_const_).trace();
    } else if (n_ != 1) {
      throw std::invalid_argument(
          "FPKE residual with state-dependent diffusion is supported only in 1D");
    }
  }

  /// ℒ_i(t, x) with drift value and divergence supplied by the caller
  /// (they are shared across components on a quadrature grid).
  [[nodiscard]] double evaluate(const Vector& x, const Vector& drift_x,
                                double div_drift_x) const {
    const Vector e = x - mean_;
    const Vector u = precision_ * e;
    const double quad = e.dot(u);
    const double p = std::exp(log_norm_ - 0.5 * quad);
    if (p < kDensityFloor) {
      return 0.0;
    }
    double shape = u.dot(mean_dot_) + 0.5 * (u.dot(cov_dot_ * u) - trace_s_cov_dot_);
    shape += div_drift_x - drift_x.dot(u);
    if (model_->diffusion_is_constant) {
      shape -= u.dot(d2_const_ * u) - trace_s_d2_;
    } else {
      shape += varying_diffusion_shape(x(0), u(0));
    }
    return p * shape;
  }

  [[nodiscard]] double operator()(const Vector& x) const {
    return evaluate(x, model_->drift(t_, x), eval_drift_divergence(*model_, t_, x));
  }

  // Scalar fast path; fx and ax are f(t,x) and ∂f/∂x(t,x).
  [[nodiscard]] double at1d(double x, double fx, double ax) const {
    const double e = x - mean_(0);
    const double s = precision_(0, 0);
    const double u = s * e;
    const double p = std::exp(log_norm_ - 0.5 * e * u);
    if (p < kDensityFloor) {
      return 0.0;
    }
    const double pdot = cov_dot_(0, 0);
    double shape = u * mean_dot_(0) + 0.5 * (u * u * pdot - s * pdot);
    shape += ax - fx * u;
    if (model_->diffusion_is_constant) {
      shape -= d2_const_(0, 0) * (u * u - s);
    } else {
      shape += varying_diffusion_shape(x, u);
    }
    return p * shape;
  }

 private:
  // 1D state-dependent diffusion:  + ∂(d1 p)/∂x − ∂²(d2 p)/∂x², divided by p.
  [[nodiscard]] double varying_diffusion_shape(double x, double u) const {
    const double q = model_->noise_intensity(0, 0);
    const Vector xv = Vector::Constant(1, x);
    const double g = model_->diffusion(t_, xv)(0, 0);
    double dg, ddg;
    if (model_->diffusion_gradient) {
      dg = model_->diffusion_gradient(t_, xv)(0, 0);
      const double h = kJacobianFdStep * (1.0 + std::abs(x));
      ddg = (model_->diffusion_gradient(t_, Vector::Constant(1, x + h))(0, 0) -
             model_->diffusion_gradient(t_, Vector::Constant(1, x - h))(0, 0)) /
            (2.0 * h);
    } else {
      const double h = std::sqrt(kJacobianFdStep) * (1.0 + std::abs(x));
      const double gp = model_->diffusion(t_, Vector::Constant(1, x + h))(0, 0);
      const double gm = model_->diffusion(t_, Vector::Constant(1, x - h))(0, 0);
      dg = (gp - gm) / (2.0 * h);
      ddg = (gp - 2.0 * g + gm) / (h * h);
    }
    const double s = precision_(0, 0);
    const double d1 = 0.5 * dg * q * g;
    const double d1p = 0.5 * q * (ddg * g + dg * dg);
    const double d2 = 0.5 * q * g * g;
    const double d2p = q * dg * g;
    const double d2pp = q * (ddg * g + dg * dg);
    return (d1p - d1 * u) - (d2pp - 2.0 * d2p * u + d2 * (u * u - s));
  }

  const DynamicsModel* model_;
  double t_;
  Vector mean_;
  Eigen::Index n_;
  Matrix precision_;
  double log_norm_ = 0.0;
  Vector mean_dot_;
  Matrix cov_dot_;
  double trace_s_cov_dot_ = 0.0;
  Matrix d2_const_;
  double trace_s_d2_ = 0.0;
};

inline double residual_at(const GaussianComponent& comp, const DynamicsModel& model,
                          double t, const Vector& x) {
  return FpkeResidual(model, comp, t)(x);
}

/// Quadrature controls for the residual Gram matrix. The 1D rule is a
/// composite Simpson grid over the union of the component ±sigma_pad·σ
/// intervals; the node count is raised above `nodes` whenever the spacing
/// would under-resolve the narrowest component. n > 1 uses a tensor
/// Gauss-Legendre rule with nodes_per_dim points per axis.
///
/// clamp_lo/clamp_hi, when finite, cap the integration volume at a fixed
/// domain of interest. Components crossing the separatrix of a bistable
/// drift can blow their covariance up by orders of magnitude; without the
/// clamp the union box follows them and the Gram entries become dominated
/// by regions that carry no probability mass of interest.
struct QuadratureSpec {
  int nodes = 801;
  double sigma_pad = 6.0;
  int max_nodes = 200001;
  int nodes_per_dim = 48;
  double boundary_tol = 1e-8;
  double clamp_lo = -std::numeric_limits<double>::infinity();
  double clamp_hi = std::numeric_limits<double>::infinity();
};

struct LMatrixResult {
  Matrix L;
  double box_lo = 0.0;
  double box_hi = 0.0;
  int nodes_used = 0;
  bool boundary_warning = false;
};

namespace detail {

inline void gauss_legendre(int m, std::vector<double>& nodes,
                           std::vector<double>& weights) {
  nodes.assign(static_cast<std::size_t>(m), 0.0);
  weights.assign(static_cast<std::size_t>(m), 0.0);
  for (int k = 0; k < (m + 1) / 2; ++k) {
    double x = std::cos(M_PI * (k + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= m; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) {
        break;
      }
    }
    nodes[static_cast<std::size_t>(k)] = -x;
    nodes[static_cast<std::size_t>(m - 1 - k)] = x;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    weights[static_cast<std::size_t>(k)] = w;
    weights[static_cast<std::size_t>(m - 1 - k)] = w;
  }
}

inline LMatrixResult build_l_matrix_1d(const std::vector<GaussianComponent>& comps,
                                       const DynamicsModel& model, double t,
                                       const QuadratureSpec& spec) {
  const int nc = static_cast<int>(comps.size());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sigma_min = std::numeric_limits<double>::infinity();
  for (const auto& c : comps) {
    const double sigma = std::sqrt(c.cov(0, 0));
    lo = std::min(lo, c.mean(0) - spec.sigma_pad * sigma);
    hi = std::max(hi, c.mean(0) + spec.sigma_pad * sigma);
    sigma_min = std::min(sigma_min, sigma);
  }
  lo = std::max(lo, spec.clamp_lo);
  hi = std::min(hi, spec.clamp_hi);
  detail::require(hi > lo, "quadrature volume is empty after clamping");

  int nodes = std::max(3, spec.nodes | 1);
  const double target_spacing = sigma_min / 4.0;
  if ((hi - lo) / (nodes - 1) > target_spacing) {
    const auto needed = static_cast<long>(std::ceil((hi - lo) / target_spacing)) + 1;
    nodes = static_cast<int>(std::min<long>(needed | 1L, spec.max_nodes | 1));
  }
  const double h = (hi - lo) / (nodes - 1);

  std::vector<FpkeResidual> residuals;
  residuals.reserve(comps.size());
  for (const auto& c : comps) {
    residuals.emplace_back(model, c, t);
  }

  // Residual values per component on the shared grid; drift and divergence
  // are component-independent and evaluated once per node.
  std::vector<std::vector<double>> values(comps.size(),
                                          std::vector<double>(static_cast<std::size_t>(nodes)));
  Vector xv(1);
  for (int g = 0; g < nodes; ++g) {
    const double x = lo + g * h;
    xv(0) = x;
    const double fx = model.drift(t, xv)(0);
    const double ax = eval_jacobian(model, t, xv)(0, 0);
    for (int i = 0; i < nc; ++i) {
      values[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)] =
          residuals[static_cast<std::size_t>(i)].at1d(x, fx, ax);
    }
  }

  // Composite Simpson weights: h/3 * {1, 4, 2, ..., 2, 4, 1}. The boundary
  // check looks at the actual integrand of each entry: a pair product that
  // has not decayed to 1e-8 of its peak by the box edge flags the domain as
  // too small.
  LMatrixResult out;
  out.L = Matrix::Zero(nc, nc);
  bool warn = false;
  for (int i = 0; i < nc; ++i) {
    for (int j = i; j < nc; ++j) {
      const auto& vi = values[static_cast<std::size_t>(i)];
      const auto& vj = values[static_cast<std::size_t>(j)];
      const double lo_prod = vi[0] * vj[0];
      const double hi_prod = vi[static_cast<std::size_t>(nodes - 1)] *
                             vj[static_cast<std::size_t>(nodes - 1)];
      double acc = lo_prod + hi_prod;
      double peak = std::max(std::abs(lo_prod), std::abs(hi_prod));
      for (int g = 1; g < nodes - 1; ++g) {
        const double w = (g % 2 == 1) ? 4.0 : 2.0;
        const double prod = vi[static_cast<std::size_t>(g)] * vj[static_cast<std::size_t>(g)];
        acc += w * prod;
        peak = std::max(peak, std::abs(prod));
      }
      if (peak > 0.0 &&
          std::max(std::abs(lo_prod), std::abs(hi_prod)) > spec.boundary_tol * peak) {
        warn = true;
      }
      out.L(i, j) = out.L(j, i) = acc * h / 3.0;
    }
  }
  out.box_lo = lo;
  out.box_hi = hi;
  out.nodes_used = nodes;
  out.boundary_warning = warn;
  return out;
}

inline LMatrixResult build_l_matrix_nd(const std::vector<GaussianComponent>& comps,
                                       const DynamicsModel& model, double t,
                                       const QuadratureSpec& spec) {
  const int nc = static_cast<int>(comps.size());
  const Eigen::Index n = comps.front().dim();
  Vector lo = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Vector hi = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  for (const auto& c : comps) {
    for (Eigen::Index d = 0; d < n; ++d) {
      const double sigma = std::sqrt(c.cov(d, d));
      lo(d) = std::min(lo(d), c.mean(d) - spec.sigma_pad * sigma);
      hi(d) = std::max(hi(d), c.mean(d) + spec.sigma_pad * sigma);
    }
  }
  for (Eigen::Index d = 0; d < n; ++d) {
    lo(d) = std::max(lo(d), spec.clamp_lo);
    hi(d) = std::min(hi(d), spec.clamp_hi);
    detail::require(hi(d) > lo(d), "quadrature volume is empty after clamping");
  }

  std::vector<double> gl_nodes, gl_weights;
  gauss_legendre(spec.nodes_per_dim, gl_nodes, gl_weights);

  std::vector<FpkeResidual> residuals;
  residuals.reserve(comps.size());
  for (const auto& c : comps) {
    residuals.emplace_back(model, c, t);
  }

  LMatrixResult out;
  out.L = Matrix::Zero(nc, nc);
  const int m = spec.nodes_per_dim;
  long total = 1;
  for (Eigen::Index d = 0; d < n; ++d) {
    total *= m;
  }

  Vector x(n);
  std::vector<double> vals(static_cast<std::size_t>(nc));
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    double w = 1.0;
    for (Eigen::Index d = 0; d < n; ++d) {
      const int idx = static_cast<int>(rem % m);
      rem /= m;
      const double half = 0.5 * (hi(d) - lo(d));
      x(d) = lo(d) + half * (gl_nodes[static_cast<std::size_t>(idx)] + 1.0);
      w *= gl_weights[static_cast<std::size_t>(idx)] * half;
    }
    const Vector fx = model.drift(t, x);
    const double ax = eval_drift_divergence(model, t, x);
    for (int i = 0; i < nc; ++i) {
      vals[static_cast<std::size_t>(i)] =
          residuals[static_cast<std::size_t>(i)].evaluate(x, fx, ax);
    }
    for (int i = 0; i < nc; ++i) {
      for (int j = i; j < nc; ++j) {
        out.L(i, j) += w * vals[static_cast<std::size_t>(i)] *
                       vals[static_cast<std::size_t>(j)];
      }
    }
  }
  for (int i = 0; i < nc; ++i) {
    for (int j = i + 1; j < nc; ++j) {
      out.L(j, i) = out.L(i, j);
    }
  }
  out.box_lo = lo(0);
  out.box_hi = hi(0);
  out.nodes_used = static_cast<int>(total);
  return out;
}

}  // namespace detail

/// Residual Gram matrix L_ij = ∫_V ℒ_i ℒ_j dx over the mixture support box.
inline LMatrixResult build_L_matrix(const std::vector<GaussianComponent>& comps,
                                    const DynamicsModel& model, double t,
                                    const QuadratureSpec& spec = {}) {
  detail::require(!comps.empty(), "build_L_matrix needs at least one component");
  const Eigen::Index n = comps.front().dim();
  for (const auto& c : comps) {
    detail::require(c.dim() == n, "components disagree on dimension");
  }
  if (n == 1) {
    return detail::build_l_matrix_1d(comps, model, t, spec);
  }
  return detail::build_l_matrix_nd(comps, model, t, spec);
}

/// New mixture weights from the residual matrix:
///   w = argmin ½ wᵀ(L+I)w − wᵀ w_prior   s.t. 1ᵀw = 1, w ≥ 0.
inline Vector solve_weight_qp(const Matrix& l_matrix, const Vector& prior) {
  detail::require(l_matrix.rows() == l_matrix.cols(), "L matrix must be square");
  detail::require(prior.size() == l_matrix.rows(), "prior length mismatch");
  const Matrix h =
      l_matrix + Matrix::Identity(l_matrix.rows(), l_matrix.cols());
  return solve_simplex_qp(h, prior, prior).weights;
}

/// Weight adapter wiring the residual quadrature and QP into the propagator.
inline WeightAdapter make_fpke_weight_adapter(const QuadratureSpec& spec = {}) {
  return [spec](const GaussianMixture& mix, const DynamicsModel& model,
                double t) -> Vector {
    const LMatrixResult lm = build_L_matrix(mix.components, model, t, spec);
    return solve_weight_qp(lm.L, mix.weights());
  };
}

}  // namespace gsprop
