#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>

#include "gsprop/gaussian.hpp"

namespace gsprop {

/// Continuous-time SDE  dx/dt = f(t,x) + g(t,x) Γ(t)  with E[Γ Γ'] = Q δ.
///
/// drift_jacobian may be left empty; eval_jacobian then falls back to central
/// finite differences of the drift. diffusion_is_constant marks models whose
/// g does not depend on x, which the FPKE residual exploits (d1 ≡ 0 and d2
/// pulls out of the spatial derivatives).
struct DynamicsModel {
  std::string name;
  Eigen::Index dimension = 1;
  Eigen::Index noise_dim = 1;
  std::function<Vector(double, const Vector&)> drift;
  std::function<Matrix(double, const Vector&)> diffusion;  // n x m
  Matrix noise_intensity;                                  // Q, m x m
  std::function<Matrix(double, const Vector&)> drift_jacobian;  // optional
  std::function<Matrix(double, const Vector&)> diffusion_gradient;  // optional, 1D: dg/dx
  bool diffusion_is_constant = false;
};

inline constexpr double kJacobianFdStep = 1e-6;

/// Central-difference Jacobian of the drift, step 1e-6 * (1 + |x_j|).
inline Matrix finite_difference_jacobian(const DynamicsModel& model, double t,
                                         const Vector& x) {
  const Eigen::Index n = x.size();
  Matrix jac(n, n);
  Vector xp = x;
  Vector xm = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = kJacobianFdStep * (1.0 + std::abs(x(j)));
    xp(j) = x(j) + h;
    xm(j) = x(j) - h;
    jac.col(j) = (model.drift(t, xp) - model.drift(t, xm)) / (2.0 * h);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return jac;
}

inline Vector eval_drift(const DynamicsModel& model, double t, const Vector& x) {
  detail::require(x.size() == model.dimension, "state dimension mismatch");
  return model.drift(t, x);
}

inline Matrix eval_diffusion(const DynamicsModel& model, double t, const Vector& x) {
  detail::require(x.size() == model.dimension, "state dimension mismatch");
  return model.diffusion(t, x);
}

inline Matrix eval_jacobian(const DynamicsModel& model, double t, const Vector& x) {
  detail::require(x.size() == model.dimension, "state dimension mismatch");
  if (model.drift_jacobian) {
    return model.drift_jacobian(t, x);
  }
  return finite_difference_jacobian(model, t, x);
}

/// Divergence Σ_j ∂f_j/∂x_j, the trace of the drift Jacobian.
inline double eval_drift_divergence(const DynamicsModel& model, double t, const Vector& x) {
  return eval_jacobian(model, t, x).trace();
}

struct FpkeDiffusionTerms {
  Vector d1;  // ½ (∂g/∂x) Q g
  Matrix d2;  // ½ g Q gᵀ
};

/// FPKE diffusion ingredients at (t, x). The d1 contraction is committed to
/// for constant g (where it vanishes) and for scalar state; other cases are
/// rejected rather than guessing an index convention.
inline FpkeDiffusionTerms fpke_diffusion_terms(const DynamicsModel& model, double t,
                                               const Vector& x) {
  detail::require(x.size() == model.dimension, "state dimension mismatch");
  const Matrix g = model.diffusion(t, x);
  FpkeDiffusionTerms out;
  out.d2 = 0.5 * g * model.noise_intensity * g.transpose();
  if (model.diffusion_is_constant) {
    out.d1 = Vector::Zero(model.dimension);
    return out;
  }
  if (model.dimension != 1 || model.noise_dim != 1) {
    throw std::invalid_argument(
        "state-dependent diffusion is supported only for scalar state");
  }
  double dg;
  if (model.diffusion_gradient) {
    dg = model.diffusion_gradient(t, x)(0, 0);
  } else {
    const double h = kJacobianFdStep * (1.0 + std::abs(x(0)));
    Vector xp = x, xm = x;
    xp(0) += h;
    xm(0) -= h;
    dg = (model.diffusion(t, xp)(0, 0) - model.diffusion(t, xm)(0, 0)) / (2.0 * h);
  }
  out.d1 = Vector::Constant(1, 0.5 * dg * model.noise_intensity(0, 0) * g(0, 0));
  return out;
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

/// dx = sin(x) dt + dW,  Q = q (paper experiment uses q = 1).
inline DynamicsModel make_sine_model(double q = 1.0) {
  DynamicsModel m;
  m.name = "sine";
  m.dimension = 1;
  m.noise_dim = 1;
  m.drift = [](double, const Vector& x) { return Vector::Constant(1, std::sin(x(0))); };
  m.drift_jacobian = [](double, const Vector& x) {
    return Matrix::Constant(1, 1, std::cos(x(0)));
  };
  m.diffusion = [](double, const Vector&) { return Matrix::Identity(1, 1); };
  m.diffusion_is_constant = true;
  m.noise_intensity = Matrix::Constant(1, 1, q);
  return m;
}

/// dx = dW (no drift), Q = q.
inline DynamicsModel make_pure_diffusion_model(double q = 1.0, Eigen::Index n = 1) {
  DynamicsModel m;
  m.name = "pure_diffusion";
  m.dimension = n;
  m.noise_dim = n;
  m.drift = [n](double, const Vector&) { return Vector::Zero(n); };
  m.drift_jacobian = [n](double, const Vector&) { return Matrix::Zero(n, n); };
  m.diffusion = [n](double, const Vector&) { return Matrix::Identity(n, n); };
  m.diffusion_is_constant = true;
  m.noise_intensity = q * Matrix::Identity(n, n);
  return m;
}

/// dx = a x dt + dW (scalar Ornstein-Uhlenbeck for a < 0), Q = q.
inline DynamicsModel make_linear_model(double a, double q = 1.0) {
  DynamicsModel m;
  m.name = "linear";
  m.dimension = 1;
  m.noise_dim = 1;
  m.drift = [a](double, const Vector& x) { return Vector::Constant(1, a * x(0)); };
  m.drift_jacobian = [a](double, const Vector&) { return Matrix::Constant(1, 1, a); };
  m.diffusion = [](double, const Vector&) { return Matrix::Identity(1, 1); };
  m.diffusion_is_constant = true;
  m.noise_intensity = Matrix::Constant(1, 1, q);
  return m;
}

/// n-dimensional linear drift dx = A x dt + dW, constant A. Used in tests.
inline DynamicsModel make_linear_model_nd(Matrix a, Matrix q) {
  DynamicsModel m;
  m.name = "linear_nd";
  m.dimension = a.rows();
  m.noise_dim = q.rows();
  m.drift = [a](double, const Vector& x) -> Vector { return a * x; };
  m.drift_jacobian = [a](double, const Vector&) { return a; };
  const Eigen::Index n = a.rows();
  m.diffusion = [n](double, const Vector&) -> Matrix { return Matrix::Identity(n, n); };
  m.diffusion_is_constant = true;
  m.noise_intensity = std::move(q);
  return m;
}

/// Lookup used by the CLI config ("sine", "pure_diffusion", "linear").
inline DynamicsModel make_model_by_name(const std::string& name, double q,
                                        double linear_a) {
  if (name == "sine") {
    return make_sine_model(q);
  }
  if (name == "pure_diffusion") {
    return make_pure_diffusion_model(q);
  }
  if (name == "linear") {
    return make_linear_model(linear_a, q);
  }
  throw std::invalid_argument("unknown model name: " + name);
}

}  // namespace gsprop
