#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gsprop/dynamics.hpp"
#include "gsprop/gaussian.hpp"

namespace gsprop {

/// Fixed-step propagation plan: RK4 substeps of ode_step, interrupted every
/// weight_update_interval to let a weight adapter replace the weight vector.
struct PropagationSchedule {
  double t_start = 0.0;
  double t_end = 0.0;
  double ode_step = 0.01;
  double weight_update_interval = 0.5;

  void validate() const {
    detail::require(t_end > t_start, "schedule must have t_end > t_start");
    detail::require(ode_step > 0.0, "ode_step must be positive");
    detail::require(weight_update_interval >= ode_step,
                    "weight_update_interval must be >= ode_step");
    detail::require(weight_update_interval <= t_end - t_start,
                    "weight_update_interval exceeds the propagation horizon");
    const double ratio = weight_update_interval / ode_step;
    detail::require(std::abs(ratio - std::round(ratio)) < 1e-9,
                    "weight_update_interval must be an integer multiple of ode_step");
  }
};

namespace detail {

struct MomentOde {
  const DynamicsModel* model;
  Eigen::Index n;

  // y packs [mean; vec(P)] column-major.
  void pack(const Vector& mean, const Matrix& cov, Vector& y) const {
    y.resize(n + n * n);
    y.head(n) = mean;
    Eigen::Map<Matrix>(y.data() + n, n, n) = cov;
  }

  void unpack(const Vector& y, Vector& mean, Matrix& cov) const {
    mean = y.head(n);
    cov = Eigen::Map<const Matrix>(y.data() + n, n, n);
  }

  Vector operator()(double t, const Vector& y) const {
    const Vector mean = y.head(n);
    const Matrix cov = Eigen::Map<const Matrix>(y.data() + n, n, n);
    const Matrix jac = eval_jacobian(*model, t, mean);
    const Matrix g = model->diffusion(t, mean);
    Vector dy(n + n * n);
    dy.head(n) = model->drift(t, mean);
    const Matrix cov_dot =
        jac * cov + cov * jac.transpose() + g * model->noise_intensity * g.transpose();
    Eigen::Map<Matrix>(dy.data() + n, n, n) = cov_dot;
    return dy;
  }
};

template <class Rhs>
Vector rk4_step(const Rhs& rhs, double t, const Vector& y, double h) {
  const Vector k1 = rhs(t, y);
  const Vector k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
  const Vector k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
  const Vector k4 = rhs(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// EKF time update: integrates dμ/dt = f(t,μ) and dP/dt = A P + P Aᵀ + g Q gᵀ
/// (A = ∂f/∂x at μ) from t0 to t1 with classical RK4. The covariance is
/// symmetrized after every step and must stay positive definite; a failed
/// Cholesky reports the time of failure instead of repairing the matrix.
inline GaussianComponent propagate_component(const DynamicsModel& model,
                                             const GaussianComponent& comp, double t0,
                                             double t1, double ode_step) {
  detail::require(t1 > t0, "propagate_component requires t1 > t0");
  detail::require(ode_step > 0.0, "ode_step must be positive");
  detail::require(comp.dim() == model.dimension, "component/model dimension mismatch");

  const Eigen::Index n = model.dimension;
  detail::MomentOde ode{&model, n};

  const auto n_steps =
      std::max<long>(1, std::lround((t1 - t0) / ode_step));
  const double h = (t1 - t0) / static_cast<double>(n_steps);

  Vector y;
  ode.pack(comp.mean, comp.cov, y);
  double t = t0;
  for (long s = 0; s < n_steps; ++s) {
    y = detail::rk4_step(ode, t, y, h);
    t = t0 + static_cast<double>(s + 1) * h;
    Eigen::Map<Matrix> cov(y.data() + n, n, n);
    cov = 0.5 * (cov + cov.transpose()).eval();
    if (!y.allFinite()) {
      throw NumericalError("moment propagation diverged at t = " + std::to_string(t));
    }
    Eigen::LLT<Matrix> llt{Matrix(cov)};
    if (llt.info() != Eigen::Success) {
      throw NumericalError("covariance lost positive-definiteness at t = " +
                           std::to_string(t));
    }
  }

  GaussianComponent out;
  out.weight = comp.weight;
  ode.unpack(y, out.mean, out.cov);
  return out;
}

/// Mean-only integration of dμ/dt = f(t,μ); t1 < t0 integrates backward.
inline Vector propagate_mean(const DynamicsModel& model, const Vector& mean, double t0,
                             double t1, double ode_step) {
  detail::require(ode_step > 0.0, "ode_step must be positive");
  if (t0 == t1) {
    return mean;
  }
  const auto n_steps = std::max<long>(1, std::lround(std::abs(t1 - t0) / ode_step));
  const double h = (t1 - t0) / static_cast<double>(n_steps);
  auto rhs = [&model](double t, const Vector& x) { return model.drift(t, x); };
  Vector x = mean;
  double t = t0;
  for (long s = 0; s < n_steps; ++s) {
    x = detail::rk4_step(rhs, t, x, h);
    t = t0 + static_cast<double>(s + 1) * h;
    if (!x.allFinite()) {
      throw NumericalError("mean integration diverged at t = " + std::to_string(t));
    }
  }
  return x;
}

/// Replaces the weight vector of a mixture at an update epoch.
using WeightAdapter =
    std::function<Vector(const GaussianMixture&, const DynamicsModel&, double)>;

/// Mixture states recorded at t_start and after every weight-update epoch.
struct MixtureTrajectory {
  std::vector<double> times;
  std::vector<GaussianMixture> states;

  [[nodiscard]] std::size_t epoch_count() const {
    return times.empty() ? 0 : times.size() - 1;
  }
  [[nodiscard]] const GaussianMixture& final_state() const { return states.back(); }
};

/// Advances every component over each weight-update interval, then lets the
/// adapter (when given) replace the weights. Component moments never depend
/// on the weights, so disabling the adapter yields the plain GS propagation.
inline MixtureTrajectory propagate_mixture(const DynamicsModel& model,
                                           const GaussianMixture& mix,
                                           const PropagationSchedule& schedule,
                                           const WeightAdapter& adapter = {}) {
  schedule.validate();
  mix.validate();

  const auto n_epochs = std::max<long>(
      1, std::lround((schedule.t_end - schedule.t_start) / schedule.weight_update_interval));
  const double dt =
      (schedule.t_end - schedule.t_start) / static_cast<double>(n_epochs);

  MixtureTrajectory traj;
  traj.times.reserve(static_cast<std::size_t>(n_epochs) + 1);
  traj.states.reserve(static_cast<std::size_t>(n_epochs) + 1);
  traj.times.push_back(schedule.t_start);
  traj.states.push_back(mix);

  GaussianMixture current = mix;
  for (long e = 0; e < n_epochs; ++e) {
    const double t0 = schedule.t_start + static_cast<double>(e) * dt;
    const double t1 = schedule.t_start + static_cast<double>(e + 1) * dt;
    for (auto& comp : current.components) {
      comp = propagate_component(model, comp, t0, t1, schedule.ode_step);
    }
    if (adapter) {
      current.set_weights(adapter(current, model, t1));
    }
    traj.times.push_back(t1);
    traj.states.push_back(current);
  }
  return traj;
}

}  // namespace gsprop
