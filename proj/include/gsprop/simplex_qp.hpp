#pragma once

#include <cmath>
#include <vector>

#include "gsprop/gaussian.hpp"

namespace gsprop {

/// Solution of  min ½ wᵀHw − cᵀw  s.t. Σw = 1, w ≥ 0.
struct SimplexQpResult {
  Vector weights;
  double objective = 0.0;
  double multiplier = 0.0;  // equality-constraint multiplier at the solution
  int iterations = 0;
};

inline double simplex_qp_objective(const Matrix& h, const Vector& c, const Vector& w) {
  return 0.5 * w.dot(h * w) - c.dot(w);
}

namespace detail {

// Equality-constrained subproblem on the free index set: minimize the
// objective over the free coordinates with Σ w_F = 1, fixed coordinates at 0.
// Returns false when the KKT system is numerically singular.
inline bool solve_free_kkt(const Matrix& h, const Vector& c,
                           const std::vector<int>& free_idx, Vector& w_free,
                           double& lambda) {
  const int k = static_cast<int>(free_idx.size());
  Matrix kkt = Matrix::Zero(k + 1, k + 1);
  Vector rhs(k + 1);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      kkt(i, j) = h(free_idx[static_cast<std::size_t>(i)],
                    free_idx[static_cast<std::size_t>(j)]);
    }
    kkt(i, k) = 1.0;
    kkt(k, i) = 1.0;
    rhs(i) = c(free_idx[static_cast<std::size_t>(i)]);
  }
  rhs(k) = 1.0;

  Eigen::FullPivLU<Matrix> lu(kkt);
  if (!lu.isInvertible()) {
    // PSD-singular reduced Hessian (duplicate components can produce one);
    // a ridge on the H block picks one of the equivalent minimizers.
    const double ridge = 1e-10 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
    for (int i = 0; i < k; ++i) {
      kkt(i, i) += ridge;
    }
    lu.compute(kkt);
    if (!lu.isInvertible()) {
      return false;
    }
  }
  const Vector sol = lu.solve(rhs);
  if (!sol.allFinite()) {
    return false;
  }
  w_free = sol.head(k);
  lambda = -sol(k);
  return true;
}

}  // namespace detail

/// Dense primal active-set solver for the simplex-constrained convex QP
///   min ½ wᵀHw − cᵀw   s.t.  1ᵀw = 1,  w ≥ 0.
///
/// H must be symmetric positive semidefinite (up to roundoff). The iteration
/// starts from w0 projected onto the simplex; for a convex QP the active-set
/// exchange terminates in finitely many pivots.
inline SimplexQpResult solve_simplex_qp(const Matrix& h, const Vector& c,
                                        const Vector& w0) {
  const int n = static_cast<int>(h.rows());
  detail::require(h.cols() == n && c.size() == n && w0.size() == n,
                  "simplex QP dimension mismatch");
  if (n == 1) {
    SimplexQpResult r;
    r.weights = Vector::Constant(1, 1.0);
    r.objective = simplex_qp_objective(h, c, r.weights);
    r.multiplier = h(0, 0) - c(0);
    r.iterations = 0;
    return r;
  }

  // Feasible start: clamp negatives, renormalize (fall back to uniform).
  Vector w = w0.cwiseMax(0.0);
  const double s = w.sum();
  w = (s > 0.0) ? Vector(w / s) : Vector(Vector::Constant(n, 1.0 / n));

  std::vector<bool> active(static_cast<std::size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    if (w(i) <= 0.0) {
      active[static_cast<std::size_t>(i)] = true;
      w(i) = 0.0;
    }
  }

  constexpr double kDirTol = 1e-14;
  constexpr double kMultTol = 1e-12;
  const int max_iter = 8 * n * n + 64;
  double lambda = 0.0;

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) {
        free_idx.push_back(i);
      }
    }

    Vector w_free;
    if (!detail::solve_free_kkt(h, c, free_idx, w_free, lambda)) {
      throw NumericalError("simplex QP: singular KKT system");
    }

    Vector target = Vector::Zero(n);
    for (std::size_t i = 0; i < free_idx.size(); ++i) {
      target(free_idx[i]) = w_free(static_cast<Eigen::Index>(i));
    }
    const Vector direction = target - w;

    if (direction.cwiseAbs().maxCoeff() <= kDirTol) {
      // At the subproblem optimum: check multipliers of the active bounds.
      const Vector grad = h * w - c;
      int worst = -1;
      double worst_mult = -kMultTol;
      for (int i = 0; i < n; ++i) {
        if (active[static_cast<std::size_t>(i)]) {
          const double mult = grad(i) - lambda;
          if (mult < worst_mult) {
            worst_mult = mult;
            worst = i;
          }
        }
      }
      if (worst < 0) {
        break;  // KKT satisfied
      }
      active[static_cast<std::size_t>(worst)] = false;
      continue;
    }

    // Longest feasible step toward the subproblem optimum.
    double alpha = 1.0;
    int blocking = -1;
    for (int i : free_idx) {
      if (direction(i) < -kDirTol) {
        const double limit = w(i) / (-direction(i));
        if (limit < alpha) {
          alpha = limit;
          blocking = i;
        }
      }
    }
    w += alpha * direction;
    if (blocking >= 0 && alpha < 1.0) {
      w(blocking) = 0.0;
      active[static_cast<std::size_t>(blocking)] = true;
    }
  }
  if (iter >= max_iter) {
    throw NumericalError("simplex QP failed to converge");
  }

  // Clamp roundoff negatives and restore Σw = 1 exactly to tolerance.
  for (int i = 0; i < n; ++i) {
    if (w(i) < 0.0) {
      if (w(i) < -1e-12) {
        throw NumericalError("simplex QP produced an infeasible weight");
      }
      w(i) = 0.0;
    }
  }
  w /= w.sum();

  SimplexQpResult r;
  r.weights = std::move(w);
  r.objective = simplex_qp_objective(h, c, r.weights);
  r.multiplier = lambda;
  r.iterations = iter;
  return r;
}

}  // namespace gsprop
