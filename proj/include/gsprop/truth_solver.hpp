#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gsprop/dynamics.hpp"
#include "gsprop/gaussian.hpp"

namespace gsprop {

/// Finite-difference grid for the 1D Fokker-Planck reference solution.
struct FpkeGridSpec {
  double x_lo = -6.0;
  double x_hi = 6.0;
  int nodes = 1201;
  double dt = 1e-3;
  double boundary_density_tol = 1e-10;  // monitor threshold, not a hard error
  double mass_tol = 1e-4;               // per-step renormalization guard

  void validate() const {
    detail::require(x_hi > x_lo, "grid domain is empty");
    detail::require(nodes >= 3, "grid needs at least three nodes");
    detail::require(dt > 0.0, "time step must be positive");
  }
};

struct GridPdf {
  double time = 0.0;
  std::vector<double> x;
  std::vector<double> p;
};

struct FpkeSolution {
  std::vector<GridPdf> snapshots;      // at the requested times, then t_end
  double max_renorm_deviation = 0.0;   // max |renormalization factor - 1|
  double max_boundary_density = 0.0;
  bool boundary_warning = false;
  long clamped_nodes = 0;              // negatives in [-1e-10, 0) zeroed

  [[nodiscard]] const GridPdf& final_pdf() const { return snapshots.back(); }
};

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  }
  return acc;
}

namespace detail {

// Bernoulli function B(w) = w / (e^w - 1) with a series near zero.
inline double bernoulli_b(double w) {
  if (std::abs(w) < 1e-5) {
    return 1.0 - 0.5 * w + w * w / 12.0;
  }
  return w / std::expm1(w);
}

// Tridiagonal solve (Thomas algorithm); b is the diagonal, a sub, c super.
inline void thomas_solve(std::vector<double>& a, std::vector<double>& b,
                         std::vector<double>& c, std::vector<double>& d) {
  const std::size_t n = b.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = a[i] / b[i - 1];
    b[i] -= m * c[i - 1];
    d[i] -= m * d[i - 1];
  }
  d[n - 1] /= b[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
  }
}

}  // namespace detail

/// Crank-Nicolson solve of the 1D FPKE
///   ∂p/∂t = −∂(f p)/∂x + ½ Q ∂²(g² p)/∂x²
/// with Scharfetter-Gummel face fluxes (exponentially fitted upwinding of the
/// central scheme) and reflecting boundaries. The density is renormalized
/// after every step; a renormalization factor outside 1 ± mass_tol aborts.
inline FpkeSolution solve_fpke(const DynamicsModel& model,
                               const GaussianMixture& initial_pdf,
                               const FpkeGridSpec& spec, double t_end,
                               std::vector<double> snapshot_times = {}) {
  spec.validate();
  detail::require(model.dimension == 1, "the truth solver is one-dimensional");
  detail::require(t_end > 0.0, "t_end must be positive");
  initial_pdf.validate();

  const int n = spec.nodes;
  const double h = (spec.x_hi - spec.x_lo) / (n - 1);
  const double q = model.noise_intensity(0, 0);

  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = spec.x_lo + i * h;
  }

  std::vector<double> p(static_cast<std::size_t>(n));
  {
    MixtureEvaluator eval(initial_pdf);
    for (int i = 0; i < n; ++i) {
      p[static_cast<std::size_t>(i)] = eval.at1d(x[static_cast<std::size_t>(i)]);
    }
    const double mass = trapezoid(x, p);
    detail::require(mass > 0.0, "initial pdf has no mass on the grid");
    for (double& v : p) {
      v /= mass;
    }
  }

  const auto n_steps = std::max<long>(1, std::lround(t_end / spec.dt));
  const double dt = t_end / static_cast<double>(n_steps);

  std::sort(snapshot_times.begin(), snapshot_times.end());
  std::vector<long> snap_steps;
  for (double ts : snapshot_times) {
    if (ts <= 0.0 || ts > t_end + 1e-12) {
      continue;
    }
    snap_steps.push_back(std::clamp<long>(std::lround(ts / dt), 1, n_steps));
  }

  FpkeSolution out;
  out.snapshots.push_back(GridPdf{0.0, x, p});

  // Per-face data for the flux F = v_eff p − ∂(D p)/∂x with D = ½ g² Q.
  const std::size_t faces = static_cast<std::size_t>(n - 1);
  std::vector<double> face_lo(faces), face_hi(faces);
  std::vector<double> sub(static_cast<std::size_t>(n)), dia(static_cast<std::size_t>(n)),
      sup(static_cast<std::size_t>(n));
  std::vector<double> a(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n)),
      c(static_cast<std::size_t>(n)), rhs(static_cast<std::size_t>(n));
  Vector xv(1);

  auto assemble = [&](double t) {
    for (std::size_t f = 0; f < faces; ++f) {
      const double xf = spec.x_lo + (static_cast<double>(f) + 0.5) * h;
      xv(0) = xf;
      const double g = model.diffusion(t, xv)(0, 0);
      const double diff = 0.5 * g * g * q;
      double dprime = 0.0;
      if (!model.diffusion_is_constant) {
        const double dh = 1e-6 * (1.0 + std::abs(xf));
        xv(0) = xf + dh;
        const double gp = model.diffusion(t, xv)(0, 0);
        xv(0) = xf - dh;
        const double gm = model.diffusion(t, xv)(0, 0);
        dprime = 0.5 * q * (gp * gp - gm * gm) / (2.0 * dh);
        xv(0) = xf;
      }
      const double v = model.drift(t, xv)(0) - dprime;
      const double w = v * h / diff;
      // F_f = (D/h) [B(−w) p_left − B(w) p_right]
      face_lo[f] = (diff / h) * detail::bernoulli_b(-w);
      face_hi[f] = (diff / h) * detail::bernoulli_b(w);
    }
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      double s = 0.0, d = 0.0, u = 0.0;
      if (i > 0) {  // inflow across the left face
        s += face_lo[k - 1] / h;
        d -= face_hi[k - 1] / h;
      }
      if (i < n - 1) {  // outflow across the right face
        d -= face_lo[k] / h;
        u += face_hi[k] / h;
      }
      sub[k] = s;
      dia[k] = d;
      sup[k] = u;
    }
  };

  long next_snap = snap_steps.empty() ? -1 : 0;
  for (long step = 0; step < n_steps; ++step) {
    const double t_mid = (static_cast<double>(step) + 0.5) * dt;
    assemble(t_mid);

    // (I − dt/2 L) p_new = (I + dt/2 L) p_old
    for (int i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const double pm = (i > 0) ? p[k - 1] : 0.0;
      const double pp = (i < n - 1) ? p[k + 1] : 0.0;
      rhs[k] = p[k] + 0.5 * dt * (sub[k] * pm + dia[k] * p[k] + sup[k] * pp);
      a[k] = -0.5 * dt * sub[k];
      b[k] = 1.0 - 0.5 * dt * dia[k];
      c[k] = -0.5 * dt * sup[k];
    }
    detail::thomas_solve(a, b, c, rhs);
    p.swap(rhs);

    for (double& v : p) {
      if (v < 0.0) {
        if (v < -1e-10) {
          throw NumericalError("FPKE solve produced negative density at t = " +
                               std::to_string((step + 1) * dt));
        }
        v = 0.0;
        ++out.clamped_nodes;
      }
    }

    const double mass = trapezoid(x, p);
    const double deviation = std::abs(mass - 1.0);
    out.max_renorm_deviation = std::max(out.max_renorm_deviation, deviation);
    if (deviation > spec.mass_tol) {
      throw NumericalError("FPKE solve lost mass beyond tolerance at t = " +
                           std::to_string((step + 1) * dt));
    }
    for (double& v : p) {
      v /= mass;
    }

    out.max_boundary_density =
        std::max({out.max_boundary_density, p.front(), p.back()});

    while (next_snap >= 0 && next_snap < static_cast<long>(snap_steps.size()) &&
           snap_steps[static_cast<std::size_t>(next_snap)] == step + 1) {
      out.snapshots.push_back(
          GridPdf{static_cast<double>(step + 1) * dt, x, p});
      ++next_snap;
    }
  }

  if (out.snapshots.back().time < t_end - 1e-12) {
    out.snapshots.push_back(GridPdf{t_end, x, p});
  }
  out.boundary_warning = out.max_boundary_density > spec.boundary_density_tol;
  return out;
}

/// Expected loss Eq-style quadrature  ∫ L(x) p(x) dx  on the solver grid.
inline double expected_loss_on_grid(const GridPdf& grid, const LossFunction& loss) {
  detail::require(loss.dim() == 1, "grid expected loss is one-dimensional");
  std::vector<double> integrand(grid.x.size());
  const double mu = loss.mean(0);
  const double var = loss.cov(0, 0);
  for (std::size_t i = 0; i < grid.x.size(); ++i) {
    integrand[i] = gaussian_density_1d(grid.x[i], mu, var) * grid.p[i];
  }
  return trapezoid(grid.x, integrand);
}

}  // namespace gsprop
