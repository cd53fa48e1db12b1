#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gsprop/metrics.hpp"
#include "oracles.hpp"

using gsprop::GaussianMixture;
using gsprop::LossFunction;
using gsprop::Matrix;
using gsprop::Vector;

namespace {

LossFunction paper_loss() {
  LossFunction loss;
  loss.mean = Vector::Constant(1, M_PI / 2.0);
  loss.cov = Matrix::Constant(1, 1, 0.01);
  loss.action_label = "assess";
  return loss;
}

GaussianMixture single1d(double mu, double p) {
  return GaussianMixture::single(Vector::Constant(1, mu), Matrix::Constant(1, 1, p));
}

gsprop::GridPdf grid_of(const std::function<double(double)>& f, double lo, double hi,
                        int n) {
  gsprop::GridPdf g;
  g.x.resize(static_cast<std::size_t>(n));
  g.p.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    g.x[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    g.p[static_cast<std::size_t>(i)] = f(g.x[static_cast<std::size_t>(i)]);
  }
  return g;
}

}  // namespace

TEST_CASE("mixture expected loss: sifting limit and distant component") {
  const auto loss = paper_loss();

  CHECK(gsprop::expected_loss_mixture(single1d(M_PI / 2.0, 1e-12), loss) ==
        Catch::Approx(1.0 / std::sqrt(2.0 * M_PI * 0.01)).epsilon(1e-6));

  // The drifted-away prior: same order as a vanishing expected loss.
  const double far = gsprop::expected_loss_mixture(single1d(-0.3, 0.09), loss);
  CHECK(far == Catch::Approx(oracles::normal_pdf(M_PI / 2.0, -0.3, 0.1)).epsilon(1e-12));
  CHECK(far < 1e-6);
}

TEST_CASE("mixture expected loss equals grid quadrature") {
  const auto loss = paper_loss();
  GaussianMixture mix;
  mix.components.emplace_back(0.45, Vector::Constant(1, 1.0), Matrix::Constant(1, 1, 0.2));
  mix.components.emplace_back(0.55, Vector::Constant(1, 2.2), Matrix::Constant(1, 1, 0.5));

  const double closed = gsprop::expected_loss_mixture(mix, loss);
  const double quad = oracles::integrate_1d(
      [&](double x) {
        const double p = 0.45 * oracles::normal_pdf(x, 1.0, 0.2) +
                         0.55 * oracles::normal_pdf(x, 2.2, 0.5);
        return oracles::normal_pdf(x, M_PI / 2.0, 0.01) * p;
      },
      -8.0, 12.0, 80001);
  CHECK(closed == Catch::Approx(quad).margin(1e-6));
}

TEST_CASE("relative error") {
  CHECK(gsprop::relative_error(0.0332, 0.0332) == 0.0);
  CHECK(gsprop::relative_error(0.0, 0.0332) == 1.0);
  CHECK(gsprop::relative_error(0.02557, 0.0332) == Catch::Approx(0.23).margin(0.002));
  CHECK_THROWS_AS(gsprop::relative_error(0.1, 0.0), std::invalid_argument);
}

TEST_CASE("ISD of a mixture against its own samples is zero") {
  const auto mix = single1d(0.4, 0.3);
  const auto grid = grid_of(
      [&](double x) { return oracles::normal_pdf(x, 0.4, 0.3); }, -6.0, 7.0, 2001);
  CHECK(gsprop::isd(grid, mix) <= 1e-12);
  CHECK(gsprop::wisd(grid, mix, paper_loss()) <= 1e-12);
}

TEST_CASE("ISD of two disjoint unit Gaussians is the summed self-energy") {
  const auto mix = single1d(100.0, 1.0);
  const auto grid = grid_of(
      [&](double x) { return oracles::normal_pdf(x, 0.0, 1.0); }, -10.0, 110.0, 24001);
  // ∫N² dx each = 1/(2√π); the cross term vanishes.
  CHECK(gsprop::isd(grid, mix) == Catch::Approx(1.0 / std::sqrt(M_PI)).epsilon(1e-3));
}

TEST_CASE("WISD is bounded by the loss peak times ISD") {
  const auto loss = paper_loss();
  const auto mix = single1d(1.0, 0.4);
  const auto grid = grid_of(
      [&](double x) { return oracles::normal_pdf(x, 2.0, 0.6); }, -6.0, 8.0, 4001);
  const double peak = 1.0 / std::sqrt(2.0 * M_PI * 0.01);
  CHECK(gsprop::wisd(grid, mix, loss) <= peak * gsprop::isd(grid, mix) + 1e-12);
}

TEST_CASE("expected_loss_mixture requires a normalized mixture") {
  GaussianMixture mix;
  mix.components.emplace_back(0.5, Vector::Zero(1), Matrix::Constant(1, 1, 1.0));
  CHECK_THROWS_AS(gsprop::expected_loss_mixture(mix, paper_loss()),
                  std::invalid_argument);
}
