#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "hgamp/quadrature.hpp"
#include "hgamp/scalar_channels.hpp"

using namespace hgamp;

namespace {

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Posterior moments by brute-force trapezoid on a fine grid, for the slab
// part, mixed with the atom at zero in closed form. Independent of the
// library quadrature.
std::pair<double, double> trapezoid_bg(double r, double qr, double rho, double mu, double sv) {
  const double lo = std::min(mu - 12 * std::sqrt(sv), r - 12 * std::sqrt(qr));
  const double hi = std::max(mu + 12 * std::sqrt(sv), r + 12 * std::sqrt(qr));
  const int n = 400000;
  const double h = (hi - lo) / n;
  double m0 = 0, m1 = 0, m2 = 0;
  for (int k = 0; k <= n; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == n ? 0.5 : 1.0) * h * normal_pdf(x, mu, sv) * normal_pdf(r, x, qr);
    m0 += w;
    m1 += w * x;
    m2 += w * x * x;
  }
  const double spike = (1 - rho) * normal_pdf(r, 0.0, qr);
  const double z = spike + rho * m0;
  const double mean = rho * m1 / z;
  return {mean, rho * m2 / z - mean * mean};
}

}  // namespace

TEST_CASE("bg_denoise with rho = 0 returns zero") {
  for (double r : {-3.0, 0.0, 2.5}) {
    const auto e = bg_denoise(r, 0.7, 0.0, SpikeSlabPrior{});
    CHECK(e.mean == 0.0);
    CHECK(e.var == 0.0);
  }
}

TEST_CASE("bg_denoise with rho = 1 is Gaussian conjugacy") {
  const auto e = bg_denoise(1.0, 1.0, 1.0, SpikeSlabPrior{0.0, 1.0});
  CHECK(e.mean == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(e.var == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("bg_denoise matches an independent trapezoid posterior") {
  const auto [mean, var] = trapezoid_bg(2.0, 0.25, 0.1, 0.0, 1.0);
  const auto e = bg_denoise(2.0, 0.25, 0.1, SpikeSlabPrior{0.0, 1.0});
  CHECK(std::abs(e.mean - mean) < 1e-8);
  CHECK(std::abs(e.var - var) < 1e-8);
  const auto [m2, v2] = trapezoid_bg(-0.7, 0.8, 0.35, 0.4, 2.0);
  const auto e2 = bg_denoise(-0.7, 0.8, 0.35, SpikeSlabPrior{0.4, 2.0});
  CHECK(std::abs(e2.mean - m2) < 1e-8);
  CHECK(std::abs(e2.var - v2) < 1e-8);
}

TEST_CASE("bg_denoise with infinite qr returns the prior moments") {
  const SpikeSlabPrior prior{0.5, 2.0};
  const double rho = 0.3;
  const auto e = bg_denoise(10.0, kInfiniteVariance, rho, prior);
  CHECK(e.mean == doctest::Approx(rho * 0.5));
  CHECK(e.var == doctest::Approx(rho * (2.0 + 0.25) - rho * rho * 0.25));
}

TEST_CASE("bg_denoise rejects rho outside [0, 1]") {
  CHECK_THROWS_AS(bg_denoise(0.0, 1.0, -0.1, SpikeSlabPrior{}), std::invalid_argument);
  CHECK_THROWS_AS(bg_denoise(0.0, 1.0, 1.5, SpikeSlabPrior{}), std::invalid_argument);
}

TEST_CASE("bg_denoise survives extreme pseudo-observations") {
  const auto e = bg_denoise(1e3, 1e-6, 0.01, SpikeSlabPrior{});
  CHECK(std::isfinite(e.mean));
  CHECK(std::isfinite(e.var));
  CHECK(e.mean == doctest::Approx(1e3).epsilon(1e-5));
}

TEST_CASE("conditioning reduces the variance on average") {
  // Pointwise the posterior of a spike-slab mixture can be wider than the
  // prior (an ambiguous r splits the mass between the modes), so the property
  // is the averaged one: E_R[var(X|R)] <= var(X), with equality gap E[var(E[X|R])].
  const SpikeSlabPrior prior{0.0, 1.0};
  for (double rho : {0.01, 0.1, 0.5, 0.9}) {
    const double prior_var = rho;
    for (double qr : {1e-2, 0.1, 1.0, 10.0}) {
      const double spread = 12.0 * std::sqrt(1.0 + qr);
      const double mean_var = quadrature::integrate(
          [&](double r) { return pr_density(r, qr, rho, prior) * bg_denoise(r, qr, rho, prior).var; },
          -spread, spread);
      const double explained = quadrature::integrate(
          [&](double r) {
            const double m = bg_denoise(r, qr, rho, prior).mean;
            return pr_density(r, qr, rho, prior) * m * m;
          },
          -spread, spread);
      CHECK(mean_var <= prior_var + 1e-9);
      CHECK(mean_var + explained == doctest::Approx(prior_var).epsilon(1e-6));
      for (double r = -6.0; r <= 6.0; r += 0.25) CHECK(bg_denoise(r, qr, rho, prior).var >= 0.0);
    }
  }
}

TEST_CASE("the posterior mean is nondecreasing in r for a zero-mean slab") {
  const SpikeSlabPrior prior{0.0, 1.0};
  for (double rho : {0.05, 0.3, 0.8})
    for (double qr : {0.01, 0.5, 4.0}) {
      double last = -1e300;
      for (double r = -8.0; r <= 8.0; r += 0.05) {
        const double m = bg_denoise(r, qr, rho, prior).mean;
        CHECK(m >= last);
        last = m;
      }
    }
}

TEST_CASE("pr_density closed form and normalization") {
  const SpikeSlabPrior prior{0.0, 1.0};
  CHECK(pr_density(0.3, 0.8, 0.0, prior) == doctest::Approx(normal_pdf(0.3, 0.0, 0.8)).epsilon(1e-14));
  CHECK(pr_density(0.0, 1.0, 0.1, prior) ==
        doctest::Approx(0.9 * normal_pdf(0, 0, 1) + 0.1 * normal_pdf(0, 0, 2)).epsilon(1e-14));
  for (double rho : {0.0, 0.2, 1.0}) {
    const double mass = quadrature::integrate([&](double r) { return pr_density(r, 0.5, rho, prior); }, -40, 40);
    CHECK(std::abs(mass - 1.0) < 1e-6);
  }
  CHECK(log_pr_density(0.4, 0.5, 0.3, prior) == doctest::Approx(std::log(pr_density(0.4, 0.5, 0.3, prior))).epsilon(1e-13));
}

TEST_CASE("pr_density agrees with a Monte Carlo estimate") {
  // p_R(r) = E_X[N(r; X, qr)], averaged over prior draws of X
  std::mt19937_64 rng(5);
  std::bernoulli_distribution active(0.1);
  std::normal_distribution<double> nd;
  const int n = 2'000'000;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = active(rng) ? nd(rng) : 0.0;
    acc += normal_pdf(0.0, x, 1.0);
  }
  CHECK(std::abs(acc / n - pr_density(0.0, 1.0, 0.1, SpikeSlabPrior{0.0, 1.0})) < 1e-3);
}

TEST_CASE("awgn_output_denoise closed forms and limits") {
  auto e = awgn_output_denoise(0.0, 1.0, 2.0, AwgnChannel{1.0});
  CHECK(e.mean == doctest::Approx(1.0));
  CHECK(e.var == doctest::Approx(0.5));
  e = awgn_output_denoise(0.3, 2.0, 5.0, AwgnChannel{1e12});
  CHECK(e.mean == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(e.var == doctest::Approx(2.0).epsilon(1e-9));
  e = awgn_output_denoise(0.3, 2.0, 5.0, AwgnChannel{1e-14});
  CHECK(e.mean == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(e.var < 1e-13);
}

TEST_CASE("awgn_output_denoise shrinks the variance strictly") {
  for (double qp : {1e-6, 0.01, 1.0, 100.0})
    for (double nv : {1e-4, 0.5, 10.0}) {
      const auto e = awgn_output_denoise(0.1, qp, -0.4, AwgnChannel{nv});
      CHECK(e.var < qp);
      CHECK((1.0 / qp) * (1.0 - e.var / qp) >= 0.0);
    }
}

TEST_CASE("quadrature oracle reproduces Gaussian conjugacy and a point mass") {
  quadrature::PriorDensitySpec gauss;
  gauss.continuous = quadrature::ContinuousPart{1.0, [](double x) { return -0.5 * (x - 1.0) * (x - 1.0) / 2.0; }, 1.0, std::sqrt(2.0)};
  const auto g = quadrature::quadrature_posterior_oracle(gauss, -0.5, 0.5);
  const double var = 1.0 / (1.0 / 2.0 + 1.0 / 0.5);
  CHECK(std::abs(g.mean - var * (1.0 / 2.0 + -0.5 / 0.5)) < 1e-9);
  CHECK(std::abs(g.var - var) < 1e-9);

  quadrature::PriorDensitySpec atom;
  atom.atoms.push_back({0.0, 1.0});
  const auto a = quadrature::quadrature_posterior_oracle(atom, 3.0, 0.1);
  CHECK(a.mean == 0.0);
  CHECK(a.var == 0.0);
}

TEST_CASE("channel parameter validation") {
  CHECK_THROWS(SpikeSlabPrior{0.0, 0.0}.validate());
  CHECK_THROWS(AwgnChannel{-1.0}.validate());
  CHECK_NOTHROW(AwgnChannel{0.5}.validate());
}
