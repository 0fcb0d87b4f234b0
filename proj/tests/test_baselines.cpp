#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "hgamp/baselines.hpp"

using namespace hgamp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd gaussian_matrix(std::mt19937_64& rng, int m, int n) {
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(double(m)));
  return MatrixXd::NullaryExpr(m, n, [&] { return nd(rng); });
}

VectorXd gaussian_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  return VectorXd::NullaryExpr(n, [&] { return nd(rng); });
}

Groups contiguous(std::size_t k, std::size_t d) {
  Groups g(k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < d; ++b) g[a].push_back(a * d + b);
  return g;
}

// Exact block coordinate descent: each block minimizes
// 1/2 ||r - B x||^2 + gamma ||x|| in closed form up to a scalar root (the
// norm t of the block solution, found by bisection).
VectorXd bcd_group_lasso(const VectorXd& y, const MatrixXd& a, const Groups& groups, double gamma, int sweeps) {
  VectorXd x = VectorXd::Zero(a.cols());
  for (int s = 0; s < sweeps; ++s) {
    for (const auto& g : groups) {
      const auto d = static_cast<Eigen::Index>(g.size());
      MatrixXd b(a.rows(), d);
      for (Eigen::Index c = 0; c < d; ++c) b.col(c) = a.col(static_cast<Eigen::Index>(g[static_cast<std::size_t>(c)]));
      VectorXd r = y - a * x;
      for (Eigen::Index c = 0; c < d; ++c) r += b.col(c) * x(static_cast<Eigen::Index>(g[static_cast<std::size_t>(c)]));
      const VectorXd c0 = b.transpose() * r;
      VectorXd xb = VectorXd::Zero(d);
      if (c0.norm() > gamma) {
        const MatrixXd btb = b.transpose() * b;
        auto solve = [&](double t) -> VectorXd {
          return (btb + (gamma / t) * MatrixXd::Identity(d, d)).ldlt().solve(c0);
        };
        double lo = 1e-300, hi = 1.0;
        while (solve(hi).norm() > hi) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          (solve(mid).norm() > mid ? lo : hi) = mid;
        }
        xb = solve(hi);
      }
      for (Eigen::Index c = 0; c < d; ++c) x(static_cast<Eigen::Index>(g[static_cast<std::size_t>(c)])) = xb(c);
    }
  }
  return x;
}

}  // namespace

TEST_CASE("group lasso: gamma at or above gamma_max gives zero") {
  std::mt19937_64 rng(51);
  const MatrixXd a = gaussian_matrix(rng, 12, 8);
  const VectorXd y = gaussian_vector(rng, 12);
  const auto groups = contiguous(4, 2);
  const double gmax = group_lasso_gamma_max(y, a, groups);
  for (double f : {1.0, 1.5}) {
    LassoConfig cfg;
    cfg.gamma = f * gmax;
    CHECK(group_lasso(y, a, groups, cfg).x.cwiseAbs().maxCoeff() == 0.0);
  }
  LassoConfig cfg;
  cfg.gamma = 0.9 * gmax;
  CHECK(group_lasso(y, a, groups, cfg).x.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("group lasso: tiny gamma gives least squares") {
  std::mt19937_64 rng(52);
  const MatrixXd a = gaussian_matrix(rng, 20, 8);
  const VectorXd y = gaussian_vector(rng, 20);
  LassoConfig cfg;
  cfg.gamma = 1e-8;
  cfg.iters = 20000;
  cfg.rel_tol = 0.0;
  const VectorXd ls = a.colPivHouseholderQr().solve(y);
  for (auto step : {LassoConfig::Step::backtracking, LassoConfig::Step::fixed}) {
    cfg.step = step;
    CHECK((group_lasso(y, a, contiguous(4, 2), cfg).x - ls).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("group lasso matches exact block coordinate descent") {
  std::mt19937_64 rng(53);
  for (int inst = 0; inst < 5; ++inst) {
    const MatrixXd a = gaussian_matrix(rng, 8, 8);
    const VectorXd y = gaussian_vector(rng, 8);
    const auto groups = contiguous(4, 2);
    const double gamma = 0.3 * group_lasso_gamma_max(y, a, groups);
    const VectorXd ref = bcd_group_lasso(y, a, groups, gamma, 3000);
    LassoConfig cfg;
    cfg.gamma = gamma;
    cfg.iters = 20000;
    cfg.rel_tol = 0.0;
    const auto res = group_lasso(y, a, groups, cfg);
    const double f_ref = group_lasso_objective(y, a, groups, gamma, ref);
    CHECK(res.objective - f_ref <= 1e-6 * std::max(1.0, f_ref));
    CHECK(res.objective == doctest::Approx(group_lasso_objective(y, a, groups, gamma, res.x)).epsilon(1e-12));
  }
}

TEST_CASE("group lasso objective never increases") {
  std::mt19937_64 rng(54);
  const MatrixXd a = gaussian_matrix(rng, 30, 40);
  const VectorXd y = gaussian_vector(rng, 30);
  const auto groups = contiguous(10, 4);
  for (auto step : {LassoConfig::Step::backtracking, LassoConfig::Step::fixed}) {
    LassoConfig cfg;
    cfg.gamma = 0.1 * group_lasso_gamma_max(y, a, groups);
    cfg.step = step;
    double prev = 1e300;
    VectorXd x = VectorXd::Zero(40);
    // restart one iteration at a time from the previous iterate
    for (int it = 0; it < 50; ++it) {
      cfg.iters = 1;
      const auto res = group_lasso(y, a, groups, cfg, &x);
      CHECK(res.monotone);
      CHECK(res.objective <= prev + 1e-12);
      prev = res.objective;
      x = res.x;
    }
  }
}

TEST_CASE("group lasso rejects bad input") {
  const MatrixXd a = MatrixXd::Identity(4, 4);
  const VectorXd y = VectorXd::Ones(4);
  LassoConfig cfg;
  CHECK_THROWS_AS(group_lasso(y, a, {{0, 1}, {1, 2, 3}}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(group_lasso(y, a, {{0, 1}, {2}}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(group_lasso(VectorXd::Ones(3), a, contiguous(2, 2), cfg), std::invalid_argument);
  cfg.gamma = 0.0;
  CHECK_THROWS_AS(group_lasso(y, a, contiguous(2, 2), cfg), std::invalid_argument);
  cfg.gamma = 0.1;
  CHECK(group_lasso(y, MatrixXd::Zero(4, 4), contiguous(2, 2), cfg).x.isZero());
}

TEST_CASE("group OMP") {
  std::mt19937_64 rng(55);
  const MatrixXd a = gaussian_matrix(rng, 20, 12);
  const auto groups = contiguous(4, 3);

  // one group: the least squares fit on that group
  const VectorXd y = gaussian_vector(rng, 20);
  const auto one = group_omp(y, a, {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}}, 1);
  CHECK((one.x - a.colPivHouseholderQr().solve(y)).cwiseAbs().maxCoeff() < 1e-10);

  // every group: least squares overall
  const auto all = group_omp(y, a, groups, 4);
  CHECK((all.x - a.colPivHouseholderQr().solve(y)).cwiseAbs().maxCoeff() < 1e-10);
  for (std::size_t k = 1; k < all.residual_norms.size(); ++k)
    CHECK(all.residual_norms[k] <= all.residual_norms[k - 1] + 1e-12);

  // planted two groups, noiseless
  VectorXd x = VectorXd::Zero(12);
  x.segment(3, 3) << 1.0, -2.0, 0.5;
  x.segment(9, 3) << -1.5, 0.7, 1.2;
  const auto planted = group_omp(a * x, a, groups, 2);
  CHECK((planted.x - x).cwiseAbs().maxCoeff() < 1e-10);
  std::vector<std::size_t> sel = planted.selected;
  std::sort(sel.begin(), sel.end());
  CHECK(sel == std::vector<std::size_t>{1, 3});
  CHECK_FALSE(planted.rank_deficient);

  CHECK_THROWS_AS(group_omp(y, a, groups, 5), std::invalid_argument);
  CHECK(group_omp(y, a, groups, 0).x.isZero());
}

TEST_CASE("LMMSE") {
  // scalar example: x ~ N(0, 2), y = 3x + N(0, 1)
  const VectorXd est = lmmse(VectorXd::Constant(1, 1.2), MatrixXd::Constant(1, 1, 3.0), 2.0, 1.0);
  CHECK(est(0) == doctest::Approx(2.0 * 3.0 * 1.2 / (9.0 * 2.0 + 1.0)).epsilon(1e-14));
  CHECK(lmmse(VectorXd::Ones(2), MatrixXd::Ones(2, 3), 0.0, 1.0).isZero());

  // Gaussian conjugacy in information form
  std::mt19937_64 rng(56);
  const MatrixXd a = gaussian_matrix(rng, 6, 9);
  const VectorXd y = gaussian_vector(rng, 6);
  const MatrixXd prec = a.transpose() * a / 0.3 + MatrixXd::Identity(9, 9) / 1.7;
  const VectorXd post = prec.ldlt().solve(a.transpose() * y / 0.3);
  CHECK((lmmse(y, a, 1.7, 0.3) - post).cwiseAbs().maxCoeff() < 1e-10);

  // noiseless, rank deficient covariance still solves
  CHECK(lmmse(VectorXd::Ones(3), MatrixXd::Ones(3, 2), 1.0, 0.0).allFinite());
  CHECK_THROWS_AS(lmmse(VectorXd::Ones(2), MatrixXd::Ones(3, 2), 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(lmmse(VectorXd::Ones(3), MatrixXd::Ones(3, 2), -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("LMMSE error stays below the prior energy on average") {
  std::mt19937_64 rng(57);
  double err = 0.0, energy = 0.0;
  for (int s = 0; s < 50; ++s) {
    const MatrixXd a = gaussian_matrix(rng, 10, 20);
    const VectorXd x = std::sqrt(0.5) * gaussian_vector(rng, 20);
    const VectorXd y = a * x + std::sqrt(0.05) * gaussian_vector(rng, 10);
    err += (lmmse(y, a, 0.5, 0.05) - x).squaredNorm();
    energy += 0.5 * 20;
  }
  CHECK(err < energy);
}
