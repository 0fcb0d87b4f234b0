#include "hgamp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hgamp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void group_shrink(const VectorXd& v, const Groups& groups, double thresh, VectorXd& out) {
  out.resize(v.size());
  for (const auto& g : groups) {
    double norm2 = 0.0;
    for (auto j : g) norm2 += v(static_cast<Index>(j)) * v(static_cast<Index>(j));
    const double norm = std::sqrt(norm2);
    const double scale = norm > thresh ? 1.0 - thresh / norm : 0.0;
    for (auto j : g) out(static_cast<Index>(j)) = scale * v(static_cast<Index>(j));
  }
}

double penalty(const VectorXd& x, const Groups& groups) {
  double acc = 0.0;
  for (const auto& g : groups) {
    double n2 = 0.0;
    for (auto j : g) n2 += x(static_cast<Index>(j)) * x(static_cast<Index>(j));
    acc += std::sqrt(n2);
  }
  return acc;
}

double lipschitz(const MatrixXd& a) {
  VectorXd v = VectorXd::Ones(a.cols()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    VectorXd w = a.transpose() * (a * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / nw;
    if (std::abs(next - lambda) <= 1e-10 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda * 1.01;
}

}  // namespace

void require_partition(const Groups& groups, std::size_t n) {
  std::vector<int> count(n, 0);
  for (const auto& g : groups) {
    for (auto j : g) {
      if (j >= n) throw std::invalid_argument("groups: index out of range");
      ++count[j];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (count[j] > 1) throw std::invalid_argument("groups overlap; only partitions are supported");
    if (count[j] == 0) throw std::invalid_argument("groups do not cover every component");
  }
}

double group_lasso_objective(const VectorXd& y, const MatrixXd& a, const Groups& groups,
                             double gamma, const VectorXd& x) {
  return 0.5 * (y - a * x).squaredNorm() + gamma * penalty(x, groups);
}

double group_lasso_gamma_max(const VectorXd& y, const MatrixXd& a, const Groups& groups) {
  const VectorXd c = a.transpose() * y;
  double best = 0.0;
  for (const auto& g : groups) {
    double n2 = 0.0;
    for (auto j : g) n2 += c(static_cast<Index>(j)) * c(static_cast<Index>(j));
    best = std::max(best, std::sqrt(n2));
  }
  return best;
}

LassoResult group_lasso(const VectorXd& y, const MatrixXd& a, const Groups& groups,
                        const LassoConfig& cfg, const VectorXd* warm_start) {
  if (!(cfg.gamma > 0.0)) throw std::invalid_argument("group_lasso: gamma must be positive");
  if (y.size() != a.rows()) throw std::invalid_argument("group_lasso: y length differs from rows of A");
  require_partition(groups, static_cast<std::size_t>(a.cols()));

  LassoResult res;
  res.x = warm_start ? *warm_start : VectorXd::Zero(a.cols());
  if (res.x.size() != a.cols()) throw std::invalid_argument("group_lasso: warm start length");
  VectorXd resid = a * res.x - y;
  VectorXd grad = a.transpose() * resid;
  double obj = 0.5 * resid.squaredNorm() + cfg.gamma * penalty(res.x, groups);

  const double lip = lipschitz(a);
  if (lip == 0.0) {
    res.x.setZero();
    res.objective = group_lasso_objective(y, a, groups, cfg.gamma, res.x);
    return res;
  }
  const double alpha_min = 1e-8 * lip;
  double alpha = lip;
  VectorXd cand, cand_resid, cand_grad;

  for (std::size_t it = 0; it < cfg.iters; ++it) {
    double cand_obj = 0.0;
    if (cfg.step == LassoConfig::Step::fixed) alpha = lip;
    while (true) {
      group_shrink(res.x - grad / alpha, groups, cfg.gamma / alpha, cand);
      cand_resid = a * cand - y;
      cand_obj = 0.5 * cand_resid.squaredNorm() + cfg.gamma * penalty(cand, groups);
      if (cfg.step == LassoConfig::Step::fixed) break;
      const double sufficient = obj - 0.5e-4 * alpha * (cand - res.x).squaredNorm();
      if (cand_obj <= sufficient || alpha >= 1e6 * lip) break;
      alpha *= 2.0;
    }
    cand_grad = a.transpose() * cand_resid;
    const VectorXd dx = cand - res.x;
    const double ad2 = (cand_resid - resid).squaredNorm();
    const double d2 = dx.squaredNorm();

    if (cand_obj > obj + 1e-12 * std::max(1.0, std::abs(obj))) res.monotone = false;
    const double change = std::abs(obj - cand_obj);
    res.x = cand;
    resid = cand_resid;
    grad = cand_grad;
    const double prev = obj;
    obj = cand_obj;
    res.iterations = it + 1;
    if (d2 == 0.0 || change <= cfg.rel_tol * std::max(1.0, std::abs(prev))) break;
    alpha = std::clamp(ad2 / d2, alpha_min, lip);  // Barzilai-Borwein curvature estimate
  }
  res.objective = obj;
  return res;
}

OmpResult group_omp(const VectorXd& y, const MatrixXd& a, const Groups& groups,
                    std::size_t k_active) {
  if (y.size() != a.rows()) throw std::invalid_argument("group_omp: y length differs from rows of A");
  require_partition(groups, static_cast<std::size_t>(a.cols()));
  if (k_active > groups.size()) throw std::invalid_argument("group_omp: k_active exceeds group count");

  OmpResult res;
  res.x = VectorXd::Zero(a.cols());
  VectorXd resid = y;
  std::vector<char> used(groups.size(), 0);
  std::vector<Index> cols;
  for (std::size_t step = 0; step < k_active; ++step) {
    const VectorXd corr = a.transpose() * resid;
    std::size_t best = groups.size();
    double best_score = -1.0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      if (used[k]) continue;
      double s = 0.0;
      for (auto j : groups[k]) s += corr(static_cast<Index>(j)) * corr(static_cast<Index>(j));
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    used[best] = 1;
    res.selected.push_back(best);
    for (auto j : groups[best]) cols.push_back(static_cast<Index>(j));

    MatrixXd sub(a.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) sub.col(static_cast<Index>(c)) = a.col(cols[c]);
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(sub);
    if (cod.rank() < sub.cols()) res.rank_deficient = true;
    const VectorXd coef = cod.solve(y);
    res.x.setZero();
    for (std::size_t c = 0; c < cols.size(); ++c) res.x(cols[c]) = coef(static_cast<Index>(c));
    resid = y - sub * coef;
    res.residual_norms.push_back(resid.norm());
  }
  return res;
}

VectorXd lmmse(const VectorXd& y, const MatrixXd& a, double prior_var, double noise_var) {
  if (y.size() != a.rows()) throw std::invalid_argument("lmmse: y length differs from rows of A");
  if (!(prior_var >= 0.0) || !(noise_var >= 0.0)) throw std::invalid_argument("lmmse: negative variance");
  if (std::isinf(noise_var) || prior_var == 0.0) return VectorXd::Zero(a.cols());
  const MatrixXd cov = prior_var * a * a.transpose() + noise_var * MatrixXd::Identity(a.rows(), a.rows());
  Eigen::LDLT<MatrixXd> ldlt(cov);
  VectorXd w;
  if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
    w = ldlt.solve(y);
  } else {
    w = cov.completeOrthogonalDecomposition().solve(y);
  }
  return prior_var * a.transpose() * w;
}

}  // namespace hgamp
