#pragma once

#include <vector>

#include <Eigen/Dense>

// Comparators for the group-sparse recovery benchmark.
namespace hgamp {

using Groups = std::vector<std::vector<std::size_t>>;

/// Throws std::invalid_argument unless every component lies in exactly one group.
void require_partition(const Groups& groups, std::size_t n);

struct LassoConfig {
  enum class Step { backtracking, fixed };
  double gamma = 0.1;
  std::size_t iters = 500;
  Step step = Step::backtracking;
  double rel_tol = 1e-10;  // stop on relative objective change
};

struct LassoResult {
  Eigen::VectorXd x;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool monotone = true;  // objective never increased
};

/// 1/2 ||y - Ax||^2 + gamma * sum_k ||x_{G_k}||_2.
double group_lasso_objective(const Eigen::VectorXd& y, const Eigen::MatrixXd& a,
                             const Groups& groups, double gamma, const Eigen::VectorXd& x);

/// Proximal gradient with group soft-thresholding. Backtracking mode uses
/// Barzilai-Borwein trial steps and enforces sufficient decrease; fixed mode
/// uses 1/L with L from power iteration. Groups must partition the components.
LassoResult group_lasso(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, const Groups& groups,
                        const LassoConfig& config,
                        const Eigen::VectorXd* warm_start = nullptr);

/// Smallest gamma with the all-zero solution: max_k ||A_{G_k}' y||.
double group_lasso_gamma_max(const Eigen::VectorXd& y, const Eigen::MatrixXd& a,
                             const Groups& groups);

struct OmpResult {
  Eigen::VectorXd x;
  std::vector<std::size_t> selected;  // groups, in order of selection
  std::vector<double> residual_norms;  // after each selection
  bool rank_deficient = false;
};

OmpResult group_omp(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, const Groups& groups,
                    std::size_t k_active);

/// prior_var * A' (prior_var * A A' + noise_var * I)^{-1} y.
Eigen::VectorXd lmmse(const Eigen::VectorXd& y, const Eigen::MatrixXd& a, double prior_var,
                      double noise_var);

}  // namespace hgamp
