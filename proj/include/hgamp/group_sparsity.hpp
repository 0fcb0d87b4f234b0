#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hgamp/kernels.hpp"
#include "hgamp/scalar_channels.hpp"

// Sum-product Hybrid-GAMP for (possibly overlapping) group sparsity: a scalar
// GAMP loop with a spike-slab input channel whose per-component activity
// probability is refined by LLR messages exchanged with the groups.
namespace hgamp {

struct GroupModel {
  Eigen::MatrixXd a;                             // m x n
  std::vector<std::vector<std::size_t>> groups;  // G_k
  double rho = 0.1;                              // P(group active)
  SpikeSlabPrior prior;
  AwgnChannel channel;

  std::size_t n() const { return static_cast<std::size_t>(a.cols()); }
  std::size_t m() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t k() const { return groups.size(); }
  /// gamma(j): the groups containing j, ascending.
  std::vector<std::vector<std::size_t>> memberships() const;
  void validate() const;
};

/// LLR messages live on the (component, group) membership edges.
struct SparsityState {
  std::vector<std::size_t> edge_var, edge_group;
  std::vector<std::vector<std::size_t>> var_edges;    // edges of component j
  std::vector<std::vector<std::size_t>> group_edges;  // edges of group k
  Eigen::VectorXd llr_to_group;    // LLR_{j->k}
  Eigen::VectorXd llr_from_group;  // LLR_{j<-k}
  Eigen::VectorXd rho_hat_excl;    // rho_{j->k}
  Eigen::VectorXd rho_hat;         // rho_j

  /// LLR_{j<-k} at the prior log-odds and rho_j computed from them.
  static SparsityState initial(const GroupModel& model);
};

/// rho = 1 - prod_k 1/(1 + exp(llr_k)), evaluated as -expm1(-sum softplus).
double activity_from_llrs(const double* llrs, std::size_t count, std::size_t skip = SIZE_MAX);

/// One sparsity pass from the current pseudo-observations. Infinite qr gives
/// zero evidence. LLRs are clamped to +-clamp.
void sparsity_update(SparsityState& state, const Eigen::VectorXd& r_hat,
                     const Eigen::VectorXd& qr, const GroupModel& model, double clamp = 30.0);

struct ScalarGampState {
  std::size_t t = 0;
  Eigen::VectorXd x_hat, qx, r_hat, qr;  // qr is +inf before any evidence
  Eigen::VectorXd z_hat, p_hat, qp, s_hat, qs, z0, qz;
};

/// The scalar GAMP pass shared by the group and fixed-sparsity runs.
class ScalarGamp {
 public:
  ScalarGamp(const Eigen::MatrixXd& a, Eigen::VectorXd y, SpikeSlabPrior prior,
             AwgnChannel channel, double variance_floor = 1e-12,
             kernels::Exec exec = kernels::Exec::serial);

  /// Input denoise with the given activity probabilities, then the output
  /// side and the pseudo-observation update.
  void step(const Eigen::VectorXd& rho_hat);
  const ScalarGampState& state() const { return st_; }

 private:
  kernels::DenseOperator op_;
  Eigen::VectorXd y_;
  SpikeSlabPrior prior_;
  AwgnChannel channel_;
  double floor_;
  kernels::Exec exec_;
  ScalarGampState st_;
  std::vector<double> g_, prec_;
};

struct GroupGampOptions {
  std::size_t iters = 20;
  double variance_floor = 1e-12;
  double llr_clamp = 30.0;
  kernels::Exec exec = kernels::Exec::serial;
};

struct GroupGampResult {
  std::vector<Eigen::VectorXd> trajectory;  // x_hat after each iteration
  Eigen::VectorXd x_hat;
  Eigen::VectorXd rho_hat;
  ScalarGampState state;
  SparsityState sparsity;
  std::size_t iterations = 0;
};

GroupGampResult group_gamp_run(const GroupModel& model, const Eigen::VectorXd& y,
                               const GroupGampOptions& options = {});

/// Scalar GAMP with fixed per-component activity probabilities.
GroupGampResult basic_gamp_run(const GroupModel& model, const Eigen::VectorXd& y,
                               const Eigen::VectorXd& rho_hat,
                               const GroupGampOptions& options = {});

struct GroupPosterior {
  Eigen::VectorXd mean;             // E[x | y]
  Eigen::VectorXd group_activity;   // P(group k active | y)
};

/// Exact posterior by enumerating all 2^K activity patterns.
GroupPosterior exact_group_posterior_oracle(const GroupModel& model, const Eigen::VectorXd& y,
                                            std::size_t max_groups = 12);

}  // namespace hgamp
