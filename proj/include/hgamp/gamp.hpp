#pragma once

#include <optional>
#include <vector>

#include "hgamp/graph.hpp"
#include "hgamp/kernels.hpp"

namespace hgamp {

struct GampOptions {
  enum class StrongInit { standalone, flat };
  // Deliberate corruption of the r-update, for checking that the test
  // batteries notice a broken engine.
  enum class Fault { none, flip_r_update_sign };

  Variant variant = Variant::sum_product;
  double u = 1.0;
  std::size_t iters = 20;
  double variance_floor = 1e-12;
  double damping = 0.0;
  double tolerance = 0.0;  // early stop on max_j |x_j(t) - x_j(t-1)|; 0 disables
  StrongInit strong_init = StrongInit::standalone;
  // Starting pseudo-observation; both or neither. Default is the infinite
  // variance sentinel.
  std::optional<std::vector<Eigen::VectorXd>> r_init;
  std::optional<std::vector<Eigen::MatrixXd>> qr_init;
  bool scalar_fast_path = true;  // dense kernels when every block is scalar
  kernels::Exec exec = kernels::Exec::serial;
  Fault fault = Fault::none;

  void validate() const;
};

/// Per-iteration quantities. Variable-side vectors are indexed by j,
/// factor-side by i. Factors with z_dim 0 keep empty vectors.
struct GampState {
  std::size_t t = 0;

  std::vector<Eigen::VectorXd> x_hat;
  std::vector<Eigen::MatrixXd> qx;
  std::vector<Eigen::VectorXd> r_hat;
  std::vector<Eigen::MatrixXd> qr;      // meaningful only where !r_infinite[j]
  std::vector<Eigen::MatrixXd> qr_inv;  // Q^{-r}, zero when infinite
  std::vector<Eigen::VectorXd> r_info;  // Q^{-r} r_hat
  std::vector<char> r_infinite;

  std::vector<Eigen::VectorXd> z_hat, p_hat, s_hat, z0;
  std::vector<Eigen::MatrixXd> qp, qs;
  std::vector<Eigen::MatrixXd> qz;  // u var(z) (sum-product) or (D^z)^{-1} (max-sum)
  std::vector<Eigen::MatrixXd> dz;  // max-sum only

  // Strong-edge messages, indexed like graph.factors[i].strong.
  std::vector<std::vector<Message>> to_var;    // Delta_{i->j}
  std::vector<std::vector<Message>> from_var;  // Delta_{i<-j}
};

struct GampDiagnostics {
  std::size_t iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  std::size_t psd_repairs = 0;  // matrices that had to be clipped
  std::optional<std::size_t> first_repair_iteration;
};

struct GampResult {
  std::vector<Eigen::VectorXd> trajectory;  // stacked x_hat(t), one per iteration
  std::vector<Eigen::VectorXd> x_hat;
  std::vector<Eigen::MatrixXd> qx;
  std::vector<Eigen::VectorXd> z_hat;
  GampDiagnostics diagnostics;
  GampState state;
};

/// Hybrid-GAMP on a validated graph. The update steps are public so tests
/// can drive and inspect them one at a time; iterate() runs them in
/// declaration order and advances t.
class GampEngine {
 public:
  GampEngine(const FactorGraph& graph, GampOptions options);

  void initialize();
  void variable_update_strong();
  void variable_update_weak();
  void factor_linear_step();
  void factor_update_strong();
  void factor_update_weak();
  void variable_linear_step();
  void iterate();

  const GampState& state() const { return state_; }
  GampState& mutable_state() { return state_; }
  const GampDiagnostics& diagnostics() const { return diag_; }
  Eigen::VectorXd stacked_x() const;

 private:
  Message penalty_message(std::size_t j) const;
  Message flat_message(std::size_t j) const;
  void record_repair();
  Eigen::MatrixXd repair(const Eigen::MatrixXd& m, double floor);
  double repair(double v, double floor);

  const FactorGraph& graph_;
  GampOptions opt_;
  Adjacency adj_;
  // strong edges of each variable as (factor, slot)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> strong_edges_;
  bool fast_ = false;
  kernels::DenseOperator dense_;
  std::vector<std::size_t> dense_rows_;  // factor index of each dense row
  GampState state_;
  GampDiagnostics diag_;
  std::vector<Eigen::VectorXd> prev_x_;
  std::vector<Eigen::VectorXd> prev_s_;
};

GampResult gamp_run(const FactorGraph& graph, const GampOptions& options);

}  // namespace hgamp
