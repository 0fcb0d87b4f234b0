#pragma once

#include <vector>

#include "hgamp/graph.hpp"
#include "hgamp/kernels.hpp"

// Loopy BP on the full factor graph (strong and weak edges alike) and the
// brute-force references it is checked against. Small instances only.
namespace hgamp {

struct BpOptions {
  Variant variant = Variant::sum_product;
  double u = 1.0;
  std::size_t iters = 10;
  std::size_t enumeration_cap = std::size_t{1} << 20;
  double tolerance = 1e-12;  // change in factor-to-variable messages
  kernels::Exec exec = kernels::Exec::serial;
};

struct BpResult {
  std::vector<Message> marginals;  // Delta_j, table or Gaussian
  std::vector<Eigen::VectorXd> x_hat;
  std::size_t iterations = 0;
  bool converged = false;
  double last_change = 0.0;
};

/// Flooding schedule. All variables finite, or all variables continuous with
/// every factor exposing a quadratic form. Messages start at zero.
BpResult bp_run(const FactorGraph& graph, const BpOptions& options);

struct ExactSolution {
  std::vector<Eigen::VectorXd> x_hat;
  BlockVector z_hat;
  std::vector<Message> marginals;  // max-marginals or (1/u) log-marginals, max shifted to 0
  double objective = 0.0;          // F at the maximizer (map only)
};

/// Exact maximizer and max-marginals by enumeration (finite) or the
/// closed form (Gaussian). Ties go to the first state in enumeration order,
/// variable 0 varying fastest.
ExactSolution brute_force_map(const FactorGraph& graph,
                              std::size_t enumeration_cap = std::size_t{1} << 20);

/// Exact E[x] and log-marginals of p(x) proportional to exp(u F(x, Ax)).
ExactSolution brute_force_marginals(const FactorGraph& graph, double u,
                                    std::size_t enumeration_cap = std::size_t{1} << 20);

}  // namespace hgamp
