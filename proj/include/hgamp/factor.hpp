#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgamp/message.hpp"

namespace hgamp {

/// Variable node descriptor. A variable is continuous (real vector of size
/// `dim`) unless `alphabet` is non-empty, in which case it takes one of the
/// listed values.
struct VariableSpec {
  std::size_t dim = 1;
  std::vector<Eigen::VectorXd> alphabet;

  bool is_finite() const { return !alphabet.empty(); }

  static VariableSpec continuous(std::size_t dim = 1);
  static VariableSpec finite(std::vector<double> scalar_values);
};

/// f(x_alpha, z) = -1/2 w' J w + h' w with w = [x_alpha ; z].
struct QuadraticForm {
  Eigen::MatrixXd j;
  Eigen::VectorXd h;
};

/// Inputs to a factor's local solve (one factor, one iteration).
struct LocalProblem {
  Variant variant = Variant::sum_product;
  double u = 1.0;
  std::vector<const VariableSpec*> strong_vars;  // alpha(i), in handler slot order
  std::vector<Message> incoming;                 // Delta_{i<-r}, same order
  // Quadratic z penalty -1/2 ||z - p_hat||^2_{qp}; unused when z_dim() == 0.
  Eigen::VectorXd p_hat;
  Eigen::MatrixXd qp;
};

/// Result of a local solve.
///  - `outgoing[s]` is Delta_{i->j} for the strong neighbor in slot s.
///  - `z0` is the joint maximizer (max-sum) or posterior mean (sum-product) of z.
///  - `z_cov` is u*var(z) (sum-product) or (D^z)^{-1} (max-sum); `dz` holds
///    D^z for max-sum and is empty otherwise.
struct LocalSolution {
  std::vector<Message> outgoing;
  Eigen::VectorXd z0;
  Eigen::MatrixXd z_cov;
  Eigen::MatrixXd dz;
};

/// Local evaluation contract for a factor f_i(x_alpha(i), z_i).
class FactorHandler {
 public:
  virtual ~FactorHandler() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t strong_degree() const = 0;
  virtual std::size_t z_dim() const = 0;
  /// Dimensions of the strong neighbors, slot order.
  virtual std::vector<std::size_t> strong_dims() const = 0;

  virtual double evaluate(std::span<const Eigen::VectorXd> x_alpha,
                          const Eigen::VectorXd& z) const = 0;

  virtual bool supports(Variant) const { return true; }

  /// Max/integrate f_i plus incoming messages plus the z penalty.
  virtual LocalSolution solve(const LocalProblem& problem) const = 0;

  /// Exact quadratic form, for Gaussian factors only.
  virtual std::optional<QuadraticForm> quadratic_form() const { return std::nullopt; }

  /// Handler for f'(x_alpha, z') = f(x_alpha, a * x_slot + z'). The default
  /// wrapper supports evaluation only.
  virtual std::shared_ptr<const FactorHandler> absorb_linear_term(
      std::shared_ptr<const FactorHandler> self, std::size_t slot,
      const Eigen::MatrixXd& a) const;

 protected:
  void check_problem(const LocalProblem& problem) const;
};

using FactorHandlerPtr = std::shared_ptr<const FactorHandler>;

}  // namespace hgamp
