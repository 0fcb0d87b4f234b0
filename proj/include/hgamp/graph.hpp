#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgamp/factor.hpp"

namespace hgamp {

struct BlockVector {
  std::vector<Eigen::VectorXd> blocks;

  std::size_t total_dim() const;
  Eigen::VectorXd flatten() const;
};

/// Sparse map of dense blocks A_ij, i over factors (z blocks), j over
/// variables. Blocks are stored as given; validate_graph reports shape
/// problems and dangling indices.
class LinearMixing {
 public:
  LinearMixing() = default;
  LinearMixing(std::vector<std::size_t> z_dims, std::vector<std::size_t> x_dims);

  /// Scalar blocks z = A x with one row per factor.
  static LinearMixing dense_scalar(const Eigen::MatrixXd& a);

  std::size_t rows() const { return z_dims_.size(); }
  std::size_t cols() const { return x_dims_.size(); }
  std::size_t z_dim(std::size_t i) const { return z_dims_.at(i); }
  std::size_t x_dim(std::size_t j) const { return x_dims_.at(j); }
  const std::vector<std::size_t>& z_dims() const { return z_dims_; }
  const std::vector<std::size_t>& x_dims() const { return x_dims_; }

  void set_block(std::size_t i, std::size_t j, Eigen::MatrixXd block);
  void remove_block(std::size_t i, std::size_t j);
  const Eigen::MatrixXd* block(std::size_t i, std::size_t j) const;
  const std::map<std::size_t, Eigen::MatrixXd>& row(std::size_t i) const { return rows_.at(i); }
  /// beta(i), ascending.
  std::vector<std::size_t> weak(std::size_t i) const;

  /// True when every x block is 1-dimensional, every z block is 0- or
  /// 1-dimensional and every stored block is 1x1.
  bool is_scalar() const;

  /// Dense matrix over the rows with z_dim == 1, in factor order; `row_factor`
  /// receives the factor index of each row. Requires is_scalar().
  Eigen::MatrixXd scalar_matrix(std::vector<std::size_t>* row_factor = nullptr) const;

 private:
  std::vector<std::size_t> z_dims_;
  std::vector<std::size_t> x_dims_;
  std::vector<std::map<std::size_t, Eigen::MatrixXd>> rows_;
};

struct FactorNode {
  FactorHandlerPtr handler;
  std::vector<std::size_t> strong;  // alpha(i), in handler slot order
};

/// Derived variable-side adjacency.
struct Adjacency {
  std::vector<std::vector<std::size_t>> strong;  // alpha(j)
  std::vector<std::vector<std::size_t>> weak;    // beta(j)
};

struct FactorGraph {
  std::vector<VariableSpec> variables;
  std::vector<FactorNode> factors;
  LinearMixing mixing;

  std::size_t num_variables() const { return variables.size(); }
  std::size_t num_factors() const { return factors.size(); }

  /// Out-of-range indices are skipped; validate_graph reports them.
  Adjacency adjacency() const;

  /// F(x, Ax) = sum_i f_i(x_alpha(i), z_i).
  double objective(std::span<const Eigen::VectorXd> x) const;
};

struct ValidationIssue {
  enum class Kind { overlap, shape_mismatch, dangling_index, handler_mismatch };
  Kind kind;
  std::size_t factor = 0;
  std::size_t variable = 0;
  std::string message;
};

const char* to_string(ValidationIssue::Kind kind);

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  bool has(ValidationIssue::Kind kind) const;
};

ValidationReport validate_graph(const FactorGraph& graph);

/// Moves the overlapping edge (factor, variable) out of the weak pattern: the
/// handler is replaced by f'(x, z') = f(x, A_ij x_j + z'). Throws
/// std::invalid_argument if the variable is not both a strong and a weak
/// neighbor of the factor.
FactorGraph normalize_overlap(const FactorGraph& graph, std::size_t factor, std::size_t variable);

/// z_i = sum_{j in beta(i)} A_ij x_j.
BlockVector apply_mixing(const LinearMixing& mixing, const BlockVector& x);

}  // namespace hgamp
