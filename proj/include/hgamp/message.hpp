#pragma once

#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace hgamp {

enum class Variant { max_sum, sum_product };

const char* to_string(Variant v);

/// Gaussian evidence on a continuous variable, the quadratic part of a
/// marginal-value function. `flat` means no quadratic information at all
/// (infinite covariance).
struct GaussianEvidence {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool flat = true;

  static GaussianEvidence flat_evidence(std::size_t dim);
};

/// What a non-Gaussian continuous term reports after being combined with a
/// Gaussian penalty: the mean/mode, and u*var (sum-product) or the inverse
/// negative Hessian (max-sum). `cov` may be empty for max-sum, in which case
/// the engine computes the curvature by finite differences.
struct DensitySummary {
  Eigen::VectorXd mean;
  std::optional<Eigen::MatrixXd> cov;
};

/// A non-Gaussian log-density term of a continuous message, e.g. a sparse
/// prior. Evaluation and the local combine with a Gaussian are delegated here.
class LogDensity {
 public:
  virtual ~LogDensity() = default;
  virtual std::size_t dim() const = 0;
  virtual double log_value(const Eigen::VectorXd& x) const = 0;
  /// Summarize the density proportional to exp(u * (log_value(x) + q(x))),
  /// where q is the quadratic penalty encoded by `evidence`.
  virtual DensitySummary combine(const GaussianEvidence& evidence, Variant variant,
                                 double u) const = 0;
};

/// Message over a finite alphabet, indexed like the variable's alphabet.
struct TableMessage {
  Eigen::VectorXd values;
};

/// Message over a continuous variable:
///   Delta(x) = eta' x - 1/2 x' precision x + sum_k terms[k](x)   (+ const)
struct ContinuousMessage {
  Eigen::VectorXd eta;
  Eigen::MatrixXd precision;
  std::vector<std::shared_ptr<const LogDensity>> terms;

  static ContinuousMessage flat(std::size_t dim);
  static ContinuousMessage gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
  bool is_gaussian() const { return terms.empty(); }
  bool is_flat() const;
  double evaluate(const Eigen::VectorXd& x) const;
};

using Message = std::variant<TableMessage, ContinuousMessage>;

/// a += b. Both must hold the same alternative and dimension.
void accumulate(Message& a, const Message& b);

/// Shift a table so its maximum is zero; no-op for continuous messages.
void normalize(Message& m);

/// Largest deviation between two tables after removing the best additive
/// constant (max - min of the difference, halved). Continuous messages compare
/// information vectors and precisions entrywise.
double distance_up_to_constant(const Message& a, const Message& b);

}  // namespace hgamp
