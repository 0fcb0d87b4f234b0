#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hgamp/factor.hpp"
#include "hgamp/scalar_channels.hpp"

// Built-in factor handlers.
namespace hgamp {

/// Keeps coordinates [start, start + len) of the quadratic -1/2 w'Mw + b'w
/// and maximizes out the rest (for a Gaussian this is also the log-marginal up
/// to a constant). Throws std::domain_error if the eliminated block is not
/// positive definite, unless `allow_singular` is set, in which case the
/// minimum-norm solve is used (flat directions drop out of the result).
struct QuadraticMarginal {
  Eigen::VectorXd eta;
  Eigen::MatrixXd precision;
};
QuadraticMarginal marginalize_quadratic(const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                                        Eigen::Index start, Eigen::Index len,
                                        bool allow_singular = false);

/// f(x_alpha, z) = -1/2 w'Jw + h'w, w = [x_alpha ; z].
class GaussianFactor final : public FactorHandler {
 public:
  GaussianFactor(std::vector<std::size_t> strong_dims, std::size_t z_dim, Eigen::MatrixXd j,
                 Eigen::VectorXd h);

  std::string kind() const override { return "gaussian"; }
  std::size_t strong_degree() const override { return dims_.size(); }
  std::size_t z_dim() const override { return z_dim_; }
  std::vector<std::size_t> strong_dims() const override { return dims_; }
  double evaluate(std::span<const Eigen::VectorXd> x_alpha,
                  const Eigen::VectorXd& z) const override;
  LocalSolution solve(const LocalProblem& problem) const override;
  std::optional<QuadraticForm> quadratic_form() const override { return QuadraticForm{j_, h_}; }
  std::shared_ptr<const FactorHandler> absorb_linear_term(
      std::shared_ptr<const FactorHandler> self, std::size_t slot,
      const Eigen::MatrixXd& a) const override;

 private:
  std::vector<std::size_t> dims_;
  std::size_t z_dim_;
  Eigen::MatrixXd j_;
  Eigen::VectorXd h_;
};

/// log N(x; mean, cov) up to a constant, on one strong neighbor.
FactorHandlerPtr gaussian_prior(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);
/// log N(y; z, noise_cov) up to a constant, no strong neighbors.
FactorHandlerPtr gaussian_output(const Eigen::VectorXd& y, const Eigen::MatrixXd& noise_cov);

/// Scalar AWGN output y = z + w with the closed-form posterior.
class AwgnOutputFactor final : public FactorHandler {
 public:
  AwgnOutputFactor(double y, AwgnChannel channel);

  std::string kind() const override { return "awgn_output"; }
  std::size_t strong_degree() const override { return 0; }
  std::size_t z_dim() const override { return 1; }
  std::vector<std::size_t> strong_dims() const override { return {}; }
  double evaluate(std::span<const Eigen::VectorXd> x_alpha,
                  const Eigen::VectorXd& z) const override;
  LocalSolution solve(const LocalProblem& problem) const override;
  std::optional<QuadraticForm> quadratic_form() const override;
  std::shared_ptr<const FactorHandler> absorb_linear_term(
      std::shared_ptr<const FactorHandler> self, std::size_t slot,
      const Eigen::MatrixXd& a) const override;

  double y() const { return y_; }
  const AwgnChannel& channel() const { return channel_; }

 private:
  double y_;
  AwgnChannel channel_;
};

/// Spike-slab prior on a scalar variable, sum-product with u = 1 only.
/// evaluate() reports the point mass at 0 as log(1 - rho).
class SpikeSlabPriorFactor final : public FactorHandler {
 public:
  SpikeSlabPriorFactor(double rho, SpikeSlabPrior prior);

  std::string kind() const override { return "spike_slab_prior"; }
  std::size_t strong_degree() const override { return 1; }
  std::size_t z_dim() const override { return 0; }
  std::vector<std::size_t> strong_dims() const override { return {1}; }
  double evaluate(std::span<const Eigen::VectorXd> x_alpha,
                  const Eigen::VectorXd& z) const override;
  bool supports(Variant v) const override { return v == Variant::sum_product; }
  LocalSolution solve(const LocalProblem& problem) const override;

  double rho() const { return rho_; }
  const SpikeSlabPrior& prior() const { return prior_; }

 private:
  double rho_;
  SpikeSlabPrior prior_;
  std::shared_ptr<const LogDensity> term_;
};

/// Smooth, strictly log-concave scalar prior given by its log density and
/// the first two derivatives. Both variants, any u.
class SmoothScalarPriorFactor final : public FactorHandler {
 public:
  using Fn = std::function<double(double)>;
  SmoothScalarPriorFactor(Fn log_f, Fn grad, Fn hess);

  std::string kind() const override { return "smooth_scalar_prior"; }
  std::size_t strong_degree() const override { return 1; }
  std::size_t z_dim() const override { return 0; }
  std::vector<std::size_t> strong_dims() const override { return {1}; }
  double evaluate(std::span<const Eigen::VectorXd> x_alpha,
                  const Eigen::VectorXd& z) const override;
  LocalSolution solve(const LocalProblem& problem) const override;

 private:
  std::shared_ptr<const LogDensity> term_;
};

/// Factor over finite-alphabet scalar neighbors and an optional scalar z,
/// solved by enumeration (and 1-D quadrature or line search over z).
class EnumeratedFactor final : public FactorHandler {
 public:
  using Fn = std::function<double(std::span<const double> x, double z)>;

  /// `z_feature_width` bounds the narrowest feature of f in z; it sets the
  /// quadrature resolution.
  EnumeratedFactor(std::vector<std::vector<double>> alphabets, std::size_t z_dim, Fn f,
                   double z_feature_width = kInfiniteVariance,
                   std::size_t enumeration_cap = std::size_t{1} << 20);

  std::string kind() const override { return "enumerated"; }
  std::size_t strong_degree() const override { return alphabets_.size(); }
  std::size_t z_dim() const override { return z_dim_; }
  std::vector<std::size_t> strong_dims() const override;
  double evaluate(std::span<const Eigen::VectorXd> x_alpha,
                  const Eigen::VectorXd& z) const override;
  LocalSolution solve(const LocalProblem& problem) const override;
  std::shared_ptr<const FactorHandler> absorb_linear_term(
      std::shared_ptr<const FactorHandler> self, std::size_t slot,
      const Eigen::MatrixXd& a) const override;

  const std::vector<std::vector<double>>& alphabets() const { return alphabets_; }
  double value(std::span<const double> x, double z) const { return f_(x, z); }

 private:
  std::vector<std::vector<double>> alphabets_;
  std::size_t z_dim_;
  Fn f_;
  double z_width_;
  std::size_t cap_;
};

}  // namespace hgamp
