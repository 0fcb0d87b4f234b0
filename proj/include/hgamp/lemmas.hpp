#pragma once

#include <functional>
#include <random>
#include <string>

#include <Eigen/Dense>

// Numerical checks of the derivative identities behind the GAMP
// approximations:
//   max-sum:     G(v) = max_w H0(w) - 1/2 ||w - v||^2_{Qv}
//   sum-product: G(v) = (1/u) log Z(v), Z = integral of exp(u H)
// Each check compares the analytic derivative against finite differences.
namespace hgamp {

/// Strictly concave smooth function with derivatives.
struct SmoothConcave {
  std::size_t dim = 1;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess;
};

/// Log-density for the sum-product check (1-D or 2-D). `center`/`scale_max`
/// locate the mass and `scale_min` bounds the narrowest feature; they set the
/// integration grid.
struct GridDensity {
  std::size_t dim = 1;
  std::function<double(const Eigen::VectorXd&)> log_h0;
  Eigen::VectorXd center;
  double scale_min = 1.0;
  double scale_max = 1.0;
};

struct LemmaReport {
  double grad_error = 0.0;      // dG/dv
  double jacobian_error = 0.0;  // dw_hat/dv or dx_hat/dv
  double hessian_error = 0.0;   // d2G/dv2
  double tolerance = 0.0;

  double max_error() const;
  bool passed() const { return max_error() <= tolerance; }
};

/// Max norm of (a - b) over max(max norm of b, 1e-2).
double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

LemmaReport lemma1_check(const SmoothConcave& h0, const Eigen::MatrixXd& qv,
                         const Eigen::VectorXd& v, double tolerance = 1e-4);

LemmaReport lemma2_check(const GridDensity& h0, const Eigen::MatrixXd& qv, double u,
                         const Eigen::VectorXd& v, double tolerance = 1e-3);

/// Maximizer of H0(w) - 1/2 ||w - v||^2_{Qv} by damped Newton.
Eigen::VectorXd lemma1_argmax(const SmoothConcave& h0, const Eigen::MatrixXd& qv_inv,
                              const Eigen::VectorXd& v);

struct GridMoments {
  double log_z = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd var;
};
/// Moments of exp(u (log_h0(w) - 1/2 ||w - v||^2_{Qv})) on a uniform grid.
GridMoments lemma2_moments(const GridDensity& h0, const Eigen::MatrixXd& qv, double u,
                           const Eigen::VectorXd& v);

// Random instances for the batteries.
struct Lemma1Instance {
  SmoothConcave h0;
  Eigen::MatrixXd qv;
  Eigen::VectorXd v;
};
struct Lemma2Instance {
  GridDensity h0;
  Eigen::MatrixXd qv;
  Eigen::VectorXd v;
  double u = 1.0;
};
Lemma1Instance random_lemma1_instance(std::mt19937_64& rng);
Lemma2Instance random_lemma2_instance(std::mt19937_64& rng);

/// Two-component Gaussian mixture log-density; component 2 gets weight
/// 1 - weight1. Covariances diagonal.
GridDensity gaussian_mixture_density(double weight1, const Eigen::VectorXd& mean1,
                                     const Eigen::VectorXd& sd1, const Eigen::VectorXd& mean2,
                                     const Eigen::VectorXd& sd2);

}  // namespace hgamp
