#pragma once

#include <functional>
#include <optional>
#include <vector>

// Numerical integration helpers and the posterior-moment oracle that checks
// the closed-form scalar denoisers.
namespace hgamp::quadrature {

/// Adaptive Gauss-Kronrod on a finite interval; the tolerance is relative to
/// the integral of abs(f).
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-12);

/// Integrates exp(log_f) over the real line, returning the log of the
/// integral. The integrand is located by a grid scan over [lo, hi] with
/// spacing `width / 4` and then integrated piecewise around its support, so
/// narrow peaks are never stepped over. `width` is the smallest feature size
/// expected in the integrand.
struct LogMoments {
  double log_mass = 0.0;  // log of the integral of exp(log_f)
  double mean = 0.0;
  double var = 0.0;
};
LogMoments log_moments(const std::function<double(double)>& log_f, double lo, double hi,
                       double width);

struct PointMass {
  double location = 0.0;
  double weight = 1.0;
};

struct ContinuousPart {
  double weight = 1.0;
  std::function<double(double)> log_density;
  double center = 0.0;  // rough location of the density's mass
  double scale = 1.0;   // rough spread
};

/// A scalar prior: a finite set of atoms plus at most one continuous part.
/// Weights need not be normalized.
struct PriorDensitySpec {
  std::vector<PointMass> atoms;
  std::optional<ContinuousPart> continuous;
};

struct PosteriorMoments {
  double mean = 0.0;
  double var = 0.0;
};

/// Posterior mean and variance of X given R = X + W, W ~ N(0, qr), by direct
/// integration of the prior against the Gaussian likelihood.
PosteriorMoments quadrature_posterior_oracle(const PriorDensitySpec& prior, double r, double qr);

}  // namespace hgamp::quadrature
