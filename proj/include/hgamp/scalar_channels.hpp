#pragma once

#include <limits>

#include "hgamp/quadrature.hpp"

namespace hgamp {

/// Infinite-variance sentinel for Q^r before any weak-edge evidence exists.
inline constexpr double kInfiniteVariance = std::numeric_limits<double>::infinity();

/// Distribution of an active component: V ~ N(active_mean, active_var).
struct SpikeSlabPrior {
  double active_mean = 0.0;
  double active_var = 1.0;

  void validate() const;
};

struct AwgnChannel {
  double noise_var = 1.0;

  void validate() const;
};

struct ScalarEstimate {
  double mean = 0.0;
  double var = 0.0;
};

/// Posterior mean/variance of X ~ (1-rho) delta_0 + rho V given R = X + N(0, qr).
/// qr may be kInfiniteVariance, in which case the prior moments are returned.
ScalarEstimate bg_denoise(double r, double qr, double rho, const SpikeSlabPrior& prior);

/// Density of R = X + W, W ~ N(0, qr), with X distributed as above.
double pr_density(double r, double qr, double rho, const SpikeSlabPrior& prior);
double log_pr_density(double r, double qr, double rho, const SpikeSlabPrior& prior);

/// Posterior of z ~ N(p, qp) given y = z + w, w ~ N(0, noise_var).
ScalarEstimate awgn_output_denoise(double p, double qp, double y, const AwgnChannel& channel);

/// The spike-slab prior as a density spec for the quadrature oracle.
quadrature::PriorDensitySpec spike_slab_density_spec(double rho, const SpikeSlabPrior& prior);

}  // namespace hgamp
