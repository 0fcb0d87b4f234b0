#include "hgamp/scalar_channels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hgamp {
namespace {

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (d * d / var + std::log(2.0 * std::numbers::pi * var));
}

void check_rho(double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
}

}  // namespace

void SpikeSlabPrior::validate() const {
  if (!(active_var > 0.0) || !std::isfinite(active_mean)) {
    throw std::invalid_argument("SpikeSlabPrior: active_var must be > 0");
  }
}

void AwgnChannel::validate() const {
  if (!(noise_var > 0.0)) throw std::invalid_argument("AwgnChannel: noise_var must be > 0");
}

ScalarEstimate bg_denoise(double r, double qr, double rho, const SpikeSlabPrior& prior) {
  check_rho(rho);
  if (!(qr > 0.0)) throw std::invalid_argument("bg_denoise: qr must be > 0 or infinite");
  const double mu = prior.active_mean;
  const double sv = prior.active_var;
  if (rho == 0.0) return {0.0, 0.0};
  if (std::isinf(qr)) {
    const double mean = rho * mu;
    return {mean, rho * sv + rho * (1.0 - rho) * mu * mu};
  }

  // active-branch posterior
  const double m1 = (mu * qr + r * sv) / (sv + qr);
  const double v1 = sv * qr / (sv + qr);
  if (rho == 1.0) return {m1, v1};

  // posterior probability of the active branch, in the log domain
  const double l1 = std::log(rho) + log_normal_pdf(r, mu, sv + qr);
  const double l0 = std::log1p(-rho) + log_normal_pdf(r, 0.0, qr);
  const double pi = 1.0 / (1.0 + std::exp(l0 - l1));

  return {pi * m1, pi * v1 + pi * (1.0 - pi) * m1 * m1};
}

double log_pr_density(double r, double qr, double rho, const SpikeSlabPrior& prior) {
  check_rho(rho);
  if (!(qr > 0.0)) throw std::invalid_argument("pr_density: qr must be > 0");
  const double l0 = rho < 1.0 ? std::log1p(-rho) + log_normal_pdf(r, 0.0, qr)
                              : -std::numeric_limits<double>::infinity();
  const double l1 = rho > 0.0 ? std::log(rho) + log_normal_pdf(r, prior.active_mean,
                                                               prior.active_var + qr)
                              : -std::numeric_limits<double>::infinity();
  const double top = std::max(l0, l1);
  return top + std::log(std::exp(l0 - top) + std::exp(l1 - top));
}

double pr_density(double r, double qr, double rho, const SpikeSlabPrior& prior) {
  return std::exp(log_pr_density(r, qr, rho, prior));
}

ScalarEstimate awgn_output_denoise(double p, double qp, double y, const AwgnChannel& channel) {
  if (!(qp > 0.0)) throw std::invalid_argument("awgn_output_denoise: qp must be > 0");
  const double nv = channel.noise_var;
  if (std::isinf(nv)) return {p, qp};
  const double denom = qp + nv;
  return {(y * qp + p * nv) / denom, qp * nv / denom};
}

quadrature::PriorDensitySpec spike_slab_density_spec(double rho, const SpikeSlabPrior& prior) {
  check_rho(rho);
  quadrature::PriorDensitySpec spec;
  if (rho < 1.0) spec.atoms.push_back({0.0, 1.0 - rho});
  if (rho > 0.0) {
    const double mu = prior.active_mean;
    const double sv = prior.active_var;
    spec.continuous = quadrature::ContinuousPart{
        rho, [mu, sv](double x) { return log_normal_pdf(x, mu, sv); }, mu, std::sqrt(sv)};
  }
  return spec;
}

}  // namespace hgamp
