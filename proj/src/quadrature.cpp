#include "hgamp/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace hgamp::quadrature {
namespace {

constexpr double kNegligibleLog = -60.0;

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (d * d / var + std::log(2.0 * std::numbers::pi * var));
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b, double rel_tol) {
  if (!(b > a)) return 0.0;
  double err = 0.0;
  const double value =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 12, rel_tol, &err);
  if (!std::isfinite(value)) throw std::runtime_error("quadrature: non-finite integral");
  return value;
}

LogMoments log_moments(const std::function<double(double)>& log_f, double lo, double hi,
                       double width) {
  if (!(hi > lo) || !(width > 0.0)) throw std::invalid_argument("log_moments: bad interval");
  const double step = width / 4.0;
  const auto npts = static_cast<std::size_t>(std::ceil((hi - lo) / step)) + 1;
  if (npts > 2'000'000) throw std::invalid_argument("log_moments: integrand too narrow for window");

  double peak = -std::numeric_limits<double>::infinity();
  double peak_x = lo;
  std::vector<double> vals(npts);
  for (std::size_t k = 0; k < npts; ++k) {
    const double x = lo + static_cast<double>(k) * step;
    vals[k] = log_f(x);
    if (vals[k] > peak) {
      peak = vals[k];
      peak_x = x;
    }
  }
  if (!std::isfinite(peak)) throw std::runtime_error("log_moments: integrand vanishes on window");

  // support = grid span where the integrand is not negligible, padded by a cell
  std::size_t first = npts, last = 0;
  for (std::size_t k = 0; k < npts; ++k) {
    if (vals[k] - peak > kNegligibleLog) {
      first = std::min(first, k);
      last = std::max(last, k);
    }
  }
  const double a = std::max(lo, lo + (static_cast<double>(first) - 2.0) * step);
  const double b = std::min(hi, lo + (static_cast<double>(last) + 2.0) * step);

  const double seg = 2.0 * width;
  const auto nseg = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a) / seg)));
  const double h = (b - a) / static_cast<double>(nseg);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t s = 0; s < nseg; ++s) {
    const double sa = a + static_cast<double>(s) * h;
    const double sb = (s + 1 == nseg) ? b : sa + h;
    m0 += integrate([&](double x) { return std::exp(log_f(x) - peak); }, sa, sb, 1e-12);
    m1 += integrate([&](double x) { return (x - peak_x) * std::exp(log_f(x) - peak); }, sa, sb,
                    1e-12);
    m2 += integrate(
        [&](double x) {
          const double d = x - peak_x;
          return d * d * std::exp(log_f(x) - peak);
        },
        sa, sb, 1e-12);
  }
  if (!(m0 > 0.0)) throw std::runtime_error("log_moments: zero mass");
  LogMoments out;
  out.log_mass = peak + std::log(m0);
  const double c1 = m1 / m0;
  out.mean = peak_x + c1;
  out.var = std::max(0.0, m2 / m0 - c1 * c1);
  return out;
}

PosteriorMoments quadrature_posterior_oracle(const PriorDensitySpec& prior, double r, double qr) {
  if (!(qr > 0.0)) throw std::invalid_argument("quadrature_posterior_oracle: qr must be > 0");

  struct Component {
    double log_mass;
    double mean;
    double var;
  };
  std::vector<Component> comps;
  for (const auto& atom : prior.atoms) {
    if (atom.weight <= 0.0) continue;
    comps.push_back({std::log(atom.weight) + log_normal_pdf(r, atom.location, qr), atom.location,
                     0.0});
  }
  if (prior.continuous && prior.continuous->weight > 0.0) {
    const auto& c = *prior.continuous;
    const double sq = std::sqrt(qr);
    const double lo = std::min(c.center - 40.0 * c.scale, r - 40.0 * sq);
    const double hi = std::max(c.center + 40.0 * c.scale, r + 40.0 * sq);
    const double width = 1.0 / std::sqrt(1.0 / (c.scale * c.scale) + 1.0 / qr);
    const auto lm = log_moments(
        [&](double x) { return c.log_density(x) + log_normal_pdf(r, x, qr); }, lo, hi, width);
    comps.push_back({std::log(c.weight) + lm.log_mass, lm.mean, lm.var});
  }
  if (comps.empty()) throw std::invalid_argument("quadrature_posterior_oracle: empty prior");

  double top = -std::numeric_limits<double>::infinity();
  for (const auto& c : comps) top = std::max(top, c.log_mass);
  double z = 0.0, m1 = 0.0;
  for (const auto& c : comps) {
    const double w = std::exp(c.log_mass - top);
    z += w;
    m1 += w * c.mean;
  }
  const double mean = m1 / z;
  double var = 0.0;
  for (const auto& c : comps) {
    const double w = std::exp(c.log_mass - top) / z;
    const double d = c.mean - mean;
    var += w * (c.var + d * d);
  }
  return {mean, var};
}

}  // namespace hgamp::quadrature
