#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "hgamp/lemmas.hpp"

using namespace hgamp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SmoothConcave quadratic(const MatrixXd& p, const VectorXd& b) {
  SmoothConcave h;
  h.dim = static_cast<std::size_t>(b.size());
  h.value = [=](const VectorXd& w) { return -0.5 * w.dot(p * w) + b.dot(w); };
  h.grad = [=](const VectorXd& w) -> VectorXd { return -p * w + b; };
  h.hess = [=](const VectorXd&) -> MatrixXd { return -p; };
  return h;
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

double gk(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

}  // namespace

TEST_CASE("quadratic H0: argmax in closed form, derivatives match") {
  const MatrixXd p = (MatrixXd(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
  const VectorXd b = vec({0.3, -0.7});
  const MatrixXd qv = (MatrixXd(2, 2) << 0.8, 0.2, 0.2, 0.5).finished();
  const VectorXd v = vec({1.0, -2.0});
  const auto h = quadratic(p, b);
  const MatrixXd qi = qv.inverse();
  const VectorXd expected = (p + qi).ldlt().solve(b + qi * v);
  CHECK((lemma1_argmax(h, qi, v) - expected).cwiseAbs().maxCoeff() < 1e-10);
  const auto rep = lemma1_check(h, qv, v);
  CHECK(rep.passed());
  CHECK(rep.max_error() < 1e-5);
}

TEST_CASE("non-quadratic scalar H0") {
  SmoothConcave h;
  h.dim = 1;
  h.value = [](const VectorXd& w) { return -std::cosh(w(0)) + 0.4 * w(0); };
  h.grad = [](const VectorXd& w) { return VectorXd::Constant(1, -std::sinh(w(0)) + 0.4); };
  h.hess = [](const VectorXd& w) { return MatrixXd::Constant(1, 1, -std::cosh(w(0))); };
  for (double v : {-2.0, 0.0, 0.7, 3.0}) {
    const auto rep = lemma1_check(h, MatrixXd::Constant(1, 1, 0.6), VectorXd::Constant(1, v));
    CHECK(rep.max_error() <= 1e-4);
  }
}

TEST_CASE("random lemma1 instances pass") {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 20; ++k) {
    const auto inst = random_lemma1_instance(rng);
    CHECK(lemma1_check(inst.h0, inst.qv, inst.v).passed());
  }
}

TEST_CASE("grid moments of a Gaussian are exact") {
  const double mu = 0.4, s = 0.7, q = 0.3, v = -0.5;
  const auto g = gaussian_mixture_density(0.5, VectorXd::Constant(1, mu), VectorXd::Constant(1, s),
                                          VectorXd::Constant(1, mu), VectorXd::Constant(1, s));
  for (double u : {1.0, 3.0}) {
    const auto mom = lemma2_moments(g, MatrixXd::Constant(1, 1, q), u, VectorXd::Constant(1, v));
    const double prec = 1.0 / (s * s) + 1.0 / q;
    const double mean = (mu / (s * s) + v / q) / prec;
    const double log_z = u * (-std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi)) -
                         0.5 * u * (mu - v) * (mu - v) / (s * s + q) +
                         0.5 * std::log(2.0 * std::numbers::pi / (u * prec));
    CHECK(mom.mean(0) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(mom.var(0, 0) == doctest::Approx(1.0 / (u * prec)).epsilon(1e-9));
    CHECK(mom.log_z == doctest::Approx(log_z).epsilon(1e-9));
  }
}

TEST_CASE("grid moments of a bimodal mixture") {
  const VectorXd m1 = VectorXd::Constant(1, -1.5), m2 = VectorXd::Constant(1, 2.0);
  const VectorXd s1 = VectorXd::Constant(1, 0.4), s2 = VectorXd::Constant(1, 0.9);
  const auto g = gaussian_mixture_density(0.3, m1, s1, m2, s2);
  const double q = 1.2, v = 0.2;
  for (double u : {1.0, 4.0}) {
    auto integrand = [&](double w, int power) {
      const double val = u * (g.log_h0(VectorXd::Constant(1, w)) - 0.5 * (w - v) * (w - v) / q);
      return std::pow(w, power) * std::exp(val);
    };
    const double z = gk([&](double w) { return integrand(w, 0); }, -15, 15);
    const double e1 = gk([&](double w) { return integrand(w, 1); }, -15, 15) / z;
    const double e2 = gk([&](double w) { return integrand(w, 2); }, -15, 15) / z;
    const auto mom = lemma2_moments(g, MatrixXd::Constant(1, 1, q), u, VectorXd::Constant(1, v));
    CHECK(mom.mean(0) == doctest::Approx(e1).epsilon(1e-8));
    CHECK(mom.var(0, 0) == doctest::Approx(e2 - e1 * e1).epsilon(1e-8));
    CHECK(mom.log_z == doctest::Approx(std::log(z)).epsilon(1e-8));
    CHECK(lemma2_check(g, MatrixXd::Constant(1, 1, q), u, VectorXd::Constant(1, v)).passed());
  }
}

TEST_CASE("two-dimensional mixture check") {
  const auto g = gaussian_mixture_density(0.6, vec({0.0, 1.0}), vec({0.8, 0.5}), vec({1.5, -0.5}),
                                          vec({0.6, 0.7}));
  const MatrixXd qv = (MatrixXd(2, 2) << 0.9, 0.3, 0.3, 0.7).finished();
  CHECK(lemma2_check(g, qv, 1.0, vec({0.4, 0.2})).passed());
}

TEST_CASE("random lemma2 instances pass") {
  std::mt19937_64 rng(32);
  for (int k = 0; k < 10; ++k) {
    const auto inst = random_lemma2_instance(rng);
    CHECK(lemma2_check(inst.h0, inst.qv, inst.u, inst.v).passed());
  }
}

TEST_CASE("argument errors") {
  const auto h = quadratic(MatrixXd::Identity(1, 1), VectorXd::Zero(1));
  CHECK_THROWS_AS(lemma1_check(h, MatrixXd::Constant(1, 1, -1.0), VectorXd::Zero(1)), std::invalid_argument);
  CHECK_THROWS_AS(lemma1_check(h, MatrixXd::Identity(2, 2), VectorXd::Zero(1)), std::invalid_argument);
  const auto g = gaussian_mixture_density(0.5, VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Zero(1),
                                          VectorXd::Ones(1));
  CHECK_THROWS_AS(lemma2_moments(g, MatrixXd::Identity(1, 1), 0.0, VectorXd::Zero(1)), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_mixture_density(1.5, VectorXd::Zero(1), VectorXd::Ones(1), VectorXd::Zero(1),
                                           VectorXd::Ones(1)),
                  std::invalid_argument);
  // a feature far narrower than the window needs too many grid points
  const auto spike = gaussian_mixture_density(0.5, vec({0.0, 0.0}), vec({1e-3, 1e-3}), vec({0.0, 0.0}),
                                              vec({10.0, 10.0}));
  CHECK_THROWS_AS(lemma2_moments(spike, MatrixXd::Identity(2, 2), 1.0, vec({0.0, 0.0})), std::invalid_argument);
  CHECK(relative_error(MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, 1e-5)) == doctest::Approx(1e-3));
}
