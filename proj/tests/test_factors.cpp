#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "hgamp/factors.hpp"
#include "hgamp/scalar_channels.hpp"

using namespace hgamp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

// log of the trapezoid integral of exp(g) over [lo, hi]
double log_trapezoid(const std::function<double(double)>& g, double lo, double hi, int n = 200000) {
  const double h = (hi - lo) / n;
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> v(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    v[static_cast<std::size_t>(k)] = g(lo + k * h);
    top = std::max(top, v[static_cast<std::size_t>(k)]);
  }
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) acc += (k == 0 || k == n ? 0.5 : 1.0) * std::exp(v[static_cast<std::size_t>(k)] - top);
  return top + std::log(acc * h);
}

// max of g over a fine grid refined by golden section
double grid_max(const std::function<double(double)>& g, double lo, double hi, double* arg = nullptr) {
  const int n = 20000;
  double best = -1e300, bx = lo;
  for (int k = 0; k <= n; ++k) {
    const double x = lo + (hi - lo) * k / n;
    if (g(x) > best) best = g(x), bx = x;
  }
  double a = bx - (hi - lo) / n, b = bx + (hi - lo) / n;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (g(c) > g(d)) b = d;
    else a = c;
  }
  if (arg) *arg = 0.5 * (a + b);
  return g(0.5 * (a + b));
}

double spread(const VectorXd& a, const VectorXd& b) {
  const VectorXd d = a - b;
  return d.maxCoeff() - d.minCoeff();
}

}  // namespace

TEST_CASE("Gaussian factor message equals direct integration over z") {
  // f(x, z) = -1/2 w'Jw + h'w on w = (x, z), one strong neighbor
  MatrixXd j(2, 2);
  j << 1.3, 0.4, 0.4, 0.9;
  VectorXd h(2);
  h << 0.2, -0.5;
  const GaussianFactor f({1}, 1, j, h);
  const VariableSpec var = VariableSpec::continuous(1);
  LocalProblem p;
  p.variant = Variant::sum_product;
  p.u = 1.0;
  p.strong_vars = {&var};
  p.incoming = {ContinuousMessage::flat(1)};
  p.p_hat = VectorXd::Constant(1, 0.3);
  p.qp = scalar(0.7);
  const auto sol = f.solve(p);
  const auto& msg = std::get<ContinuousMessage>(sol.outgoing[0]);

  auto h_fn = [&](double x, double z) {
    VectorXd w(2);
    w << x, z;
    return -0.5 * w.dot(j * w) + h.dot(w) - 0.5 * (z - 0.3) * (z - 0.3) / 0.7;
  };
  const double ref0 = log_trapezoid([&](double z) { return h_fn(0.0, z); }, -30, 30);
  for (double x : {-2.0, -0.5, 1.0, 2.5}) {
    const double ref = log_trapezoid([&](double z) { return h_fn(x, z); }, -30, 30) - ref0;
    CHECK(msg.evaluate(VectorXd::Constant(1, x)) - msg.evaluate(VectorXd::Zero(1)) == doctest::Approx(ref).epsilon(1e-9));
  }
  // the z statistics under the joint with a flat message on x
  const double prec_z = 0.9 + 1.0 / 0.7 - 0.4 * 0.4 / 1.3;
  CHECK(sol.z_cov(0, 0) == doctest::Approx(1.0 / prec_z).epsilon(1e-12));
}

TEST_CASE("AWGN output factor matches the closed-form denoiser") {
  const AwgnOutputFactor f(1.7, AwgnChannel{0.3});
  LocalProblem p;
  p.p_hat = VectorXd::Constant(1, -0.2);
  p.qp = scalar(0.9);
  for (auto variant : {Variant::sum_product, Variant::max_sum}) {
    p.variant = variant;
    const auto sol = f.solve(p);
    const auto ref = awgn_output_denoise(-0.2, 0.9, 1.7, AwgnChannel{0.3});
    CHECK(sol.z0(0) == ref.mean);
    CHECK(sol.z_cov(0, 0) == ref.var);
    CHECK(sol.outgoing.empty());
  }
  const auto q = f.quadratic_form();
  REQUIRE(q.has_value());
  CHECK(q->j(0, 0) == doctest::Approx(1.0 / 0.3));
  CHECK(q->h(0) == doctest::Approx(1.7 / 0.3));
}

TEST_CASE("enumerated factor: two binary neighbors and a scalar z") {
  const std::vector<std::vector<double>> alph{{0.0, 1.0}, {-1.0, 1.0}};
  const double table[4] = {0.3, -0.8, 1.1, 0.2};
  auto f = [&](std::span<const double> x, double z) {
    const int idx = (x[0] == 1.0 ? 1 : 0) + (x[1] == 1.0 ? 2 : 0);
    return table[idx] + 0.4 * std::sin(1.2 * z) + x[1] * 0.5 * z - 0.2 * z * z;
  };
  const EnumeratedFactor fac(alph, 1, f);
  const auto v0 = VariableSpec::finite(alph[0]);
  const auto v1 = VariableSpec::finite(alph[1]);
  VectorXd in1(2);
  in1 << 0.25, -0.6;
  LocalProblem p;
  p.strong_vars = {&v0, &v1};
  p.incoming = {TableMessage{VectorXd::Zero(2)}, TableMessage{in1}};
  p.p_hat = VectorXd::Constant(1, 0.4);
  p.qp = scalar(0.8);
  auto h = [&](double a, double b, double z) {
    const double xs[2] = {a, b};
    return f(xs, z) - 0.5 * (z - 0.4) * (z - 0.4) / 0.8;
  };

  SUBCASE("sum-product with u = 2") {
    const double u = 2.0;
    p.variant = Variant::sum_product;
    p.u = u;
    const auto sol = fac.solve(p);
    VectorXd ref(2);
    for (int a = 0; a < 2; ++a) {
      double acc = 0.0;
      for (int b = 0; b < 2; ++b) {
        const double lz = log_trapezoid([&](double z) { return u * h(alph[0][static_cast<std::size_t>(a)], alph[1][static_cast<std::size_t>(b)], z); }, -25, 25);
        acc += std::exp(u * in1(b) + lz);
      }
      ref(a) = std::log(acc) / u;
    }
    CHECK(spread(std::get<TableMessage>(sol.outgoing[0]).values, ref) < 1e-9);

    // z mean and u * var(z) over the joint, by the same brute force
    double m0 = 0, m1 = 0, m2 = 0;
    const int n = 200000;
    const double lo = -25, hi = 25, dz = (hi - lo) / n;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int k = 0; k <= n; ++k) {
          const double z = lo + k * dz;
          const double w = std::exp(u * (h(alph[0][static_cast<std::size_t>(a)], alph[1][static_cast<std::size_t>(b)], z) + in1(b)));
          m0 += w, m1 += w * z, m2 += w * z * z;
        }
    const double mean = m1 / m0;
    CHECK(sol.z0(0) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(sol.z_cov(0, 0) == doctest::Approx(u * (m2 / m0 - mean * mean)).epsilon(1e-8));
  }

  SUBCASE("max-sum") {
    p.variant = Variant::max_sum;
    p.u = 1.0;
    const auto sol = fac.solve(p);
    VectorXd ref(2);
    double best = -1e300, best_z = 0.0;
    for (int a = 0; a < 2; ++a) {
      ref(a) = -1e300;
      for (int b = 0; b < 2; ++b) {
        double z_star;
        const double v = grid_max([&](double z) { return h(alph[0][static_cast<std::size_t>(a)], alph[1][static_cast<std::size_t>(b)], z); }, -25, 25, &z_star) + in1(b);
        ref(a) = std::max(ref(a), v);
        if (v > best) best = v, best_z = z_star;
      }
    }
    CHECK(spread(std::get<TableMessage>(sol.outgoing[0]).values, ref) < 1e-9);
    CHECK(sol.z0(0) == doctest::Approx(best_z).epsilon(1e-6));
    REQUIRE(sol.dz.size() == 1);
    CHECK(sol.z_cov(0, 0) * sol.dz(0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("enumerated factor enforces its enumeration cap") {
  std::vector<std::vector<double>> alph(12, {0.0, 1.0});
  const EnumeratedFactor fac(alph, 0, [](std::span<const double>, double) { return 0.0; },
                             kInfiniteVariance, 1000);
  std::vector<VariableSpec> vars(12, VariableSpec::finite({0.0, 1.0}));
  LocalProblem p;
  for (auto& v : vars) {
    p.strong_vars.push_back(&v);
    p.incoming.push_back(TableMessage{VectorXd::Zero(2)});
  }
  CHECK_THROWS_AS(fac.solve(p), std::length_error);
}

TEST_CASE("local solves reject mismatched inputs") {
  const GaussianFactor f({1}, 1, MatrixXd::Identity(2, 2), VectorXd::Zero(2));
  const auto v2 = VariableSpec::continuous(2);
  LocalProblem p;
  p.strong_vars = {&v2};
  p.incoming = {ContinuousMessage::flat(2)};
  p.p_hat = VectorXd::Zero(1);
  p.qp = scalar(1.0);
  CHECK_THROWS_AS(f.solve(p), std::invalid_argument);

  const auto v1 = VariableSpec::continuous(1);
  p.strong_vars = {&v1};
  p.incoming = {ContinuousMessage::flat(1)};
  p.p_hat = VectorXd::Zero(2);
  CHECK_THROWS_AS(f.solve(p), std::invalid_argument);

  p.p_hat = VectorXd::Zero(1);
  p.strong_vars.clear();
  p.incoming.clear();
  CHECK_THROWS_AS(f.solve(p), std::invalid_argument);
}

TEST_CASE("spike-slab prior factor is sum-product only") {
  const SpikeSlabPriorFactor f(0.2, SpikeSlabPrior{});
  CHECK(f.supports(Variant::sum_product));
  CHECK_FALSE(f.supports(Variant::max_sum));
  const VectorXd zero = VectorXd::Zero(1);
  const std::vector<VectorXd> x0{zero};
  CHECK(f.evaluate(x0, VectorXd()) == doctest::Approx(std::log(0.8)));
  const auto v = VariableSpec::continuous(1);
  LocalProblem p;
  p.variant = Variant::max_sum;
  p.strong_vars = {&v};
  p.incoming = {ContinuousMessage::flat(1)};
  CHECK_THROWS_AS(f.solve(p), std::invalid_argument);
}

TEST_CASE("marginalize_quadratic: Schur complement and singular input") {
  MatrixXd m(3, 3);
  m << 2.0, 0.5, 0.1, 0.5, 1.5, -0.3, 0.1, -0.3, 1.0;
  VectorXd b(3);
  b << 0.4, -0.2, 0.9;
  const auto q = marginalize_quadratic(m, b, 0, 1);
  const MatrixXd mrr = m.bottomRightCorner(2, 2);
  const double prec = m(0, 0) - (m.block(0, 1, 1, 2) * mrr.inverse() * m.block(1, 0, 2, 1))(0, 0);
  const double eta = b(0) - (m.block(0, 1, 1, 2) * mrr.inverse() * b.tail(2))(0);
  CHECK(q.precision(0, 0) == doctest::Approx(prec).epsilon(1e-13));
  CHECK(q.eta(0) == doctest::Approx(eta).epsilon(1e-13));

  MatrixXd s = MatrixXd::Zero(3, 3);
  s(0, 0) = 1.0;
  CHECK_THROWS_AS(marginalize_quadratic(s, b, 0, 1), std::domain_error);
  CHECK_NOTHROW(marginalize_quadratic(s, b, 0, 1, true));
}

TEST_CASE("smooth scalar prior factor: both variants agree with direct computation") {
  // log f(x) = -x^4/4 - x^2/2 is strictly log-concave
  auto lf = [](double x) { return -0.25 * x * x * x * x - 0.5 * x * x; };
  auto g = [](double x) { return -x * x * x - x; };
  auto hs = [](double x) { return -3.0 * x * x - 1.0; };
  const SmoothScalarPriorFactor f(lf, g, hs);
  const auto v = VariableSpec::continuous(1);
  LocalProblem p;
  p.strong_vars = {&v};
  p.incoming = {ContinuousMessage::gaussian(VectorXd::Constant(1, 1.2), scalar(0.5))};
  const auto pen = [](double x) { return -0.5 * (x - 1.2) * (x - 1.2) / 0.5; };
  // the factor's own message is log f; what we can observe is the combine
  // with a Gaussian through the density term
  p.variant = Variant::max_sum;
  const auto sol = f.solve(p);
  const auto& msg = std::get<ContinuousMessage>(sol.outgoing[0]);
  for (double x : {-1.0, 0.3, 2.0})
    CHECK(msg.evaluate(VectorXd::Constant(1, x)) - msg.evaluate(VectorXd::Zero(1)) ==
          doctest::Approx(lf(x) - lf(0.0)).epsilon(1e-12));
  REQUIRE(msg.terms.size() == 1);
  const GaussianEvidence ev{VectorXd::Constant(1, 1.2), scalar(0.5), false};
  const auto ms = msg.terms[0]->combine(ev, Variant::max_sum, 1.0);
  double arg;
  grid_max([&](double x) { return lf(x) + pen(x); }, -5, 5, &arg);
  CHECK(ms.mean(0) == doctest::Approx(arg).epsilon(1e-7));
  const auto sp = msg.terms[0]->combine(ev, Variant::sum_product, 1.0);
  double m0 = 0, m1 = 0, m2 = 0;
  for (int k = 0; k <= 200000; ++k) {
    const double x = -10 + 20.0 * k / 200000;
    const double w = std::exp(lf(x) + pen(x));
    m0 += w, m1 += w * x, m2 += w * x * x;
  }
  CHECK(sp.mean(0) == doctest::Approx(m1 / m0).epsilon(1e-9));
  REQUIRE(sp.cov.has_value());
  CHECK((*sp.cov)(0, 0) == doctest::Approx(m2 / m0 - (m1 / m0) * (m1 / m0)).epsilon(1e-8));
}
