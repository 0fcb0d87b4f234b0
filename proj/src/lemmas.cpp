#include "hgamp/lemmas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace hgamp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd spd_inverse(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("lemma check: Qv must be SPD");
  return llt.solve(MatrixXd::Identity(m.rows(), m.cols()));
}

double log_add(double a, double b) {
  const double top = std::max(a, b);
  if (!std::isfinite(top)) return top;
  return top + std::log(std::exp(a - top) + std::exp(b - top));
}

MatrixXd random_spd(std::mt19937_64& rng, Index d, double lo) {
  std::normal_distribution<double> nd;
  MatrixXd b(d, d);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < d; ++c) b(r, c) = 0.6 * nd(rng);
  return b * b.transpose() + lo * MatrixXd::Identity(d, d);
}

}  // namespace

double LemmaReport::max_error() const {
  return std::max({grad_error, jacobian_error, hessian_error});
}

double relative_error(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("relative_error: shapes");
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-2);
}

VectorXd lemma1_argmax(const SmoothConcave& h0, const MatrixXd& qv_inv, const VectorXd& v) {
  auto h = [&](const VectorXd& w) { return h0.value(w) - 0.5 * (w - v).dot(qv_inv * (w - v)); };
  VectorXd w = v;
  for (int it = 0; it < 200; ++it) {
    const VectorXd g = h0.grad(w) - qv_inv * (w - v);
    const MatrixXd hs = h0.hess(w) - qv_inv;
    const VectorXd step = (-hs).llt().solve(g);
    double t = 1.0;
    const double f0 = h(w);
    while (t > 1e-10 && h(w + t * step) < f0 - 1e-14 * (1.0 + std::abs(f0))) t *= 0.5;
    w += t * step;
    if ((t * step).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + w.cwiseAbs().maxCoeff())) return w;
  }
  const VectorXd g = h0.grad(w) - qv_inv * (w - v);
  if (g.cwiseAbs().maxCoeff() > 1e-10) throw std::runtime_error("lemma1: inner maximization did not converge");
  return w;
}

LemmaReport lemma1_check(const SmoothConcave& h0, const MatrixXd& qv, const VectorXd& v,
                         double tolerance) {
  const auto d = static_cast<Index>(h0.dim);
  if (v.size() != d || qv.rows() != d || qv.cols() != d) throw std::invalid_argument("lemma1: shapes");
  const MatrixXd qi = spd_inverse(qv);
  auto w_of = [&](const VectorXd& vv) { return lemma1_argmax(h0, qi, vv); };
  auto g_of = [&](const VectorXd& vv) {
    const VectorXd w = w_of(vv);
    return h0.value(w) - 0.5 * (w - vv).dot(qi * (w - vv));
  };

  const VectorXd w = w_of(v);
  const MatrixXd dmat = h0.hess(w) - qi;  // d2H/dw2, negative definite
  const MatrixXd d_inv = dmat.inverse();
  const VectorXd grad = qi * (w - v);
  const MatrixXd jac = -d_inv * qi;
  const MatrixXd hess = -qi - qi * d_inv * qi;

  VectorXd fd_grad(d);
  MatrixXd fd_jac(d, d), fd_hess(d, d);
  for (Index a = 0; a < d; ++a) {
    const double h = 1e-4 * (1.0 + std::abs(v(a)));
    VectorXd vp = v, vm = v;
    vp(a) += h;
    vm(a) -= h;
    fd_grad(a) = (g_of(vp) - g_of(vm)) / (2.0 * h);
    fd_jac.col(a) = (w_of(vp) - w_of(vm)) / (2.0 * h);
  }
  const double g0 = g_of(v);
  for (Index a = 0; a < d; ++a) {
    for (Index b = a; b < d; ++b) {
      const double h = 1e-3;
      double val;
      if (a == b) {
        VectorXd vp = v, vm = v;
        vp(a) += h;
        vm(a) -= h;
        val = (g_of(vp) - 2.0 * g0 + g_of(vm)) / (h * h);
      } else {
        VectorXd pp = v, pm = v, mp = v, mm = v;
        pp(a) += h; pp(b) += h;
        pm(a) += h; pm(b) -= h;
        mp(a) -= h; mp(b) += h;
        mm(a) -= h; mm(b) -= h;
        val = (g_of(pp) - g_of(pm) - g_of(mp) + g_of(mm)) / (4.0 * h * h);
      }
      fd_hess(a, b) = fd_hess(b, a) = val;
    }
  }
  LemmaReport rep;
  rep.tolerance = tolerance;
  rep.grad_error = relative_error(grad, fd_grad);
  rep.jacobian_error = relative_error(jac, fd_jac);
  rep.hessian_error = relative_error(hess, fd_hess);
  return rep;
}

GridMoments lemma2_moments(const GridDensity& h0, const MatrixXd& qv, double u, const VectorXd& v) {
  const auto d = static_cast<Index>(h0.dim);
  if (d < 1 || d > 2) throw std::invalid_argument("lemma2: only 1-D and 2-D densities are supported");
  if (!(u > 0.0)) throw std::invalid_argument("lemma2: u must be positive");
  const MatrixXd qi = spd_inverse(qv);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(qv);
  const double narrow = std::min(h0.scale_min, std::sqrt(eig.eigenvalues().minCoeff())) / std::sqrt(u);
  const double wide = std::max(h0.scale_max, std::sqrt(eig.eigenvalues().maxCoeff()));
  const double step = narrow / 3.0;

  std::vector<double> lo(2, 0.0);
  std::vector<std::size_t> count(2, 1);
  for (Index a = 0; a < d; ++a) {
    const double l = std::min(h0.center(a), v(a)) - 8.0 * wide;
    const double r = std::max(h0.center(a), v(a)) + 8.0 * wide;
    lo[static_cast<std::size_t>(a)] = l;
    count[static_cast<std::size_t>(a)] = static_cast<std::size_t>(std::ceil((r - l) / step)) + 1;
  }
  if (count[0] * count[1] > 4'000'000) throw std::invalid_argument("lemma2: integration grid too large");

  std::vector<double> logs(count[0] * count[1]);
  double top = -std::numeric_limits<double>::infinity();
  VectorXd w(d);
  for (std::size_t p = 0; p < count[0]; ++p) {
    for (std::size_t q = 0; q < count[1]; ++q) {
      w(0) = lo[0] + static_cast<double>(p) * step;
      if (d == 2) w(1) = lo[1] + static_cast<double>(q) * step;
      const VectorXd dv = w - v;
      const double val = u * (h0.log_h0(w) - 0.5 * dv.dot(qi * dv));
      logs[p * count[1] + q] = val;
      top = std::max(top, val);
    }
  }
  double z = 0.0;
  VectorXd m1 = VectorXd::Zero(d);
  MatrixXd m2 = MatrixXd::Zero(d, d);
  // moments about the window origin are fine at this resolution; shift to
  // the center for conditioning
  const VectorXd origin = h0.center;
  for (std::size_t p = 0; p < count[0]; ++p) {
    for (std::size_t q = 0; q < count[1]; ++q) {
      const double e = std::exp(logs[p * count[1] + q] - top);
      w(0) = lo[0] + static_cast<double>(p) * step;
      if (d == 2) w(1) = lo[1] + static_cast<double>(q) * step;
      const VectorXd c = w - origin;
      z += e;
      m1 += e * c;
      m2 += e * c * c.transpose();
    }
  }
  GridMoments out;
  out.log_z = top + std::log(z) + static_cast<double>(d) * std::log(step);
  const VectorXd mc = m1 / z;
  out.mean = origin + mc;
  out.var = m2 / z - mc * mc.transpose();
  return out;
}

LemmaReport lemma2_check(const GridDensity& h0, const MatrixXd& qv, double u, const VectorXd& v,
                         double tolerance) {
  const auto d = static_cast<Index>(h0.dim);
  if (v.size() != d || qv.rows() != d || qv.cols() != d) throw std::invalid_argument("lemma2: shapes");
  const MatrixXd qi = spd_inverse(qv);
  auto g_of = [&](const VectorXd& vv) { return lemma2_moments(h0, qv, u, vv).log_z / u; };

  const auto mom = lemma2_moments(h0, qv, u, v);
  const MatrixXd dmat = u * mom.var;
  const VectorXd grad = qi * (mom.mean - v);
  const MatrixXd jac = dmat * qi;
  const MatrixXd hess = -qi + qi * dmat * qi;

  VectorXd fd_grad(d);
  MatrixXd fd_jac(d, d), fd_hess(d, d);
  for (Index a = 0; a < d; ++a) {
    const double h = 1e-3;
    VectorXd vp = v, vm = v;
    vp(a) += h;
    vm(a) -= h;
    const auto mp = lemma2_moments(h0, qv, u, vp);
    const auto mm = lemma2_moments(h0, qv, u, vm);
    fd_grad(a) = (mp.log_z - mm.log_z) / (2.0 * h * u);
    fd_jac.col(a) = (mp.mean - mm.mean) / (2.0 * h);
  }
  // second differences with one Richardson step; narrow features of the
  // density make the plain O(h^2) estimate too coarse
  const double g0 = mom.log_z / u;
  auto second_diff = [&](Index a, Index b, double h) {
    if (a == b) {
      VectorXd vp = v, vm = v;
      vp(a) += h;
      vm(a) -= h;
      return (g_of(vp) - 2.0 * g0 + g_of(vm)) / (h * h);
    }
    VectorXd pp = v, pm = v, mp = v, mm = v;
    pp(a) += h; pp(b) += h;
    pm(a) += h; pm(b) -= h;
    mp(a) -= h; mp(b) += h;
    mm(a) -= h; mm(b) -= h;
    return (g_of(pp) - g_of(pm) - g_of(mp) + g_of(mm)) / (4.0 * h * h);
  };
  for (Index a = 0; a < d; ++a) {
    for (Index b = a; b < d; ++b) {
      const double h = 5e-3;
      fd_hess(a, b) = fd_hess(b, a) = (4.0 * second_diff(a, b, h / 2) - second_diff(a, b, h)) / 3.0;
    }
  }
  LemmaReport rep;
  rep.tolerance = tolerance;
  rep.grad_error = relative_error(grad, fd_grad);
  rep.jacobian_error = relative_error(jac, fd_jac);
  rep.hessian_error = relative_error(hess, fd_hess);
  return rep;
}

GridDensity gaussian_mixture_density(double weight1, const VectorXd& mean1, const VectorXd& sd1,
                                     const VectorXd& mean2, const VectorXd& sd2) {
  if (!(weight1 >= 0.0 && weight1 <= 1.0)) throw std::invalid_argument("mixture: weight outside [0, 1]");
  GridDensity g;
  g.dim = static_cast<std::size_t>(mean1.size());
  auto log_comp = [](const VectorXd& w, const VectorXd& m, const VectorXd& s) {
    double acc = 0.0;
    for (Index k = 0; k < w.size(); ++k) {
      const double z = (w(k) - m(k)) / s(k);
      acc += -0.5 * z * z - std::log(s(k)) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return acc;
  };
  const double lw1 = std::log(weight1);
  const double lw2 = std::log1p(-weight1);
  g.log_h0 = [=](const VectorXd& w) {
    return log_add(lw1 + log_comp(w, mean1, sd1), lw2 + log_comp(w, mean2, sd2));
  };
  g.center = 0.5 * (mean1 + mean2);
  g.scale_min = std::min(sd1.minCoeff(), sd2.minCoeff());
  g.scale_max = std::max(sd1.maxCoeff(), sd2.maxCoeff()) + 0.5 * (mean1 - mean2).cwiseAbs().maxCoeff();
  return g;
}

Lemma1Instance random_lemma1_instance(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.1, 1.0);
  const Index d = std::uniform_int_distribution<int>(1, 2)(rng);
  const MatrixXd p = random_spd(rng, d, 0.3);
  VectorXd b(d), a(d), c(d);
  for (Index k = 0; k < d; ++k) {
    b(k) = nd(rng);
    a(k) = nd(rng);
    c(k) = ud(rng);
  }
  const double s = ud(rng);
  auto sigmoid = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
  Lemma1Instance inst;
  inst.h0.dim = static_cast<std::size_t>(d);
  inst.h0.value = [=](const VectorXd& w) {
    const double t = a.dot(w);
    const double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    return -0.5 * w.dot(p * w) + b.dot(w) - c.dot(w.array().cosh().matrix()) - s * softplus;
  };
  inst.h0.grad = [=](const VectorXd& w) -> VectorXd {
    return -p * w + b - c.cwiseProduct(w.array().sinh().matrix()) - s * sigmoid(a.dot(w)) * a;
  };
  inst.h0.hess = [=](const VectorXd& w) -> MatrixXd {
    const double sg = sigmoid(a.dot(w));
    MatrixXd h = -p - MatrixXd(c.cwiseProduct(w.array().cosh().matrix()).asDiagonal());
    return h - s * sg * (1.0 - sg) * a * a.transpose();
  };
  inst.qv = random_spd(rng, d, 0.2);
  inst.v = VectorXd(d);
  for (Index k = 0; k < d; ++k) inst.v(k) = nd(rng);
  return inst;
}

Lemma2Instance random_lemma2_instance(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const Index d = std::uniform_int_distribution<int>(1, 2)(rng);
  Lemma2Instance inst;
  VectorXd m1(d), m2(d), s1(d), s2(d);
  const bool spike = d == 1 && ud(rng) < 0.5;  // narrow component near zero
  for (Index k = 0; k < d; ++k) {
    m1(k) = spike ? 0.0 : nd(rng);
    s1(k) = spike ? 0.1 : 0.3 + 0.9 * ud(rng);
    m2(k) = nd(rng);
    s2(k) = 0.5 + ud(rng);
  }
  inst.h0 = gaussian_mixture_density(0.2 + 0.6 * ud(rng), m1, s1, m2, s2);
  const double us[] = {1.0, 2.0, 4.0};
  inst.u = d == 1 ? us[std::uniform_int_distribution<int>(0, 2)(rng)]
                  : us[std::uniform_int_distribution<int>(0, 1)(rng)];
  inst.qv = random_spd(rng, d, 0.2);
  inst.v = VectorXd(d);
  for (Index k = 0; k < d; ++k) inst.v(k) = nd(rng);
  return inst;
}

}  // namespace hgamp
