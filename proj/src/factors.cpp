#include "hgamp/factors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "hgamp/quadrature.hpp"

namespace hgamp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Index as_index(std::size_t v) { return static_cast<Index>(v); }

double log_sum_exp_scaled(const std::vector<double>& vals, double u) {
  double top = kNegInf;
  for (double v : vals) top = std::max(top, u * v);
  if (!std::isfinite(top)) return top / u;
  double acc = 0.0;
  for (double v : vals) acc += std::exp(u * v - top);
  return (top + std::log(acc)) / u;
}

MatrixXd spd_inverse(const MatrixXd& m, const char* what) {
  Eigen::LDLT<MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    throw std::domain_error(std::string(what) + ": matrix is not positive definite");
  }
  return ldlt.solve(MatrixXd::Identity(m.rows(), m.cols()));
}

const ContinuousMessage& gaussian_incoming(const Message& m, const char* who) {
  const auto* c = std::get_if<ContinuousMessage>(&m);
  if (c == nullptr) throw std::invalid_argument(std::string(who) + ": expected a continuous message");
  if (!c->is_gaussian()) {
    throw std::invalid_argument(std::string(who) + ": non-Gaussian incoming message");
  }
  return *c;
}

// Evaluation-only wrapper produced by the default absorb_linear_term.
class ShiftedFactor final : public FactorHandler {
 public:
  ShiftedFactor(FactorHandlerPtr inner, std::size_t slot, MatrixXd a)
      : inner_(std::move(inner)), slot_(slot), a_(std::move(a)) {}

  std::string kind() const override { return inner_->kind() + "+shift"; }
  std::size_t strong_degree() const override { return inner_->strong_degree(); }
  std::size_t z_dim() const override { return inner_->z_dim(); }
  std::vector<std::size_t> strong_dims() const override { return inner_->strong_dims(); }
  double evaluate(std::span<const VectorXd> x_alpha, const VectorXd& z) const override {
    return inner_->evaluate(x_alpha, z + a_ * x_alpha[slot_]);
  }
  bool supports(Variant) const override { return false; }
  LocalSolution solve(const LocalProblem&) const override {
    throw std::logic_error("shifted " + inner_->kind() + " factor supports evaluation only");
  }

 private:
  FactorHandlerPtr inner_;
  std::size_t slot_;
  MatrixXd a_;
};

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (d * d / var + std::log(2.0 * std::numbers::pi * var));
}

class SpikeSlabDensity final : public LogDensity {
 public:
  SpikeSlabDensity(double rho, SpikeSlabPrior prior) : rho_(rho), prior_(prior) {}
  std::size_t dim() const override { return 1; }
  double log_value(const VectorXd& x) const override {
    if (x(0) == 0.0) return std::log1p(-rho_);
    return std::log(rho_) + log_normal_pdf(x(0), prior_.active_mean, prior_.active_var);
  }
  DensitySummary combine(const GaussianEvidence& ev, Variant variant, double u) const override {
    if (variant != Variant::sum_product || u != 1.0) {
      throw std::invalid_argument("spike-slab prior: only sum-product with u = 1 is supported");
    }
    const double qr = ev.flat ? kInfiniteVariance : ev.cov(0, 0);
    const double r = ev.flat ? 0.0 : ev.mean(0);
    const auto est = bg_denoise(r, qr, rho_, prior_);
    return {VectorXd::Constant(1, est.mean), MatrixXd::Constant(1, 1, est.var)};
  }

 private:
  double rho_;
  SpikeSlabPrior prior_;
};

class SmoothDensity final : public LogDensity {
 public:
  using Fn = SmoothScalarPriorFactor::Fn;
  SmoothDensity(Fn f, Fn g, Fn h) : f_(std::move(f)), g_(std::move(g)), h_(std::move(h)) {}
  std::size_t dim() const override { return 1; }
  double log_value(const VectorXd& x) const override { return f_(x(0)); }

  DensitySummary combine(const GaussianEvidence& ev, Variant variant, double u) const override {
    const double prec = ev.flat ? 0.0 : 1.0 / ev.cov(0, 0);
    const double center = ev.flat ? 0.0 : ev.mean(0);
    auto obj = [&](double x) { return f_(x) - 0.5 * prec * (x - center) * (x - center); };
    auto grad = [&](double x) { return g_(x) - prec * (x - center); };
    auto curv = [&](double x) { return h_(x) - prec; };

    // damped Newton on a strictly concave objective
    double x = center;
    for (int it = 0; it < 200; ++it) {
      const double g = grad(x);
      const double c = curv(x);
      double step = c < 0.0 ? -g / c : g;
      double t = 1.0;
      const double f0 = obj(x);
      while (t > 1e-12 && !(obj(x + t * step) >= f0 - 1e-15 * (1.0 + std::abs(f0)))) t *= 0.5;
      x += t * step;
      if (std::abs(t * step) <= 1e-14 * (1.0 + std::abs(x))) break;
    }
    const double c = curv(x);
    if (!(c < 0.0)) throw std::domain_error("smooth prior: objective is not strictly concave");
    if (variant == Variant::max_sum) {
      return {VectorXd::Constant(1, x), MatrixXd::Constant(1, 1, -1.0 / c)};
    }
    const double width = 1.0 / std::sqrt(-u * c);
    const auto lm = quadrature::log_moments([&](double w) { return u * obj(w); },
                                            x - 60.0 * width, x + 60.0 * width, width);
    return {VectorXd::Constant(1, lm.mean), MatrixXd::Constant(1, 1, u * lm.var)};
  }

 private:
  Fn f_, g_, h_;
};

}  // namespace

// ---------------------------------------------------------------- handler base

std::shared_ptr<const FactorHandler> FactorHandler::absorb_linear_term(
    std::shared_ptr<const FactorHandler> self, std::size_t slot, const MatrixXd& a) const {
  if (slot >= strong_degree()) throw std::invalid_argument("absorb_linear_term: bad slot");
  return std::make_shared<ShiftedFactor>(std::move(self), slot, a);
}

void FactorHandler::check_problem(const LocalProblem& p) const {
  if (!supports(p.variant)) {
    throw std::invalid_argument(kind() + " factor does not support " + to_string(p.variant));
  }
  if (!(p.u > 0.0)) throw std::invalid_argument("local solve: u must be positive");
  if (p.incoming.size() != strong_degree() || p.strong_vars.size() != strong_degree()) {
    throw std::invalid_argument(kind() + " factor: wrong number of strong neighbors");
  }
  const auto dims = strong_dims();
  for (std::size_t s = 0; s < dims.size(); ++s) {
    if (p.strong_vars[s]->dim != dims[s]) {
      throw std::invalid_argument(kind() + " factor: strong neighbor dimension mismatch");
    }
  }
  if (z_dim() > 0) {
    const auto d = as_index(z_dim());
    if (p.p_hat.size() != d || p.qp.rows() != d || p.qp.cols() != d) {
      throw std::invalid_argument(kind() + " factor: z penalty has the wrong shape");
    }
  }
}

QuadraticMarginal marginalize_quadratic(const MatrixXd& m, const VectorXd& b, Index start,
                                        Index len, bool allow_singular) {
  const Index n = m.rows();
  if (m.cols() != n || b.size() != n || start < 0 || len < 0 || start + len > n) {
    throw std::invalid_argument("marginalize_quadratic: bad shapes");
  }
  std::vector<Index> rest;
  for (Index k = 0; k < n; ++k)
    if (k < start || k >= start + len) rest.push_back(k);
  QuadraticMarginal out;
  out.precision = m.block(start, start, len, len);
  out.eta = b.segment(start, len);
  if (rest.empty()) return out;

  const auto nr = static_cast<Index>(rest.size());
  MatrixXd mrr(nr, nr), mkr(len, nr);
  VectorXd br(nr);
  for (Index a = 0; a < nr; ++a) {
    br(a) = b(rest[static_cast<std::size_t>(a)]);
    for (Index c = 0; c < nr; ++c) {
      mrr(a, c) = m(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(c)]);
    }
    for (Index k = 0; k < len; ++k) mkr(k, a) = m(start + k, rest[static_cast<std::size_t>(a)]);
  }
  Eigen::LDLT<MatrixXd> ldlt(mrr);
  const double scale = std::max(1.0, mrr.cwiseAbs().maxCoeff());
  if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 1e-12 * scale).all()) {
    out.precision -= mkr * ldlt.solve(mkr.transpose());
    out.eta -= mkr * ldlt.solve(br);
  } else if (allow_singular) {
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(mrr);
    cod.setThreshold(1e-12);
    out.precision -= mkr * cod.solve(mkr.transpose());
    out.eta -= mkr * cod.solve(br);
  } else {
    throw std::domain_error("marginalize_quadratic: eliminated block is not positive definite");
  }
  out.precision = 0.5 * (out.precision + out.precision.transpose());
  return out;
}

// ---------------------------------------------------------------- Gaussian

GaussianFactor::GaussianFactor(std::vector<std::size_t> strong_dims, std::size_t z_dim,
                               MatrixXd j, VectorXd h)
    : dims_(std::move(strong_dims)), z_dim_(z_dim), j_(std::move(j)), h_(std::move(h)) {
  std::size_t total = z_dim_;
  for (auto d : dims_) total += d;
  if (j_.rows() != as_index(total) || j_.cols() != as_index(total) || h_.size() != as_index(total)) {
    throw std::invalid_argument("GaussianFactor: J/h do not match the block dimensions");
  }
}

double GaussianFactor::evaluate(std::span<const VectorXd> x_alpha, const VectorXd& z) const {
  if (x_alpha.size() != dims_.size() || z.size() != as_index(z_dim_)) {
    throw std::invalid_argument("GaussianFactor::evaluate: wrong inputs");
  }
  VectorXd w(h_.size());
  Index at = 0;
  for (std::size_t s = 0; s < dims_.size(); ++s) {
    w.segment(at, as_index(dims_[s])) = x_alpha[s];
    at += as_index(dims_[s]);
  }
  w.tail(as_index(z_dim_)) = z;
  return -0.5 * w.dot(j_ * w) + h_.dot(w);
}

LocalSolution GaussianFactor::solve(const LocalProblem& p) const {
  check_problem(p);
  const std::size_t k = dims_.size();
  std::vector<Index> offset(k + 1, 0);
  for (std::size_t s = 0; s < k; ++s) offset[s + 1] = offset[s] + as_index(dims_[s]);
  const Index zoff = offset[k];
  const Index dz = as_index(z_dim_);

  MatrixXd base = j_;
  VectorXd bias = h_;
  if (dz > 0) {
    const MatrixXd qp_inv = spd_inverse(p.qp, "GaussianFactor Q^p");
    base.block(zoff, zoff, dz, dz) += qp_inv;
    bias.segment(zoff, dz) += qp_inv * p.p_hat;
  }

  LocalSolution out;
  out.outgoing.resize(k);
  for (std::size_t s = 0; s < k; ++s) {
    MatrixXd m = base;
    VectorXd b = bias;
    for (std::size_t r = 0; r < k; ++r) {
      if (r == s) continue;
      const auto& in = gaussian_incoming(p.incoming[r], "GaussianFactor");
      const Index d = as_index(dims_[r]);
      m.block(offset[r], offset[r], d, d) += in.precision;
      b.segment(offset[r], d) += in.eta;
    }
    const auto marg = marginalize_quadratic(m, b, offset[s], as_index(dims_[s]));
    out.outgoing[s] = ContinuousMessage{marg.eta, marg.precision, {}};
  }

  if (dz > 0) {
    MatrixXd m = base;
    VectorXd b = bias;
    for (std::size_t r = 0; r < k; ++r) {
      const auto& in = gaussian_incoming(p.incoming[r], "GaussianFactor");
      const Index d = as_index(dims_[r]);
      m.block(offset[r], offset[r], d, d) += in.precision;
      b.segment(offset[r], d) += in.eta;
    }
    const auto marg = marginalize_quadratic(m, b, zoff, dz);
    out.z_cov = spd_inverse(marg.precision, "GaussianFactor z curvature");
    out.z0 = out.z_cov * marg.eta;
    if (p.variant == Variant::max_sum) out.dz = marg.precision;
  }
  return out;
}

std::shared_ptr<const FactorHandler> GaussianFactor::absorb_linear_term(
    std::shared_ptr<const FactorHandler>, std::size_t slot, const MatrixXd& a) const {
  if (slot >= dims_.size()) throw std::invalid_argument("absorb_linear_term: bad slot");
  if (a.rows() != as_index(z_dim_) || a.cols() != as_index(dims_[slot])) {
    throw std::invalid_argument("absorb_linear_term: block shape mismatch");
  }
  Index off = 0;
  for (std::size_t s = 0; s < slot; ++s) off += as_index(dims_[s]);
  const Index n = h_.size();
  MatrixXd t = MatrixXd::Identity(n, n);
  t.block(n - as_index(z_dim_), off, a.rows(), a.cols()) = a;
  return std::make_shared<GaussianFactor>(dims_, z_dim_, t.transpose() * j_ * t,
                                          t.transpose() * h_);
}

FactorHandlerPtr gaussian_prior(const VectorXd& mean, const MatrixXd& cov) {
  const MatrixXd prec = spd_inverse(cov, "gaussian_prior covariance");
  return std::make_shared<GaussianFactor>(std::vector<std::size_t>{static_cast<std::size_t>(mean.size())},
                                          0, prec, prec * mean);
}

FactorHandlerPtr gaussian_output(const VectorXd& y, const MatrixXd& noise_cov) {
  const MatrixXd prec = spd_inverse(noise_cov, "gaussian_output noise covariance");
  return std::make_shared<GaussianFactor>(std::vector<std::size_t>{},
                                          static_cast<std::size_t>(y.size()), prec, prec * y);
}

// ---------------------------------------------------------------- scalar AWGN

AwgnOutputFactor::AwgnOutputFactor(double y, AwgnChannel channel) : y_(y), channel_(channel) {
  channel_.validate();
}

double AwgnOutputFactor::evaluate(std::span<const VectorXd>, const VectorXd& z) const {
  const double d = y_ - z(0);
  return -0.5 * d * d / channel_.noise_var;
}

LocalSolution AwgnOutputFactor::solve(const LocalProblem& p) const {
  check_problem(p);
  const auto post = awgn_output_denoise(p.p_hat(0), p.qp(0, 0), y_, channel_);
  LocalSolution out;
  out.z0 = VectorXd::Constant(1, post.mean);
  out.z_cov = MatrixXd::Constant(1, 1, post.var);
  if (p.variant == Variant::max_sum) out.dz = MatrixXd::Constant(1, 1, 1.0 / post.var);
  return out;
}

std::optional<QuadraticForm> AwgnOutputFactor::quadratic_form() const {
  const double prec = 1.0 / channel_.noise_var;
  return QuadraticForm{MatrixXd::Constant(1, 1, prec), VectorXd::Constant(1, prec * y_)};
}

std::shared_ptr<const FactorHandler> AwgnOutputFactor::absorb_linear_term(
    std::shared_ptr<const FactorHandler>, std::size_t, const MatrixXd&) const {
  throw std::invalid_argument("awgn_output factor has no strong neighbors to absorb");
}

// ---------------------------------------------------------------- spike-slab

SpikeSlabPriorFactor::SpikeSlabPriorFactor(double rho, SpikeSlabPrior prior)
    : rho_(rho), prior_(prior) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("spike-slab: rho outside [0, 1]");
  prior_.validate();
  term_ = std::make_shared<SpikeSlabDensity>(rho_, prior_);
}

double SpikeSlabPriorFactor::evaluate(std::span<const VectorXd> x_alpha, const VectorXd&) const {
  return term_->log_value(x_alpha[0]);
}

LocalSolution SpikeSlabPriorFactor::solve(const LocalProblem& p) const {
  check_problem(p);
  if (p.u != 1.0) throw std::invalid_argument("spike-slab prior: u must be 1");
  LocalSolution out;
  auto msg = ContinuousMessage::flat(1);
  msg.terms.push_back(term_);
  out.outgoing.emplace_back(std::move(msg));
  return out;
}

// ---------------------------------------------------------------- smooth prior

SmoothScalarPriorFactor::SmoothScalarPriorFactor(Fn log_f, Fn grad, Fn hess)
    : term_(std::make_shared<SmoothDensity>(std::move(log_f), std::move(grad), std::move(hess))) {}

double SmoothScalarPriorFactor::evaluate(std::span<const VectorXd> x_alpha,
                                         const VectorXd&) const {
  return term_->log_value(x_alpha[0]);
}

LocalSolution SmoothScalarPriorFactor::solve(const LocalProblem& p) const {
  check_problem(p);
  LocalSolution out;
  auto msg = ContinuousMessage::flat(1);
  msg.terms.push_back(term_);
  out.outgoing.emplace_back(std::move(msg));
  return out;
}

// ---------------------------------------------------------------- enumerated

EnumeratedFactor::EnumeratedFactor(std::vector<std::vector<double>> alphabets, std::size_t z_dim,
                                   Fn f, double z_feature_width, std::size_t enumeration_cap)
    : alphabets_(std::move(alphabets)),
      z_dim_(z_dim),
      f_(std::move(f)),
      z_width_(z_feature_width),
      cap_(enumeration_cap) {
  if (z_dim_ > 1) throw std::invalid_argument("EnumeratedFactor: z must be scalar or absent");
  for (const auto& a : alphabets_)
    if (a.empty()) throw std::invalid_argument("EnumeratedFactor: empty alphabet");
}

std::vector<std::size_t> EnumeratedFactor::strong_dims() const {
  return std::vector<std::size_t>(alphabets_.size(), 1);
}

double EnumeratedFactor::evaluate(std::span<const VectorXd> x_alpha, const VectorXd& z) const {
  std::vector<double> xv(x_alpha.size());
  for (std::size_t s = 0; s < x_alpha.size(); ++s) xv[s] = x_alpha[s](0);
  return f_(xv, z_dim_ ? z(0) : 0.0);
}

LocalSolution EnumeratedFactor::solve(const LocalProblem& p) const {
  check_problem(p);
  const std::size_t k = alphabets_.size();
  std::size_t states = 1;
  for (const auto& a : alphabets_) {
    if (states > cap_ / a.size()) throw std::length_error("EnumeratedFactor: enumeration cap exceeded");
    states *= a.size();
  }
  std::vector<const Eigen::VectorXd*> tables(k);
  for (std::size_t s = 0; s < k; ++s) {
    const auto* t = std::get_if<TableMessage>(&p.incoming[s]);
    if (t == nullptr || t->values.size() != as_index(alphabets_[s].size())) {
      throw std::invalid_argument("EnumeratedFactor: incoming message must be a matching table");
    }
    tables[s] = &t->values;
  }
  const double u = p.u;
  const bool max_sum = p.variant == Variant::max_sum;

  std::vector<double> base(states), z_mean(states, 0.0), z_var(states, 0.0), z_curv(states, 0.0);
  std::vector<std::size_t> idx(k, 0);
  std::vector<double> xv(k);
  const double zp = z_dim_ ? p.p_hat(0) : 0.0;
  const double zq = z_dim_ ? p.qp(0, 0) : 1.0;
  if (z_dim_ && !(zq > 0.0)) throw std::invalid_argument("EnumeratedFactor: Q^p must be positive");

  for (std::size_t a = 0; a < states; ++a) {
    for (std::size_t s = 0; s < k; ++s) xv[s] = alphabets_[s][idx[s]];
    if (!z_dim_) {
      base[a] = f_(xv, 0.0);
    } else {
      auto h = [&](double z) { return f_(xv, z) - 0.5 * (z - zp) * (z - zp) / zq; };
      const double sd = std::sqrt(zq);
      if (max_sum) {
        const auto best = boost::math::tools::brent_find_minima(
            [&](double z) { return -h(z); }, zp - 40.0 * sd, zp + 40.0 * sd, 52);
        const double z = best.first;
        const double step = 1e-4 * (1.0 + std::abs(z));
        base[a] = h(z);
        z_mean[a] = z;
        z_curv[a] = -(h(z + step) - 2.0 * h(z) + h(z - step)) / (step * step);
      } else {
        const double w = std::min(sd / std::sqrt(u), z_width_);
        const auto lm = quadrature::log_moments([&](double z) { return u * h(z); },
                                                zp - 40.0 * sd, zp + 40.0 * sd, w);
        base[a] = lm.log_mass / u;
        z_mean[a] = lm.mean;
        z_var[a] = lm.var;
      }
    }
    for (std::size_t s = 0; s < k; ++s) {
      if (++idx[s] < alphabets_[s].size()) break;
      idx[s] = 0;
    }
  }

  LocalSolution out;
  out.outgoing.resize(k);
  std::vector<std::vector<double>> buckets;
  for (std::size_t s = 0; s < k; ++s) {
    buckets.assign(alphabets_[s].size(), {});
    std::fill(idx.begin(), idx.end(), 0);
    for (std::size_t a = 0; a < states; ++a) {
      double v = base[a];
      for (std::size_t r = 0; r < k; ++r)
        if (r != s) v += (*tables[r])(as_index(idx[r]));
      buckets[idx[s]].push_back(v);
      for (std::size_t r = 0; r < k; ++r) {
        if (++idx[r] < alphabets_[r].size()) break;
        idx[r] = 0;
      }
    }
    VectorXd values(as_index(alphabets_[s].size()));
    for (std::size_t v = 0; v < buckets.size(); ++v) {
      values(as_index(v)) = max_sum ? *std::max_element(buckets[v].begin(), buckets[v].end())
                                    : log_sum_exp_scaled(buckets[v], u);
    }
    out.outgoing[s] = TableMessage{values};
  }

  if (z_dim_) {
    std::vector<double> total(states);
    std::fill(idx.begin(), idx.end(), 0);
    for (std::size_t a = 0; a < states; ++a) {
      total[a] = base[a];
      for (std::size_t r = 0; r < k; ++r) total[a] += (*tables[r])(as_index(idx[r]));
      for (std::size_t r = 0; r < k; ++r) {
        if (++idx[r] < alphabets_[r].size()) break;
        idx[r] = 0;
      }
    }
    if (max_sum) {
      const auto best = static_cast<std::size_t>(std::max_element(total.begin(), total.end()) -
                                                 total.begin());
      if (!(z_curv[best] > 0.0)) throw std::domain_error("EnumeratedFactor: z curvature not positive");
      out.z0 = VectorXd::Constant(1, z_mean[best]);
      out.dz = MatrixXd::Constant(1, 1, z_curv[best]);
      out.z_cov = MatrixXd::Constant(1, 1, 1.0 / z_curv[best]);
    } else {
      const double top = u * *std::max_element(total.begin(), total.end());
      double mass = 0.0, m1 = 0.0, m2 = 0.0;
      for (std::size_t a = 0; a < states; ++a) {
        const double w = std::exp(u * total[a] - top);
        mass += w;
        m1 += w * z_mean[a];
        m2 += w * (z_var[a] + z_mean[a] * z_mean[a]);
      }
      const double mean = m1 / mass;
      out.z0 = VectorXd::Constant(1, mean);
      out.z_cov = MatrixXd::Constant(1, 1, u * std::max(0.0, m2 / mass - mean * mean));
    }
  }
  return out;
}

std::shared_ptr<const FactorHandler> EnumeratedFactor::absorb_linear_term(
    std::shared_ptr<const FactorHandler>, std::size_t slot, const MatrixXd& a) const {
  if (slot >= alphabets_.size() || z_dim_ != 1 || a.rows() != 1 || a.cols() != 1) {
    throw std::invalid_argument("absorb_linear_term: bad slot or block shape");
  }
  const double coef = a(0, 0);
  Fn inner = f_;
  return std::make_shared<EnumeratedFactor>(
      alphabets_, z_dim_,
      [inner, slot, coef](std::span<const double> x, double z) {
        return inner(x, z + coef * x[slot]);
      },
      z_width_, cap_);
}

}  // namespace hgamp
