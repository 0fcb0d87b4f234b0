#include "hgamp/group_sparsity.hpp"

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

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double clamp_llr(double v, double c) {
  if (std::isnan(v)) throw std::runtime_error("sparsity update: NaN log-likelihood ratio");
  return std::clamp(v, -c, c);
}

}  // namespace

std::vector<std::vector<std::size_t>> GroupModel::memberships() const {
  std::vector<std::vector<std::size_t>> gamma(n());
  for (std::size_t k = 0; k < groups.size(); ++k)
    for (auto j : groups[k])
      if (j < gamma.size()) gamma[j].push_back(k);
  for (auto& g : gamma) {
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
  }
  return gamma;
}

void GroupModel::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("GroupModel: rho must lie in (0, 1)");
  prior.validate();
  channel.validate();
  for (const auto& g : groups) {
    for (auto j : g)
      if (j >= n()) throw std::invalid_argument("GroupModel: group index out of range");
    auto sorted = g;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("GroupModel: repeated index inside a group");
    }
  }
  const auto gamma = memberships();
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (gamma[j].empty()) {
      throw std::invalid_argument("GroupModel: component " + std::to_string(j) + " is in no group");
    }
  }
}

double activity_from_llrs(const double* llrs, std::size_t count, std::size_t skip) {
  double acc = 0.0;
  for (std::size_t e = 0; e < count; ++e)
    if (e != skip) acc += softplus(llrs[e]);
  return -std::expm1(-acc);
}

SparsityState SparsityState::initial(const GroupModel& model) {
  SparsityState s;
  const auto gamma = model.memberships();
  s.var_edges.resize(model.n());
  s.group_edges.resize(model.k());
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    for (auto k : gamma[j]) {
      const std::size_t e = s.edge_var.size();
      s.edge_var.push_back(j);
      s.edge_group.push_back(k);
      s.var_edges[j].push_back(e);
      s.group_edges[k].push_back(e);
    }
  }
  const auto ne = static_cast<Index>(s.edge_var.size());
  const double prior_llr = std::log(model.rho / (1.0 - model.rho));
  s.llr_to_group = VectorXd::Zero(ne);
  s.llr_from_group = VectorXd::Constant(ne, prior_llr);
  s.rho_hat_excl = VectorXd::Zero(ne);
  s.rho_hat = VectorXd::Zero(static_cast<Index>(model.n()));
  std::vector<double> buf;
  for (std::size_t j = 0; j < model.n(); ++j) {
    buf.clear();
    for (auto e : s.var_edges[j]) buf.push_back(s.llr_from_group(static_cast<Index>(e)));
    s.rho_hat(static_cast<Index>(j)) = activity_from_llrs(buf.data(), buf.size());
  }
  return s;
}

void sparsity_update(SparsityState& s, const VectorXd& r_hat, const VectorXd& qr,
                     const GroupModel& model, double clamp) {
  const std::size_t n = model.n();
  if (static_cast<std::size_t>(r_hat.size()) != n || static_cast<std::size_t>(qr.size()) != n) {
    throw std::invalid_argument("sparsity_update: r_hat/qr length mismatch");
  }
  const auto ne = s.edge_var.size();
  std::vector<double> buf;

  // component -> group activity, excluding the receiving group
  for (std::size_t j = 0; j < n; ++j) {
    const auto& edges = s.var_edges[j];
    buf.clear();
    for (auto e : edges) buf.push_back(s.llr_from_group(static_cast<Index>(e)));
    for (std::size_t q = 0; q < edges.size(); ++q)
      s.rho_hat_excl(static_cast<Index>(edges[q])) = activity_from_llrs(buf.data(), buf.size(), q);
  }

  // evidence for the group being active, from the component's pseudo-observation
  for (std::size_t e = 0; e < ne; ++e) {
    const auto j = static_cast<Index>(s.edge_var[e]);
    const double q = qr(j);
    double llr = 0.0;
    if (std::isfinite(q)) {
      llr = log_pr_density(r_hat(j), q, 1.0, model.prior) -
            log_pr_density(r_hat(j), q, s.rho_hat_excl(static_cast<Index>(e)), model.prior);
    }
    s.llr_to_group(static_cast<Index>(e)) = clamp_llr(llr, clamp);
  }

  // group -> component: prior log-odds plus the other members' evidence
  const double prior_llr = std::log(model.rho / (1.0 - model.rho));
  for (const auto& edges : s.group_edges) {
    for (auto e : edges) {
      double acc = prior_llr;
      for (auto other : edges)
        if (other != e) acc += s.llr_to_group(static_cast<Index>(other));
      s.llr_from_group(static_cast<Index>(e)) = clamp_llr(acc, clamp);
    }
  }

  for (std::size_t j = 0; j < n; ++j) {
    buf.clear();
    for (auto e : s.var_edges[j]) buf.push_back(s.llr_from_group(static_cast<Index>(e)));
    s.rho_hat(static_cast<Index>(j)) = activity_from_llrs(buf.data(), buf.size());
  }
}

ScalarGamp::ScalarGamp(const MatrixXd& a, VectorXd y, SpikeSlabPrior prior, AwgnChannel channel,
                       double variance_floor, kernels::Exec exec)
    : op_(a), y_(std::move(y)), prior_(prior), channel_(channel), floor_(variance_floor), exec_(exec) {
  if (y_.size() != a.rows()) throw std::invalid_argument("ScalarGamp: y length differs from rows of A");
  prior_.validate();
  channel_.validate();
  const Index n = a.cols();
  const Index m = a.rows();
  st_.x_hat = VectorXd::Zero(n);
  st_.qx = VectorXd::Zero(n);
  st_.r_hat = VectorXd::Zero(n);
  st_.qr = VectorXd::Constant(n, kInfiniteVariance);
  st_.z_hat = st_.p_hat = st_.qp = st_.s_hat = st_.qs = st_.z0 = st_.qz = VectorXd::Zero(m);
  g_.resize(static_cast<std::size_t>(n));
  prec_.resize(static_cast<std::size_t>(n));
}

void ScalarGamp::step(const VectorXd& rho_hat) {
  auto& s = st_;
  const auto n = static_cast<std::size_t>(s.x_hat.size());
  const auto m = static_cast<std::size_t>(s.z_hat.size());
  if (static_cast<std::size_t>(rho_hat.size()) != n) throw std::invalid_argument("ScalarGamp: rho_hat length");
  const double floor = floor_;
  auto floored = [floor](double v) { return v < floor ? floor : v; };

  kernels::for_each_index(exec_, n, [&](std::size_t j) {
    const auto jj = static_cast<Index>(j);
    const auto est = bg_denoise(s.r_hat(jj), s.qr(jj), rho_hat(jj), prior_);
    s.x_hat(jj) = est.mean;
    s.qx(jj) = floored(est.var);
  });

  op_.forward_pair(exec_, {s.x_hat.data(), n}, {s.qx.data(), n}, {s.z_hat.data(), m},
                   {s.qp.data(), m});
  kernels::for_each_index(exec_, m, [&](std::size_t i) {
    const auto ii = static_cast<Index>(i);
    const double qp = floored(s.qp(ii));
    s.qp(ii) = qp;
    s.p_hat(ii) = s.z_hat(ii) - qp * s.s_hat(ii);
    const auto post = awgn_output_denoise(s.p_hat(ii), qp, y_(ii), channel_);
    const double qz = floored(post.var);
    s.z0(ii) = post.mean;
    s.qz(ii) = qz;
    s.s_hat(ii) = (post.mean - s.p_hat(ii)) / qp;
    const double qs = (1.0 / qp) * (1.0 - qz / qp);
    s.qs(ii) = qs < 0.0 ? 0.0 : qs;
  });

  op_.adjoint_pair(exec_, {s.s_hat.data(), m}, {s.qs.data(), m}, g_, prec_);
  kernels::for_each_index(exec_, n, [&](std::size_t j) {
    const auto jj = static_cast<Index>(j);
    if (prec_[j] == 0.0) {
      s.qr(jj) = kInfiniteVariance;
      s.r_hat(jj) = s.x_hat(jj);
      return;
    }
    const double qr = 1.0 / prec_[j];
    s.qr(jj) = qr;
    s.r_hat(jj) = s.x_hat(jj) + qr * g_[j];
  });
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(s.x_hat(static_cast<Index>(j))) || !std::isfinite(s.r_hat(static_cast<Index>(j)))) {
      throw std::runtime_error("scalar gamp iteration " + std::to_string(s.t) +
                               ": non-finite iterate at component " + std::to_string(j));
    }
  }
  ++s.t;
}

GroupGampResult group_gamp_run(const GroupModel& model, const VectorXd& y,
                               const GroupGampOptions& options) {
  model.validate();
  if (static_cast<std::size_t>(y.size()) != model.m()) throw std::invalid_argument("group_gamp_run: y length");
  ScalarGamp core(model.a, y, model.prior, model.channel, options.variance_floor, options.exec);
  GroupGampResult res;
  res.sparsity = SparsityState::initial(model);
  for (std::size_t t = 0; t < options.iters; ++t) {
    core.step(res.sparsity.rho_hat);
    res.trajectory.push_back(core.state().x_hat);
    sparsity_update(res.sparsity, core.state().r_hat, core.state().qr, model, options.llr_clamp);
    res.iterations = t + 1;
  }
  res.state = core.state();
  res.x_hat = res.state.x_hat;
  res.rho_hat = res.sparsity.rho_hat;
  return res;
}

GroupGampResult basic_gamp_run(const GroupModel& model, const VectorXd& y, const VectorXd& rho_hat,
                               const GroupGampOptions& options) {
  if (static_cast<std::size_t>(y.size()) != model.m()) throw std::invalid_argument("basic_gamp_run: y length");
  ScalarGamp core(model.a, y, model.prior, model.channel, options.variance_floor, options.exec);
  GroupGampResult res;
  for (std::size_t t = 0; t < options.iters; ++t) {
    core.step(rho_hat);
    res.trajectory.push_back(core.state().x_hat);
    res.iterations = t + 1;
  }
  res.state = core.state();
  res.x_hat = res.state.x_hat;
  res.rho_hat = rho_hat;
  return res;
}

GroupPosterior exact_group_posterior_oracle(const GroupModel& model, const VectorXd& y,
                                            std::size_t max_groups) {
  model.validate();
  const std::size_t k = model.k();
  if (k > max_groups || k >= 63) throw std::length_error("exact oracle: too many groups");
  const Index n = static_cast<Index>(model.n());
  const Index m = static_cast<Index>(model.m());
  const double sv = model.prior.active_var;
  const double mu = model.prior.active_mean;
  const double sw = model.channel.noise_var;

  const std::size_t patterns = std::size_t{1} << k;
  std::vector<double> log_w(patterns);
  std::vector<VectorXd> cond_mean(patterns);
  for (std::size_t pat = 0; pat < patterns; ++pat) {
    std::vector<char> active(static_cast<std::size_t>(n), 0);
    std::size_t count = 0;
    for (std::size_t g = 0; g < k; ++g) {
      if (pat >> g & 1U) {
        ++count;
        for (auto j : model.groups[g]) active[j] = 1;
      }
    }
    std::vector<Index> support;
    for (Index j = 0; j < n; ++j)
      if (active[static_cast<std::size_t>(j)]) support.push_back(j);
    const auto s = static_cast<Index>(support.size());
    MatrixXd as(m, s);
    for (Index c = 0; c < s; ++c) as.col(c) = model.a.col(support[static_cast<std::size_t>(c)]);

    // y ~ N(mu A_S 1, sv A_S A_S' + sw I)
    const MatrixXd cov = sv * as * as.transpose() + sw * MatrixXd::Identity(m, m);
    const VectorXd resid = y - mu * as * VectorXd::Ones(s);
    const Eigen::LLT<MatrixXd> llt(cov);
    const VectorXd sol = llt.solve(resid);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_w[pat] = static_cast<double>(count) * std::log(model.rho) +
                 static_cast<double>(k - count) * std::log1p(-model.rho) -
                 0.5 * (resid.dot(sol) + logdet + static_cast<double>(m) * std::log(2.0 * std::numbers::pi));

    VectorXd xm = VectorXd::Zero(n);
    const VectorXd xs = mu * VectorXd::Ones(s) + sv * as.transpose() * sol;
    for (Index c = 0; c < s; ++c) xm(support[static_cast<std::size_t>(c)]) = xs(c);
    cond_mean[pat] = std::move(xm);
  }
  const double top = *std::max_element(log_w.begin(), log_w.end());
  double total = 0.0;
  GroupPosterior out;
  out.mean = VectorXd::Zero(n);
  out.group_activity = VectorXd::Zero(static_cast<Index>(k));
  for (std::size_t pat = 0; pat < patterns; ++pat) {
    const double w = std::exp(log_w[pat] - top);
    total += w;
    out.mean += w * cond_mean[pat];
    for (std::size_t g = 0; g < k; ++g)
      if (pat >> g & 1U) out.group_activity(static_cast<Index>(g)) += w;
  }
  out.mean /= total;
  out.group_activity /= total;
  return out;
}

}  // namespace hgamp
