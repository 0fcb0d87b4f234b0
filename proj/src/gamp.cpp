#include "hgamp/gamp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hgamp/scalar_channels.hpp"

namespace hgamp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index as_index(std::size_t v) { return static_cast<Index>(v); }

[[noreturn]] void fail(std::size_t t, const std::string& what) {
  std::ostringstream os;
  os << "gamp iteration " << t << ": " << what;
  throw std::runtime_error(os.str());
}

bool finite(const MatrixXd& m) { return m.allFinite(); }

// Mean and covariance of the Gaussian with given precision and information.
bool gaussian_moments(const MatrixXd& prec, const VectorXd& info, VectorXd& mean, MatrixXd& cov) {
  Eigen::LDLT<MatrixXd> ldlt(prec);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) return false;
  cov = ldlt.solve(MatrixXd::Identity(prec.rows(), prec.cols()));
  cov = 0.5 * (cov + cov.transpose());
  mean = ldlt.solve(info);
  return true;
}

}  // namespace

void GampOptions::validate() const {
  if (!(u > 0.0)) throw std::invalid_argument("GampOptions: u must be positive");
  if (!(variance_floor > 0.0)) throw std::invalid_argument("GampOptions: variance_floor must be > 0");
  if (!(damping >= 0.0 && damping <= 1.0)) {
    throw std::invalid_argument("GampOptions: damping must lie in [0, 1]");
  }
  if (tolerance < 0.0) throw std::invalid_argument("GampOptions: tolerance must be >= 0");
  if (r_init.has_value() != qr_init.has_value()) {
    throw std::invalid_argument("GampOptions: r_init and qr_init go together");
  }
}

GampEngine::GampEngine(const FactorGraph& graph, GampOptions options)
    : graph_(graph), opt_(std::move(options)) {
  opt_.validate();
  const auto report = validate_graph(graph_);
  if (!report.ok()) throw std::invalid_argument("gamp: invalid graph: " + report.issues[0].message);
  adj_ = graph_.adjacency();
  const std::size_t n = graph_.num_variables();
  strong_edges_.resize(n);
  for (std::size_t i = 0; i < graph_.num_factors(); ++i) {
    const auto& node = graph_.factors[i];
    if (!node.strong.empty() && !node.handler->supports(opt_.variant)) {
      throw std::invalid_argument("gamp: factor " + std::to_string(i) + " (" +
                                  node.handler->kind() + ") does not support " +
                                  to_string(opt_.variant));
    }
    for (std::size_t s = 0; s < node.strong.size(); ++s) strong_edges_[node.strong[s]].push_back({i, s});
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (graph_.variables[j].is_finite() && opt_.variant == Variant::max_sum &&
        !adj_.weak[j].empty()) {
      throw std::invalid_argument(
          "gamp: max-sum needs curvature, so finite variables cannot have weak edges");
    }
  }
  if (opt_.r_init && (opt_.r_init->size() != n || opt_.qr_init->size() != n)) {
    throw std::invalid_argument("gamp: r_init/qr_init must have one block per variable");
  }
  fast_ = opt_.scalar_fast_path && graph_.mixing.is_scalar();
  if (fast_) dense_ = kernels::DenseOperator(graph_.mixing.scalar_matrix(&dense_rows_));
  initialize();
}

Message GampEngine::flat_message(std::size_t j) const {
  const auto& var = graph_.variables[j];
  if (var.is_finite()) return TableMessage{VectorXd::Zero(as_index(var.alphabet.size()))};
  return ContinuousMessage::flat(var.dim);
}

// -1/2 ||r_j - x||^2_{Q^r_j} up to a constant.
Message GampEngine::penalty_message(std::size_t j) const {
  const auto& var = graph_.variables[j];
  if (var.is_finite()) {
    VectorXd table = VectorXd::Zero(as_index(var.alphabet.size()));
    if (!state_.r_infinite[j]) {
      for (std::size_t a = 0; a < var.alphabet.size(); ++a) {
        const auto& x = var.alphabet[a];
        table(as_index(a)) = x.dot(state_.r_info[j]) - 0.5 * x.dot(state_.qr_inv[j] * x);
      }
    }
    return TableMessage{table};
  }
  return ContinuousMessage{state_.r_info[j], state_.qr_inv[j], {}};
}

void GampEngine::record_repair() {
  ++diag_.psd_repairs;
  if (!diag_.first_repair_iteration) diag_.first_repair_iteration = state_.t;
}

double GampEngine::repair(double v, double floor) {
  if (!std::isfinite(v)) fail(state_.t, "non-finite variance");
  if (v < floor) {
    if (v < -1e-12) record_repair();
    return floor;
  }
  return v;
}

MatrixXd GampEngine::repair(const MatrixXd& m, double floor) {
  if (m.size() == 1) return MatrixXd::Constant(1, 1, repair(m(0, 0), floor));
  if (!finite(m)) fail(state_.t, "non-finite covariance");
  const MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
  const auto& ev = eig.eigenvalues();
  if (ev.size() == 0 || ev.minCoeff() >= floor) return sym;
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-12 * scale) record_repair();
  const VectorXd clipped = ev.cwiseMax(floor);
  return eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
}

void GampEngine::initialize() {
  const std::size_t n = graph_.num_variables();
  const std::size_t m = graph_.num_factors();
  auto& st = state_;
  st = GampState{};
  diag_ = GampDiagnostics{};
  st.x_hat.resize(n);
  st.qx.resize(n);
  st.r_hat.resize(n);
  st.qr.resize(n);
  st.qr_inv.resize(n);
  st.r_info.resize(n);
  st.r_infinite.assign(n, 1);
  for (std::size_t j = 0; j < n; ++j) {
    const auto d = as_index(graph_.variables[j].dim);
    st.x_hat[j] = VectorXd::Zero(d);
    st.qx[j] = MatrixXd::Zero(d, d);
    st.r_hat[j] = VectorXd::Zero(d);
    st.qr[j] = MatrixXd::Constant(d, d, kInfiniteVariance);
    st.qr_inv[j] = MatrixXd::Zero(d, d);
    st.r_info[j] = VectorXd::Zero(d);
    if (opt_.r_init) {
      const auto& r = (*opt_.r_init)[j];
      const auto& q = (*opt_.qr_init)[j];
      if (r.size() != d || q.rows() != d || q.cols() != d) {
        throw std::invalid_argument("gamp: r_init/qr_init block shape mismatch");
      }
      st.r_infinite[j] = 0;
      st.r_hat[j] = r;
      st.qr[j] = q;
      st.qr_inv[j] = q.inverse();
      st.r_info[j] = st.qr_inv[j] * r;
    }
  }
  st.z_hat.resize(m);
  st.p_hat.resize(m);
  st.s_hat.resize(m);
  st.z0.resize(m);
  st.qp.resize(m);
  st.qs.resize(m);
  st.qz.resize(m);
  st.dz.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto d = as_index(graph_.mixing.z_dim(i));
    st.z_hat[i] = st.p_hat[i] = st.s_hat[i] = st.z0[i] = VectorXd::Zero(d);  // s(-1) = 0
    st.qp[i] = st.qs[i] = st.qz[i] = MatrixXd::Zero(d, d);
  }

  st.to_var.assign(m, {});
  st.from_var.assign(m, {});
  for (std::size_t i = 0; i < m; ++i) {
    const auto& node = graph_.factors[i];
    for (auto j : node.strong) {
      st.to_var[i].push_back(flat_message(j));
      st.from_var[i].push_back(flat_message(j));
    }
    if (opt_.strong_init == GampOptions::StrongInit::standalone && node.handler->z_dim() == 0 &&
        !node.strong.empty()) {
      LocalProblem lp;
      lp.variant = opt_.variant;
      lp.u = opt_.u;
      for (auto j : node.strong) lp.strong_vars.push_back(&graph_.variables[j]);
      lp.incoming = st.from_var[i];
      try {
        auto sol = node.handler->solve(lp);
        for (auto& msg : sol.outgoing) normalize(msg);
        st.to_var[i] = std::move(sol.outgoing);
      } catch (const std::domain_error&) {
        // the factor alone is improper in some direction; start it flat
      }
    }
  }
  prev_x_.clear();
  prev_s_.clear();
}

void GampEngine::variable_update_strong() {
  auto& st = state_;
  kernels::for_each_index(opt_.exec, graph_.num_variables(), [&](std::size_t j) {
    const auto& edges = strong_edges_[j];
    for (const auto& [i, s] : edges) {
      Message acc = penalty_message(j);
      for (const auto& [l, q] : edges)
        if (l != i || q != s) accumulate(acc, st.to_var[l][q]);
      normalize(acc);
      st.from_var[i][s] = std::move(acc);
    }
  });
}

void GampEngine::variable_update_weak() {
  auto& st = state_;
  const bool max_sum = opt_.variant == Variant::max_sum;
  const double u = opt_.u;
  const double floor = opt_.variance_floor;
  prev_x_ = st.x_hat;

  kernels::for_each_index(opt_.exec, graph_.num_variables(), [&](std::size_t j) {
    const auto& var = graph_.variables[j];
    const auto& edges = strong_edges_[j];

    if (var.is_finite()) {
      Message acc = penalty_message(j);
      for (const auto& [l, q] : edges) accumulate(acc, st.to_var[l][q]);
      const VectorXd& t = std::get<TableMessage>(acc).values;
      if (max_sum) {
        Index best = 0;
        for (Index a = 1; a < t.size(); ++a)
          if (t(a) > t(best)) best = a;
        st.x_hat[j] = var.alphabet[static_cast<std::size_t>(best)];
        st.qx[j] = MatrixXd::Zero(as_index(var.dim), as_index(var.dim));
        return;
      }
      const double top = t.maxCoeff();
      double mass = 0.0;
      VectorXd m1 = VectorXd::Zero(as_index(var.dim));
      MatrixXd m2 = MatrixXd::Zero(as_index(var.dim), as_index(var.dim));
      for (Index a = 0; a < t.size(); ++a) {
        const double w = std::exp(u * (t(a) - top));
        const auto& x = var.alphabet[static_cast<std::size_t>(a)];
        mass += w;
        m1 += w * x;
        m2 += w * x * x.transpose();
      }
      st.x_hat[j] = m1 / mass;
      st.qx[j] = u * (m2 / mass - st.x_hat[j] * st.x_hat[j].transpose());
      return;
    }

    // continuous: Gaussian part of the strong messages plus at most one term
    const auto d = as_index(var.dim);
    VectorXd eta = VectorXd::Zero(d);
    MatrixXd prec = MatrixXd::Zero(d, d);
    std::shared_ptr<const LogDensity> term;
    for (const auto& [l, q] : edges) {
      const auto& msg = std::get<ContinuousMessage>(st.to_var[l][q]);
      eta += msg.eta;
      prec += msg.precision;
      for (const auto& t : msg.terms) {
        if (term) fail(st.t, "variable " + std::to_string(j) + " has more than one non-Gaussian strong message");
        term = t;
      }
    }
    const bool only_penalty = eta.isZero(0.0) && prec.isZero(0.0);
    const bool infinite = st.r_infinite[j];

    GaussianEvidence ev = GaussianEvidence::flat_evidence(var.dim);
    if (only_penalty && !infinite) {
      ev = {st.r_hat[j], st.qr[j], false};
    } else if (!only_penalty || !infinite) {
      const MatrixXd p_tot = prec + st.qr_inv[j];
      const VectorXd e_tot = eta + st.r_info[j];
      if (!gaussian_moments(p_tot, e_tot, ev.mean, ev.cov)) {
        if (term) fail(st.t, "variable " + std::to_string(j) + ": singular Gaussian evidence");
        fail(st.t, "variable " + std::to_string(j) + " has an improper marginal");
      }
      ev.flat = false;
    }

    if (!term) {
      if (ev.flat) fail(st.t, "variable " + std::to_string(j) + " has no information");
      st.x_hat[j] = ev.mean;
      st.qx[j] = repair(ev.cov, floor);
      return;
    }
    auto summary = term->combine(ev, opt_.variant, u);
    if (!summary.cov) {
      if (!max_sum) fail(st.t, "sum-product term returned no variance");
      // curvature of Delta_j by central differences
      const MatrixXd p_tot = prec + st.qr_inv[j];
      const VectorXd e_tot = eta + st.r_info[j];
      auto delta = [&](const VectorXd& x) {
        return term->log_value(x) + e_tot.dot(x) - 0.5 * x.dot(p_tot * x);
      };
      const VectorXd& x0 = summary.mean;
      MatrixXd hess(d, d);
      for (Index a = 0; a < d; ++a) {
        for (Index b = a; b < d; ++b) {
          const double ha = 1e-5 * (1.0 + std::abs(x0(a)));
          const double hb = 1e-5 * (1.0 + std::abs(x0(b)));
          VectorXd pp = x0, pm = x0, mp = x0, mm = x0;
          pp(a) += ha; pp(b) += hb;
          pm(a) += ha; pm(b) -= hb;
          mp(a) -= ha; mp(b) += hb;
          mm(a) -= ha; mm(b) -= hb;
          hess(a, b) = hess(b, a) = (delta(pp) - delta(pm) - delta(mp) + delta(mm)) / (4.0 * ha * hb);
        }
      }
      VectorXd unused;
      MatrixXd cov;
      if (!gaussian_moments(-hess, VectorXd::Zero(d), unused, cov)) {
        fail(st.t, "variable " + std::to_string(j) + ": marginal is not strictly concave at its maximizer");
      }
      summary.cov = cov;
    }
    st.x_hat[j] = summary.mean;
    st.qx[j] = repair(*summary.cov, floor);
  });

  for (std::size_t j = 0; j < st.x_hat.size(); ++j) {
    if (!st.x_hat[j].allFinite()) fail(st.t, "non-finite estimate at variable " + std::to_string(j));
  }
  if (opt_.damping > 0.0 && st.t > 0) {
    for (std::size_t j = 0; j < st.x_hat.size(); ++j)
      st.x_hat[j] = (1.0 - opt_.damping) * st.x_hat[j] + opt_.damping * prev_x_[j];
  }
}

void GampEngine::factor_linear_step() {
  auto& st = state_;
  const double floor = opt_.variance_floor;
  if (fast_) {
    const std::size_t n = graph_.num_variables();
    const std::size_t rows = dense_rows_.size();
    std::vector<double> x(n), v(n), z(rows), q(rows);
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = st.x_hat[j](0);
      v[j] = st.qx[j](0, 0);
    }
    dense_.forward_pair(opt_.exec, x, v, z, q);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto i = dense_rows_[r];
      const double qp = repair(q[r], floor);
      st.z_hat[i](0) = z[r];
      st.qp[i](0, 0) = qp;
      st.p_hat[i](0) = z[r] - qp * st.s_hat[i](0);
    }
    return;
  }
  kernels::for_each_index(opt_.exec, graph_.num_factors(), [&](std::size_t i) {
    const auto dz = as_index(graph_.mixing.z_dim(i));
    if (dz == 0) return;
    VectorXd z = VectorXd::Zero(dz);
    MatrixXd q = MatrixXd::Zero(dz, dz);
    for (const auto& [j, a] : graph_.mixing.row(i)) {
      z.noalias() += a * st.x_hat[j];
      q.noalias() += a * st.qx[j] * a.transpose();
    }
    st.z_hat[i] = z;
    st.qp[i] = repair(q, floor);
    st.p_hat[i] = z - st.qp[i] * st.s_hat[i];
  });
}

void GampEngine::factor_update_strong() {
  auto& st = state_;
  kernels::for_each_index(opt_.exec, graph_.num_factors(), [&](std::size_t i) {
    const auto& node = graph_.factors[i];
    if (node.strong.empty() && node.handler->z_dim() == 0) return;
    LocalProblem lp;
    lp.variant = opt_.variant;
    lp.u = opt_.u;
    for (auto j : node.strong) lp.strong_vars.push_back(&graph_.variables[j]);
    lp.incoming = st.from_var[i];
    lp.p_hat = st.p_hat[i];
    lp.qp = st.qp[i];
    auto sol = node.handler->solve(lp);
    if (sol.outgoing.size() != node.strong.size()) {
      throw std::runtime_error("gamp: handler returned the wrong number of messages");
    }
    for (auto& msg : sol.outgoing) normalize(msg);
    st.to_var[i] = std::move(sol.outgoing);
    if (node.handler->z_dim() > 0) {
      st.z0[i] = std::move(sol.z0);
      st.qz[i] = std::move(sol.z_cov);
      st.dz[i] = std::move(sol.dz);
    }
  });
}

void GampEngine::factor_update_weak() {
  auto& st = state_;
  const double floor = opt_.variance_floor;
  prev_s_ = st.s_hat;
  for (std::size_t i = 0; i < graph_.num_factors(); ++i) {
    const auto dz = as_index(graph_.mixing.z_dim(i));
    if (dz == 0) continue;
    if (!st.z0[i].allFinite()) fail(st.t, "non-finite z estimate at factor " + std::to_string(i));
    if (dz == 1) {
      const double qp = st.qp[i](0, 0);
      const double qz = repair(st.qz[i](0, 0), floor);
      st.qz[i](0, 0) = qz;
      st.s_hat[i](0) = (st.z0[i](0) - st.p_hat[i](0)) / qp;
      st.qs[i](0, 0) = repair((1.0 / qp) * (1.0 - qz / qp), 0.0);
      continue;
    }
    st.qz[i] = repair(st.qz[i], floor);
    const Eigen::LDLT<MatrixXd> ldlt(st.qp[i]);
    const MatrixXd qp_inv = ldlt.solve(MatrixXd::Identity(dz, dz));
    st.s_hat[i] = ldlt.solve(st.z0[i] - st.p_hat[i]);
    st.qs[i] = repair(qp_inv - qp_inv * st.qz[i] * qp_inv, 0.0);
  }
  if (opt_.damping > 0.0 && st.t > 0) {
    for (std::size_t i = 0; i < st.s_hat.size(); ++i)
      st.s_hat[i] = (1.0 - opt_.damping) * st.s_hat[i] + opt_.damping * prev_s_[i];
  }
}

void GampEngine::variable_linear_step() {
  auto& st = state_;
  const double sign = opt_.fault == GampOptions::Fault::flip_r_update_sign ? -1.0 : 1.0;
  const std::size_t n = graph_.num_variables();
  if (fast_) {
    const std::size_t rows = dense_rows_.size();
    std::vector<double> s(rows), w(rows), g(n), prec(n);
    for (std::size_t r = 0; r < rows; ++r) {
      s[r] = st.s_hat[dense_rows_[r]](0);
      w[r] = st.qs[dense_rows_[r]](0, 0);
    }
    dense_.adjoint_pair(opt_.exec, s, w, g, prec);
    for (std::size_t j = 0; j < n; ++j) {
      if (prec[j] == 0.0) {
        st.r_infinite[j] = 1;
        st.qr[j](0, 0) = kInfiniteVariance;
        st.qr_inv[j](0, 0) = 0.0;
        st.r_info[j](0) = 0.0;
        st.r_hat[j] = st.x_hat[j];
        continue;
      }
      const double qr = 1.0 / prec[j];
      st.r_infinite[j] = 0;
      st.qr[j](0, 0) = qr;
      st.qr_inv[j](0, 0) = prec[j];
      st.r_hat[j](0) = st.x_hat[j](0) + sign * qr * g[j];
      st.r_info[j](0) = prec[j] * st.x_hat[j](0) + sign * g[j];
    }
    return;
  }
  kernels::for_each_index(opt_.exec, n, [&](std::size_t j) {
    const auto d = as_index(graph_.variables[j].dim);
    MatrixXd prec = MatrixXd::Zero(d, d);
    VectorXd g = VectorXd::Zero(d);
    for (auto i : adj_.weak[j]) {
      const auto& a = *graph_.mixing.block(i, j);
      prec.noalias() += a.transpose() * st.qs[i] * a;
      g.noalias() += a.transpose() * st.s_hat[i];
    }
    if (prec.isZero(0.0)) {
      st.r_infinite[j] = 1;
      st.qr[j] = MatrixXd::Constant(d, d, kInfiniteVariance);
      st.qr_inv[j].setZero();
      st.r_info[j].setZero();
      st.r_hat[j] = st.x_hat[j];
      return;
    }
    prec = 0.5 * (prec + prec.transpose());
    st.r_infinite[j] = 0;
    st.qr_inv[j] = prec;
    st.r_info[j] = prec * st.x_hat[j] + sign * g;
    if (d == 1) {
      st.qr[j](0, 0) = 1.0 / prec(0, 0);
    } else {
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(prec);
      st.qr[j] = cod.pseudoInverse();
    }
    st.r_hat[j] = st.x_hat[j] + sign * st.qr[j] * g;
  });
}

void GampEngine::iterate() {
  variable_update_strong();
  variable_update_weak();
  double change = 0.0;
  for (std::size_t j = 0; j < state_.x_hat.size(); ++j) {
    if (state_.x_hat[j].size() > 0)
      change = std::max(change, (state_.x_hat[j] - prev_x_[j]).cwiseAbs().maxCoeff());
  }
  diag_.last_change = change;
  factor_linear_step();
  factor_update_strong();
  factor_update_weak();
  variable_linear_step();
  ++state_.t;
  diag_.iterations = state_.t;
}

VectorXd GampEngine::stacked_x() const {
  return BlockVector{state_.x_hat}.flatten();
}

GampResult gamp_run(const FactorGraph& graph, const GampOptions& options) {
  GampEngine engine(graph, options);
  GampResult res;
  for (std::size_t t = 0; t < options.iters; ++t) {
    engine.iterate();
    res.trajectory.push_back(engine.stacked_x());
    if (options.tolerance > 0.0 && t > 0 &&
        engine.diagnostics().last_change < options.tolerance) {
      res.diagnostics.converged = true;
      break;
    }
  }
  const bool converged = res.diagnostics.converged;
  res.state = engine.state();
  res.x_hat = res.state.x_hat;
  res.qx = res.state.qx;
  res.z_hat = res.state.z_hat;
  res.diagnostics = engine.diagnostics();
  res.diagnostics.converged = converged;
  return res;
}

}  // namespace hgamp
