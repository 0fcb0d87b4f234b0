#include "hgamp/bp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hgamp/factors.hpp"

namespace hgamp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index as_index(std::size_t v) { return static_cast<Index>(v); }

// Full neighborhood of a factor: strong neighbors in slot order, then weak
// neighbors that are not also strong.
std::vector<std::size_t> neighborhood(const FactorGraph& g, std::size_t i) {
  std::vector<std::size_t> out = g.factors[i].strong;
  for (const auto& [j, blk] : g.mixing.row(i)) {
    if (std::find(out.begin(), out.end(), j) == out.end()) out.push_back(j);
  }
  return out;
}

bool all_finite(const FactorGraph& g) {
  return std::all_of(g.variables.begin(), g.variables.end(),
                     [](const VariableSpec& v) { return v.is_finite(); });
}

bool all_gaussian(const FactorGraph& g) {
  if (std::any_of(g.variables.begin(), g.variables.end(),
                  [](const VariableSpec& v) { return v.is_finite(); })) {
    return false;
  }
  return std::all_of(g.factors.begin(), g.factors.end(),
                     [](const FactorNode& f) { return f.handler->quadratic_form().has_value(); });
}

void check_graph(const FactorGraph& g) {
  const auto report = validate_graph(g);
  for (const auto& issue : report.issues) {
    // overlapping edges are fine for BP, which sees the full neighborhood
    if (issue.kind != ValidationIssue::Kind::overlap) {
      throw std::invalid_argument("bp: invalid graph: " + issue.message);
    }
  }
}

double reduce(const std::vector<double>& vals, Variant variant, double u) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : vals) top = std::max(top, v);
  if (variant == Variant::max_sum || !std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : vals) acc += std::exp(u * (v - top));
  return top + std::log(acc) / u;
}

VectorXd table_estimate(const VariableSpec& var, const VectorXd& delta, Variant variant,
                        double u) {
  if (variant == Variant::max_sum) {
    Index best = 0;
    for (Index a = 1; a < delta.size(); ++a)
      if (delta(a) > delta(best)) best = a;
    return var.alphabet[static_cast<std::size_t>(best)];
  }
  const double top = delta.maxCoeff();
  VectorXd mean = VectorXd::Zero(as_index(var.dim));
  double mass = 0.0;
  for (Index a = 0; a < delta.size(); ++a) {
    const double w = std::exp(u * (delta(a) - top));
    mass += w;
    mean += w * var.alphabet[static_cast<std::size_t>(a)];
  }
  return mean / mass;
}

void normalize_table(VectorXd& t) {
  if (t.size() > 0) t.array() -= t.maxCoeff();
}

// Joint-state iteration helper over a list of alphabet sizes.
struct Odometer {
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> idx;
  explicit Odometer(std::vector<std::size_t> s) : sizes(std::move(s)), idx(sizes.size(), 0) {}
  void next() {
    for (std::size_t r = 0; r < sizes.size(); ++r) {
      if (++idx[r] < sizes[r]) return;
      idx[r] = 0;
    }
  }
};

std::size_t checked_product(const std::vector<std::size_t>& sizes, std::size_t cap) {
  std::size_t total = 1;
  for (auto s : sizes) {
    if (s == 0 || total > cap / s) throw std::length_error("bp: enumeration cap exceeded");
    total *= s;
  }
  return total;
}

// f_i over the joint states of its neighborhood.
VectorXd factor_table(const FactorGraph& g, std::size_t i, const std::vector<std::size_t>& nbrs,
                      std::size_t cap) {
  std::vector<std::size_t> sizes;
  for (auto j : nbrs) sizes.push_back(g.variables[j].alphabet.size());
  const std::size_t states = checked_product(sizes, cap);
  const auto& node = g.factors[i];
  const auto& row = g.mixing.row(i);
  VectorXd table(as_index(states));
  Odometer od(sizes);
  std::vector<VectorXd> xa(node.strong.size());
  for (std::size_t a = 0; a < states; ++a) {
    VectorXd z = VectorXd::Zero(as_index(g.mixing.z_dim(i)));
    for (std::size_t s = 0; s < nbrs.size(); ++s) {
      const auto j = nbrs[s];
      const auto& val = g.variables[j].alphabet[od.idx[s]];
      if (s < node.strong.size()) xa[s] = val;
      if (auto it = row.find(j); it != row.end()) z += it->second * val;
    }
    table(as_index(a)) = node.handler->evaluate(xa, z);
    od.next();
  }
  return table;
}

BpResult run_finite(const FactorGraph& g, const BpOptions& opt) {
  const std::size_t nf = g.factors.size();
  const std::size_t nv = g.variables.size();
  std::vector<std::vector<std::size_t>> nbrs(nf);
  std::vector<VectorXd> tables(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    nbrs[i] = neighborhood(g, i);
    tables[i] = factor_table(g, i, nbrs[i], opt.enumeration_cap);
  }
  // edges of variable j as (factor, slot)
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> var_edges(nv);
  for (std::size_t i = 0; i < nf; ++i)
    for (std::size_t s = 0; s < nbrs[i].size(); ++s) var_edges[nbrs[i][s]].push_back({i, s});

  auto zero_tables = [&] {
    std::vector<std::vector<VectorXd>> m(nf);
    for (std::size_t i = 0; i < nf; ++i)
      for (auto j : nbrs[i]) m[i].push_back(VectorXd::Zero(as_index(g.variables[j].alphabet.size())));
    return m;
  };
  auto to_var = zero_tables();    // Delta_{i->j}
  auto from_var = zero_tables();  // Delta_{i<-j}
  auto next = to_var;

  BpResult res;
  for (std::size_t t = 0; t < opt.iters; ++t) {
    kernels::for_each_index(opt.exec, nf, [&](std::size_t i) {
      const auto& nb = nbrs[i];
      std::vector<std::size_t> sizes;
      for (auto j : nb) sizes.push_back(g.variables[j].alphabet.size());
      const auto states = static_cast<std::size_t>(tables[i].size());
      for (std::size_t s = 0; s < nb.size(); ++s) {
        std::vector<std::vector<double>> buckets(sizes[s]);
        Odometer od(sizes);
        for (std::size_t a = 0; a < states; ++a) {
          double v = tables[i](as_index(a));
          for (std::size_t r = 0; r < nb.size(); ++r)
            if (r != s) v += from_var[i][r](as_index(od.idx[r]));
          buckets[od.idx[s]].push_back(v);
          od.next();
        }
        VectorXd out(as_index(sizes[s]));
        for (std::size_t v = 0; v < sizes[s]; ++v)
          out(as_index(v)) = reduce(buckets[v], opt.variant, opt.u);
        normalize_table(out);
        next[i][s] = std::move(out);
      }
    });
    double change = 0.0;
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t s = 0; s < nbrs[i].size(); ++s)
        change = std::max(change, distance_up_to_constant(TableMessage{next[i][s]},
                                                          TableMessage{to_var[i][s]}));
    std::swap(to_var, next);

    kernels::for_each_index(opt.exec, nv, [&](std::size_t j) {
      for (const auto& [i, s] : var_edges[j]) {
        VectorXd acc = VectorXd::Zero(as_index(g.variables[j].alphabet.size()));
        for (const auto& [l, q] : var_edges[j])
          if (l != i) acc += to_var[l][q];
        normalize_table(acc);
        from_var[i][s] = std::move(acc);
      }
    });
    res.iterations = t + 1;
    res.last_change = change;
    if (t > 0 && change <= opt.tolerance) {
      res.converged = true;
      break;
    }
  }

  for (std::size_t j = 0; j < nv; ++j) {
    VectorXd delta = VectorXd::Zero(as_index(g.variables[j].alphabet.size()));
    for (const auto& [i, s] : var_edges[j]) delta += to_var[i][s];
    normalize_table(delta);
    res.x_hat.push_back(table_estimate(g.variables[j], delta, opt.variant, opt.u));
    res.marginals.emplace_back(TableMessage{delta});
  }
  return res;
}

// Quadratic form of factor i in the coordinates of its neighborhood blocks.
QuadraticForm local_quadratic(const FactorGraph& g, std::size_t i,
                              const std::vector<std::size_t>& nbrs) {
  const auto& node = g.factors[i];
  const auto qf = *node.handler->quadratic_form();
  std::vector<Index> offset(nbrs.size() + 1, 0);
  for (std::size_t s = 0; s < nbrs.size(); ++s)
    offset[s + 1] = offset[s] + as_index(g.variables[nbrs[s]].dim);
  Index wdim = as_index(g.mixing.z_dim(i));
  for (auto j : node.strong) wdim += as_index(g.variables[j].dim);
  MatrixXd t = MatrixXd::Zero(wdim, offset.back());
  Index at = 0;
  for (std::size_t s = 0; s < node.strong.size(); ++s) {
    const Index d = as_index(g.variables[node.strong[s]].dim);
    t.block(at, offset[s], d, d).setIdentity();
    at += d;
  }
  for (const auto& [j, blk] : g.mixing.row(i)) {
    const auto s = static_cast<std::size_t>(std::find(nbrs.begin(), nbrs.end(), j) - nbrs.begin());
    t.block(at, offset[s], blk.rows(), blk.cols()) += blk;
  }
  return {t.transpose() * qf.j * t, t.transpose() * qf.h};
}

BpResult run_gaussian(const FactorGraph& g, const BpOptions& opt) {
  const std::size_t nf = g.factors.size();
  const std::size_t nv = g.variables.size();
  std::vector<std::vector<std::size_t>> nbrs(nf);
  std::vector<std::vector<Index>> offsets(nf);
  std::vector<QuadraticForm> forms(nf);
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> var_edges(nv);
  for (std::size_t i = 0; i < nf; ++i) {
    nbrs[i] = neighborhood(g, i);
    forms[i] = local_quadratic(g, i, nbrs[i]);
    offsets[i].assign(nbrs[i].size() + 1, 0);
    for (std::size_t s = 0; s < nbrs[i].size(); ++s) {
      offsets[i][s + 1] = offsets[i][s] + as_index(g.variables[nbrs[i][s]].dim);
      var_edges[nbrs[i][s]].push_back({i, s});
    }
  }
  std::vector<std::vector<ContinuousMessage>> to_var(nf), from_var(nf);
  for (std::size_t i = 0; i < nf; ++i)
    for (auto j : nbrs[i]) {
      to_var[i].push_back(ContinuousMessage::flat(g.variables[j].dim));
      from_var[i].push_back(ContinuousMessage::flat(g.variables[j].dim));
    }
  auto next = to_var;

  BpResult res;
  for (std::size_t t = 0; t < opt.iters; ++t) {
    kernels::for_each_index(opt.exec, nf, [&](std::size_t i) {
      for (std::size_t s = 0; s < nbrs[i].size(); ++s) {
        MatrixXd m = forms[i].j;
        VectorXd b = forms[i].h;
        for (std::size_t r = 0; r < nbrs[i].size(); ++r) {
          if (r == s) continue;
          const Index o = offsets[i][r];
          const Index d = offsets[i][r + 1] - o;
          m.block(o, o, d, d) += from_var[i][r].precision;
          b.segment(o, d) += from_var[i][r].eta;
        }
        const auto marg = marginalize_quadratic(m, b, offsets[i][s],
                                                offsets[i][s + 1] - offsets[i][s], true);
        next[i][s] = ContinuousMessage{marg.eta, marg.precision, {}};
      }
    });
    double change = 0.0;
    for (std::size_t i = 0; i < nf; ++i)
      for (std::size_t s = 0; s < nbrs[i].size(); ++s)
        change = std::max(change, distance_up_to_constant(next[i][s], to_var[i][s]));
    std::swap(to_var, next);

    kernels::for_each_index(opt.exec, nv, [&](std::size_t j) {
      for (const auto& [i, s] : var_edges[j]) {
        auto acc = ContinuousMessage::flat(g.variables[j].dim);
        for (const auto& [l, q] : var_edges[j]) {
          if (l == i) continue;
          acc.eta += to_var[l][q].eta;
          acc.precision += to_var[l][q].precision;
        }
        from_var[i][s] = std::move(acc);
      }
    });
    res.iterations = t + 1;
    res.last_change = change;
    if (t > 0 && change <= opt.tolerance) {
      res.converged = true;
      break;
    }
  }

  for (std::size_t j = 0; j < nv; ++j) {
    auto delta = ContinuousMessage::flat(g.variables[j].dim);
    for (const auto& [i, s] : var_edges[j]) {
      delta.eta += to_var[i][s].eta;
      delta.precision += to_var[i][s].precision;
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(delta.precision);
    res.x_hat.push_back(cod.solve(delta.eta));
    res.marginals.emplace_back(std::move(delta));
  }
  return res;
}

struct GlobalQuadratic {
  MatrixXd j;
  VectorXd h;
  std::vector<Index> offset;
};

GlobalQuadratic assemble(const FactorGraph& g) {
  GlobalQuadratic q;
  q.offset.assign(g.variables.size() + 1, 0);
  for (std::size_t j = 0; j < g.variables.size(); ++j)
    q.offset[j + 1] = q.offset[j] + as_index(g.variables[j].dim);
  const Index n = q.offset.back();
  q.j = MatrixXd::Zero(n, n);
  q.h = VectorXd::Zero(n);
  for (std::size_t i = 0; i < g.factors.size(); ++i) {
    const auto nb = neighborhood(g, i);
    const auto local = local_quadratic(g, i, nb);
    Index la = 0;
    for (std::size_t s = 0; s < nb.size(); ++s) {
      const Index da = as_index(g.variables[nb[s]].dim);
      q.h.segment(q.offset[nb[s]], da) += local.h.segment(la, da);
      Index lb = 0;
      for (std::size_t r = 0; r < nb.size(); ++r) {
        const Index db = as_index(g.variables[nb[r]].dim);
        q.j.block(q.offset[nb[s]], q.offset[nb[r]], da, db) += local.j.block(la, lb, da, db);
        lb += db;
      }
      la += da;
    }
  }
  return q;
}

ExactSolution gaussian_exact(const FactorGraph& g) {
  const auto q = assemble(g);
  Eigen::LDLT<MatrixXd> ldlt(q.j);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    throw std::domain_error("brute force: Gaussian model is not proper");
  }
  const VectorXd mean = ldlt.solve(q.h);
  const MatrixXd cov = ldlt.solve(MatrixXd::Identity(q.j.rows(), q.j.cols()));
  ExactSolution out;
  for (std::size_t j = 0; j < g.variables.size(); ++j) {
    const Index o = q.offset[j];
    const Index d = q.offset[j + 1] - o;
    const VectorXd mj = mean.segment(o, d);
    const MatrixXd prec = cov.block(o, o, d, d).inverse();
    out.x_hat.push_back(mj);
    out.marginals.emplace_back(ContinuousMessage{prec * mj, prec, {}});
  }
  out.z_hat = apply_mixing(g.mixing, BlockVector{out.x_hat});
  out.objective = g.objective(out.x_hat);
  return out;
}

template <class Visit>
void enumerate_all(const FactorGraph& g, std::size_t cap, Visit&& visit) {
  std::vector<std::size_t> sizes;
  for (const auto& v : g.variables) sizes.push_back(v.alphabet.size());
  const std::size_t states = checked_product(sizes, cap);
  Odometer od(sizes);
  std::vector<VectorXd> x(g.variables.size());
  for (std::size_t a = 0; a < states; ++a) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = g.variables[j].alphabet[od.idx[j]];
    visit(od.idx, x, g.objective(x));
    od.next();
  }
}

}  // namespace

BpResult bp_run(const FactorGraph& graph, const BpOptions& options) {
  if (!(options.u > 0.0)) throw std::invalid_argument("bp: u must be positive");
  check_graph(graph);
  if (all_finite(graph)) return run_finite(graph, options);
  if (all_gaussian(graph)) return run_gaussian(graph, options);
  throw std::invalid_argument(
      "bp: variables must all be finite, or all continuous with Gaussian factors");
}

ExactSolution brute_force_map(const FactorGraph& graph, std::size_t cap) {
  check_graph(graph);
  if (all_gaussian(graph)) return gaussian_exact(graph);
  if (!all_finite(graph)) throw std::invalid_argument("brute force: unsupported variable domain");
  std::vector<VectorXd> tables;
  for (const auto& v : graph.variables)
    tables.push_back(VectorXd::Constant(as_index(v.alphabet.size()),
                                        -std::numeric_limits<double>::infinity()));
  double best = -std::numeric_limits<double>::infinity();
  std::vector<VectorXd> arg;
  enumerate_all(graph, cap, [&](const std::vector<std::size_t>& idx,
                                const std::vector<VectorXd>& x, double f) {
    for (std::size_t j = 0; j < idx.size(); ++j)
      tables[j](as_index(idx[j])) = std::max(tables[j](as_index(idx[j])), f);
    if (f > best) {
      best = f;
      arg = x;
    }
  });
  ExactSolution out;
  out.x_hat = arg;
  out.objective = best;
  out.z_hat = apply_mixing(graph.mixing, BlockVector{arg});
  for (auto& t : tables) {
    normalize_table(t);
    out.marginals.emplace_back(TableMessage{t});
  }
  return out;
}

ExactSolution brute_force_marginals(const FactorGraph& graph, double u, std::size_t cap) {
  if (!(u > 0.0)) throw std::invalid_argument("brute force: u must be positive");
  check_graph(graph);
  if (all_gaussian(graph)) return gaussian_exact(graph);
  if (!all_finite(graph)) throw std::invalid_argument("brute force: unsupported variable domain");
  // two passes: the max for a stable log-sum-exp, then the sums
  double top = -std::numeric_limits<double>::infinity();
  enumerate_all(graph, cap, [&](const auto&, const auto&, double f) { top = std::max(top, f); });
  std::vector<VectorXd> mass;
  for (const auto& v : graph.variables) mass.push_back(VectorXd::Zero(as_index(v.alphabet.size())));
  enumerate_all(graph, cap, [&](const std::vector<std::size_t>& idx, const auto&, double f) {
    const double w = std::exp(u * (f - top));
    for (std::size_t j = 0; j < idx.size(); ++j) mass[j](as_index(idx[j])) += w;
  });
  ExactSolution out;
  for (std::size_t j = 0; j < graph.variables.size(); ++j) {
    VectorXd delta = mass[j].array().log() / u;
    normalize_table(delta);
    out.x_hat.push_back(table_estimate(graph.variables[j], delta, Variant::sum_product, u));
    out.marginals.emplace_back(TableMessage{delta});
  }
  out.z_hat = apply_mixing(graph.mixing, BlockVector{out.x_hat});
  return out;
}

}  // namespace hgamp
