#include "hgamp/graph.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace hgamp {

VariableSpec VariableSpec::continuous(std::size_t dim) { return VariableSpec{dim, {}}; }

VariableSpec VariableSpec::finite(std::vector<double> scalar_values) {
  if (scalar_values.empty()) throw std::invalid_argument("finite variable needs an alphabet");
  VariableSpec v;
  v.dim = 1;
  for (double a : scalar_values) v.alphabet.push_back(Eigen::VectorXd::Constant(1, a));
  return v;
}

std::size_t BlockVector::total_dim() const {
  std::size_t d = 0;
  for (const auto& b : blocks) d += static_cast<std::size_t>(b.size());
  return d;
}

Eigen::VectorXd BlockVector::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(total_dim()));
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.segment(at, b.size()) = b;
    at += b.size();
  }
  return out;
}

LinearMixing::LinearMixing(std::vector<std::size_t> z_dims, std::vector<std::size_t> x_dims)
    : z_dims_(std::move(z_dims)), x_dims_(std::move(x_dims)), rows_(z_dims_.size()) {}

LinearMixing LinearMixing::dense_scalar(const Eigen::MatrixXd& a) {
  LinearMixing mix(std::vector<std::size_t>(static_cast<std::size_t>(a.rows()), 1),
                   std::vector<std::size_t>(static_cast<std::size_t>(a.cols()), 1));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) != 0.0) {
        mix.rows_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            Eigen::MatrixXd::Constant(1, 1, a(i, j));
      }
    }
  }
  return mix;
}

void LinearMixing::set_block(std::size_t i, std::size_t j, Eigen::MatrixXd block) {
  if (i >= rows_.size()) throw std::out_of_range("set_block: factor index out of range");
  rows_[i][j] = std::move(block);
}

void LinearMixing::remove_block(std::size_t i, std::size_t j) {
  if (i >= rows_.size()) throw std::out_of_range("remove_block: factor index out of range");
  rows_[i].erase(j);
}

const Eigen::MatrixXd* LinearMixing::block(std::size_t i, std::size_t j) const {
  if (i >= rows_.size()) return nullptr;
  auto it = rows_[i].find(j);
  return it == rows_[i].end() ? nullptr : &it->second;
}

std::vector<std::size_t> LinearMixing::weak(std::size_t i) const {
  std::vector<std::size_t> out;
  for (const auto& [j, blk] : rows_.at(i)) out.push_back(j);
  return out;
}

bool LinearMixing::is_scalar() const {
  for (auto d : x_dims_)
    if (d != 1) return false;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (z_dims_[i] > 1) return false;
    for (const auto& [j, blk] : rows_[i]) {
      if (j >= x_dims_.size() || blk.rows() != 1 || blk.cols() != 1) return false;
    }
  }
  return true;
}

Eigen::MatrixXd LinearMixing::scalar_matrix(std::vector<std::size_t>* row_factor) const {
  if (!is_scalar()) throw std::logic_error("scalar_matrix: mixing has non-scalar blocks");
  std::vector<std::size_t> map;
  for (std::size_t i = 0; i < rows_.size(); ++i)
    if (z_dims_[i] == 1) map.push_back(i);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(map.size()),
                                            static_cast<Eigen::Index>(x_dims_.size()));
  for (std::size_t r = 0; r < map.size(); ++r) {
    for (const auto& [j, blk] : rows_[map[r]]) {
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = blk(0, 0);
    }
  }
  if (row_factor) *row_factor = std::move(map);
  return a;
}

Adjacency FactorGraph::adjacency() const {
  Adjacency adj;
  const std::size_t n = variables.size();
  adj.strong.resize(n);
  adj.weak.resize(n);
  for (std::size_t i = 0; i < factors.size(); ++i) {
    for (auto j : factors[i].strong)
      if (j < n) adj.strong[j].push_back(i);
  }
  for (std::size_t i = 0; i < mixing.rows(); ++i) {
    for (const auto& [j, blk] : mixing.row(i))
      if (j < n) adj.weak[j].push_back(i);
  }
  return adj;
}

double FactorGraph::objective(std::span<const Eigen::VectorXd> x) const {
  if (x.size() != variables.size()) throw std::invalid_argument("objective: wrong block count");
  BlockVector xb{{x.begin(), x.end()}};
  const auto z = apply_mixing(mixing, xb);
  double total = 0.0;
  std::vector<Eigen::VectorXd> local;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    local.clear();
    for (auto j : factors[i].strong) local.push_back(x[j]);
    total += factors[i].handler->evaluate(local, z.blocks[i]);
  }
  return total;
}

const char* to_string(ValidationIssue::Kind kind) {
  switch (kind) {
    case ValidationIssue::Kind::overlap: return "overlap";
    case ValidationIssue::Kind::shape_mismatch: return "shape-mismatch";
    case ValidationIssue::Kind::dangling_index: return "dangling-index";
    case ValidationIssue::Kind::handler_mismatch: return "handler-mismatch";
  }
  return "?";
}

bool ValidationReport::has(ValidationIssue::Kind kind) const {
  return std::any_of(issues.begin(), issues.end(),
                     [kind](const ValidationIssue& v) { return v.kind == kind; });
}

ValidationReport validate_graph(const FactorGraph& g) {
  using Kind = ValidationIssue::Kind;
  ValidationReport report;
  auto flag = [&](Kind kind, std::size_t i, std::size_t j, const std::string& msg) {
    report.issues.push_back({kind, i, j, msg});
  };
  const std::size_t n = g.variables.size();
  const auto& mix = g.mixing;

  if (mix.rows() != g.factors.size()) {
    flag(Kind::shape_mismatch, 0, 0, "mixing has a different number of z blocks than factors");
  }
  if (mix.cols() != n) {
    flag(Kind::shape_mismatch, 0, 0, "mixing has a different number of x blocks than variables");
  }
  for (std::size_t j = 0; j < n && j < mix.cols(); ++j) {
    if (mix.x_dim(j) != g.variables[j].dim) {
      flag(Kind::shape_mismatch, 0, j, "x block dimension differs from the variable dimension");
    }
  }

  for (std::size_t i = 0; i < g.factors.size(); ++i) {
    const auto& f = g.factors[i];
    for (auto j : f.strong) {
      if (j >= n) flag(Kind::dangling_index, i, j, "strong neighbor index out of range");
    }
    if (!f.handler) {
      flag(Kind::handler_mismatch, i, 0, "factor has no handler");
    } else {
      if (f.handler->strong_degree() != f.strong.size()) {
        flag(Kind::handler_mismatch, i, 0, "handler degree differs from |alpha(i)|");
      } else {
        const auto dims = f.handler->strong_dims();
        for (std::size_t s = 0; s < f.strong.size(); ++s) {
          const auto j = f.strong[s];
          if (j < n && dims[s] != g.variables[j].dim) {
            flag(Kind::handler_mismatch, i, j, "handler slot dimension differs from variable");
          }
        }
      }
      if (i < mix.rows() && f.handler->z_dim() != mix.z_dim(i)) {
        flag(Kind::handler_mismatch, i, 0, "handler z dimension differs from the mixing");
      }
    }
    if (i >= mix.rows()) continue;
    for (const auto& [j, blk] : mix.row(i)) {
      if (j >= n || j >= mix.cols()) {
        flag(Kind::dangling_index, i, j, "weak neighbor index out of range");
        continue;
      }
      if (static_cast<std::size_t>(blk.rows()) != mix.z_dim(i) ||
          static_cast<std::size_t>(blk.cols()) != mix.x_dim(j)) {
        std::ostringstream os;
        os << "A_" << i << "," << j << " is " << blk.rows() << "x" << blk.cols() << ", expected "
           << mix.z_dim(i) << "x" << mix.x_dim(j);
        flag(Kind::shape_mismatch, i, j, os.str());
      }
      if (std::find(f.strong.begin(), f.strong.end(), j) != f.strong.end()) {
        flag(Kind::overlap, i, j, "variable is both a strong and a weak neighbor");
      }
    }
  }
  return report;
}

FactorGraph normalize_overlap(const FactorGraph& graph, std::size_t factor, std::size_t variable) {
  if (factor >= graph.factors.size()) throw std::invalid_argument("normalize_overlap: bad factor");
  const auto& node = graph.factors[factor];
  const auto it = std::find(node.strong.begin(), node.strong.end(), variable);
  const auto* blk = graph.mixing.block(factor, variable);
  if (it == node.strong.end() || blk == nullptr) {
    throw std::invalid_argument("normalize_overlap: edge is not overlapping");
  }
  FactorGraph out = graph;
  const auto slot = static_cast<std::size_t>(it - node.strong.begin());
  out.factors[factor].handler = node.handler->absorb_linear_term(node.handler, slot, *blk);
  out.mixing.remove_block(factor, variable);
  return out;
}

BlockVector apply_mixing(const LinearMixing& mixing, const BlockVector& x) {
  if (x.blocks.size() != mixing.cols()) throw std::invalid_argument("apply_mixing: block count");
  for (std::size_t j = 0; j < x.blocks.size(); ++j) {
    if (static_cast<std::size_t>(x.blocks[j].size()) != mixing.x_dim(j)) {
      throw std::invalid_argument("apply_mixing: block dimension mismatch");
    }
  }
  BlockVector z;
  z.blocks.reserve(mixing.rows());
  for (std::size_t i = 0; i < mixing.rows(); ++i) {
    Eigen::VectorXd zi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mixing.z_dim(i)));
    for (const auto& [j, blk] : mixing.row(i)) {
      if (j >= x.blocks.size() || blk.rows() != zi.size() || blk.cols() != x.blocks[j].size()) {
        throw std::invalid_argument("apply_mixing: block shape mismatch");
      }
      zi.noalias() += blk * x.blocks[j];
    }
    z.blocks.push_back(std::move(zi));
  }
  return z;
}

}  // namespace hgamp
