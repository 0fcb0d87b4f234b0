#include "hgamp/problem_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "hgamp/factors.hpp"

namespace hgamp {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

VectorXd to_vector(const json& j, const char* what) {
  if (!j.is_array()) throw std::invalid_argument(std::string("problem: ") + what + " must be an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  return v;
}

MatrixXd to_matrix(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::invalid_argument(std::string("problem: ") + what + " must be a nonempty array of rows");
  const std::size_t cols = j[0].size();
  MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != cols) throw std::invalid_argument(std::string("problem: ragged rows in ") + what);
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

json from_vector(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

GroupProblem parse_group(const json& j) {
  GroupProblem p;
  p.model.a = to_matrix(j.at("A"), "A");
  p.y = to_vector(j.at("y"), "y");
  p.model.groups = j.at("groups").get<std::vector<std::vector<std::size_t>>>();
  p.model.rho = j.value("rho", 0.1);
  p.model.prior = SpikeSlabPrior{j.value("active_mean", 0.0), j.value("active_var", 1.0)};
  p.model.channel = AwgnChannel{j.at("noise_var").get<double>()};
  p.iters = j.value("iters", std::size_t{20});
  if (j.contains("x_true")) p.x_true = to_vector(j.at("x_true"), "x_true");
  p.model.validate();
  if (static_cast<std::size_t>(p.y.size()) != p.model.m())
    throw std::invalid_argument("problem: y length differs from rows of A");
  if (p.x_true && static_cast<std::size_t>(p.x_true->size()) != p.model.n())
    throw std::invalid_argument("problem: x_true length differs from columns of A");
  return p;
}

GraphProblem parse_graph(const json& top) {
  const json& j = top.at("graph");
  GraphProblem p;
  std::vector<std::size_t> x_dims;
  for (const auto& v : j.at("variables")) {
    if (v.contains("alphabet")) {
      p.graph.variables.push_back(VariableSpec::finite(v.at("alphabet").get<std::vector<double>>()));
    } else {
      p.graph.variables.push_back(VariableSpec::continuous(v.at("dim").get<std::size_t>()));
    }
    x_dims.push_back(p.graph.variables.back().dim);
  }
  std::vector<std::size_t> z_dims;
  for (const auto& f : j.at("factors")) {
    const auto kind = f.at("kind").get<std::string>();
    FactorNode node;
    if (kind == "gaussian_prior") {
      node.handler = gaussian_prior(to_vector(f.at("mean"), "mean"), to_matrix(f.at("cov"), "cov"));
      node.strong = {f.at("var").get<std::size_t>()};
    } else if (kind == "awgn_output") {
      node.handler = std::make_shared<AwgnOutputFactor>(f.at("y").get<double>(),
                                                        AwgnChannel{f.at("noise_var").get<double>()});
    } else if (kind == "spike_slab_prior") {
      node.handler = std::make_shared<SpikeSlabPriorFactor>(
          f.at("rho").get<double>(),
          SpikeSlabPrior{f.value("active_mean", 0.0), f.value("active_var", 1.0)});
      node.strong = {f.at("var").get<std::size_t>()};
    } else if (kind == "gaussian") {
      node.strong = f.value("strong", std::vector<std::size_t>{});
      node.handler = std::make_shared<GaussianFactor>(
          f.value("strong_dims", std::vector<std::size_t>(node.strong.size(), 1)),
          f.value("z_dim", std::size_t{0}), to_matrix(f.at("J"), "J"), to_vector(f.at("h"), "h"));
    } else {
      throw std::invalid_argument("problem: unknown factor kind '" + kind + "'");
    }
    z_dims.push_back(node.handler->z_dim());
    p.graph.factors.push_back(std::move(node));
  }
  p.graph.mixing = LinearMixing(z_dims, x_dims);
  if (j.contains("mixing")) {
    for (const auto& b : j.at("mixing"))
      p.graph.mixing.set_block(b.at("factor").get<std::size_t>(), b.at("var").get<std::size_t>(),
                               to_matrix(b.at("block"), "block"));
  }
  const auto variant = top.value("variant", std::string("sum_product"));
  if (variant == "sum_product") p.options.variant = Variant::sum_product;
  else if (variant == "max_sum") p.options.variant = Variant::max_sum;
  else throw std::invalid_argument("problem: unknown variant '" + variant + "'");
  p.options.u = top.value("u", 1.0);
  p.options.iters = top.value("iters", std::size_t{20});
  p.options.validate();
  const auto report = validate_graph(p.graph);
  if (!report.ok()) {
    const auto& issue = report.issues.front();
    throw std::invalid_argument("problem: invalid graph: " + std::string(to_string(issue.kind)) + ": " + issue.message);
  }
  return p;
}

}  // namespace

ProblemFile parse_problem(const std::string& text) {
  const json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("problem: expected a JSON object");
  ProblemFile out;
  try {
    if (j.contains("graph")) out.graph = parse_graph(j);
    else out.group = parse_group(j);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("problem: ") + e.what());
  }
  return out;
}

ProblemFile load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

std::string group_problem_json(const SyntheticProblem& p, std::size_t iters) {
  json j;
  j["A"] = json::array();
  for (Eigen::Index r = 0; r < p.a.rows(); ++r) j["A"].push_back(from_vector(p.a.row(r).transpose()));
  j["y"] = from_vector(p.y);
  j["groups"] = p.model.groups;
  j["rho"] = p.model.rho;
  j["active_mean"] = p.model.prior.active_mean;
  j["active_var"] = p.model.prior.active_var;
  j["noise_var"] = p.model.channel.noise_var;
  j["iters"] = iters;
  j["x_true"] = from_vector(p.x_true);
  return j.dump();
}

}  // namespace hgamp
