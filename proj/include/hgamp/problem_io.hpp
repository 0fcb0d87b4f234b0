#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "hgamp/gamp.hpp"
#include "hgamp/graph.hpp"
#include "hgamp/group_sparsity.hpp"
#include "hgamp/harness.hpp"

// JSON problem files for the `gamp` subcommand.
//
// A group-sparsity problem:
//   {"A": [[...], ...], "y": [...], "groups": [[0, 1], ...], "rho": 0.1,
//    "active_mean": 0, "active_var": 1, "noise_var": 0.01, "iters": 20,
//    "x_true": [...]}                       (x_true optional)
//
// A general graph:
//   {"graph": {"variables": [{"dim": 1} | {"alphabet": [0, 1]}, ...],
//              "factors": [{"kind": "gaussian_prior", "var": 0, "mean": [0], "cov": [[1]]},
//                          {"kind": "awgn_output", "y": 0.3, "noise_var": 0.1},
//                          {"kind": "spike_slab_prior", "var": 0, "rho": 0.1,
//                           "active_mean": 0, "active_var": 1},
//                          {"kind": "gaussian", "strong": [0], "strong_dims": [1],
//                           "z_dim": 1, "J": [[...]], "h": [...]}],
//              "mixing": [{"factor": 1, "var": 0, "block": [[0.5]]}, ...]},
//    "variant": "sum_product" | "max_sum", "u": 1, "iters": 20}
namespace hgamp {

struct GroupProblem {
  GroupModel model;
  Eigen::VectorXd y;
  std::size_t iters = 20;
  std::optional<Eigen::VectorXd> x_true;
};

struct GraphProblem {
  FactorGraph graph;
  GampOptions options;
};

struct ProblemFile {
  std::optional<GroupProblem> group;
  std::optional<GraphProblem> graph;
};

ProblemFile parse_problem(const std::string& json_text);
ProblemFile load_problem(const std::string& path);

/// Serializes a synthetic instance in the group format.
std::string group_problem_json(const SyntheticProblem& problem, std::size_t iters);

}  // namespace hgamp
