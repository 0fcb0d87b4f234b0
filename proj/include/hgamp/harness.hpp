#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgamp/gamp.hpp"
#include "hgamp/graph.hpp"
#include "hgamp/group_sparsity.hpp"

namespace hgamp {

inline const std::vector<std::string> kAlgorithms = {"hybrid-gamp", "group-lasso", "group-omp",
                                                     "lmmse"};

struct ExperimentConfig {
  std::size_t n_groups = 100;
  std::size_t group_dim = 4;
  double rho = 0.1;
  double snr_db = 20.0;
  double active_var = 1.0;
  std::vector<std::size_t> m_grid = {50, 75, 100, 125, 150, 175, 200};
  std::size_t n_seeds = 20;
  std::size_t iters = 20;
  std::vector<std::string> algorithms = kAlgorithms;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string csv_name = "results.csv";
  std::size_t lasso_grid = 15;
  std::size_t lasso_iters = 300;
  bool record_wall_time = false;  // off keeps the CSV byte-stable
  std::size_t threads = 1;

  void validate() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
};

struct SyntheticProblem {
  Eigen::MatrixXd a;
  Eigen::VectorXd x_true, y;
  std::vector<char> group_active;
  double noise_var = 0.0;  // variance actually used to draw w
  GroupModel model;        // noise_var floored at 1e-12
};

/// A ~ N(0, 1/m) i.i.d., groups contiguous, x = xi_k V on group k, w scaled
/// to the per-instance SNR. Deterministic in (seed, m).
SyntheticProblem generate_problem(std::uint64_t seed, std::size_t n_groups, std::size_t group_dim,
                                  double rho, std::size_t m, double snr_db,
                                  double active_var = 1.0);

/// ||x_hat - x||^2 / ||x||^2, or ||x_hat||^2 / n when x is zero.
double normalized_mse(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x_true);
double to_db(double linear);

struct ResultRow {
  std::string algorithm;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double mse_db = 0.0;
  double mse_linear = 0.0;
  std::size_t iters = 0;
  double wall_ms = 0.0;
  std::string error;  // empty on success; mse is NaN otherwise
};

struct AggregateRow {
  std::string algorithm;
  std::size_t m = 0;
  double median_mse_db = 0.0;
  double mean_mse_db = 0.0;
  std::size_t count = 0;   // rows that succeeded
  std::size_t failed = 0;
};

struct ResultTable {
  std::vector<ResultRow> rows;  // sorted by (algorithm order, m, seed)

  std::vector<AggregateRow> aggregates() const;
  std::string csv() const;
  void write_csv(const std::string& path) const;
  /// One `plot_<algorithm>.dat` per algorithm: m and median_mse_db.
  std::vector<std::string> write_plot_files(const std::string& dir) const;
};

/// Runs one algorithm on one problem.
ResultRow run_algorithm(const std::string& algorithm, const SyntheticProblem& problem,
                        const ExperimentConfig& config);

/// Full sweep. Writes the CSV and plot files when `write_files` is set.
ResultTable run_experiment(const ExperimentConfig& config, bool write_files = true);

// Instance generators shared by the property battery and the tests.

/// Random acyclic factor graph over binary variables: unary factors, plus
/// pairwise and triple factors along a random tree, some of which see their
/// neighbors only through a weak linear mix.
FactorGraph random_tree_graph(std::mt19937_64& rng, std::size_t max_vars = 12);

struct GaussianModel {
  FactorGraph graph;
  Eigen::MatrixXd a;
  Eigen::VectorXd y, prior_mean, prior_var;
  double noise_var = 0.0;
};
/// Scalar all-Gaussian model: N(mean_j, var_j) priors and AWGN outputs
/// y = A x + w, A ~ N(0, 1/m).
GaussianModel random_gaussian_model(std::mt19937_64& rng, std::size_t m, std::size_t n);

// Property battery.

struct SuiteReport {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::string detail;
  bool passed() const { return failures == 0 && cases > 0; }
};

struct BatteryOptions {
  std::uint64_t seed = 2024;
  GampOptions::Fault fault = GampOptions::Fault::none;
  std::vector<std::string> suites;  // empty runs all
};

struct BatteryReport {
  std::vector<SuiteReport> suites;
  bool passed() const;
  std::string text() const;
  std::string json() const;
};

inline const std::vector<std::string> kSuites = {"lemma1",           "lemma2",
                                                 "tree_exactness",   "gaussian_exactness",
                                                 "singleton_reduction", "denoiser_equivalence"};

SuiteReport suite_lemma1(std::uint64_t seed, std::size_t cases = 50);
SuiteReport suite_lemma2(std::uint64_t seed, std::size_t cases = 50);
SuiteReport suite_tree_exactness(std::uint64_t seed, std::size_t cases = 100);
SuiteReport suite_gaussian_exactness(std::uint64_t seed,
                                     GampOptions::Fault fault = GampOptions::Fault::none,
                                     std::size_t cases = 5);
SuiteReport suite_singleton_reduction(std::uint64_t seed, std::size_t cases = 20);
SuiteReport suite_denoiser_equivalence();

BatteryReport run_property_battery(const BatteryOptions& options = {});

}  // namespace hgamp
