#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "hgamp/harness.hpp"
#include "hgamp/problem_io.hpp"

using namespace hgamp;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.n_groups = 8;
  c.group_dim = 2;
  c.rho = 0.25;
  c.m_grid = {10, 14};
  c.n_seeds = 3;
  c.iters = 8;
  c.lasso_grid = 4;
  c.lasso_iters = 50;
  return c;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hgamp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("problem generator") {
  const auto p = generate_problem(7, 10, 3, 0.3, 20, 15.0);
  CHECK(p.a.rows() == 20);
  CHECK(p.a.cols() == 30);
  CHECK(p.model.groups.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    const bool any = p.x_true.segment(static_cast<Eigen::Index>(3 * k), 3).cwiseAbs().maxCoeff() > 0.0;
    CHECK(any == static_cast<bool>(p.group_active[k]));
  }
  // noise set from the realized signal power
  const double power = (p.a * p.x_true).squaredNorm() / 20.0;
  CHECK(p.noise_var == doctest::Approx(power / std::pow(10.0, 1.5)).epsilon(1e-14));
  CHECK(p.model.channel.noise_var == p.noise_var);

  const auto again = generate_problem(7, 10, 3, 0.3, 20, 15.0);
  CHECK(again.a == p.a);
  CHECK(again.y == p.y);
  CHECK(generate_problem(8, 10, 3, 0.3, 20, 15.0).y != p.y);

  const auto silent = generate_problem(7, 10, 3, 0.0, 20, 15.0);
  CHECK(silent.x_true.isZero());
  CHECK(silent.noise_var == doctest::Approx(30.0 / 20.0 / std::pow(10.0, 1.5)));

  const auto clean = generate_problem(7, 10, 3, 0.3, 20, std::numeric_limits<double>::infinity());
  CHECK(clean.noise_var == 0.0);
  CHECK(clean.y == clean.a * clean.x_true);
  CHECK(clean.model.channel.noise_var == 1e-12);

  CHECK_THROWS(generate_problem(1, 0, 3, 0.3, 20, 15.0));
  CHECK_THROWS(generate_problem(1, 3, 3, 1.3, 20, 15.0));
}

TEST_CASE("error metrics") {
  VectorXd x(2), xh(2);
  x << 3.0, 4.0;
  xh << 3.0, 3.0;
  CHECK(normalized_mse(xh, x) == doctest::Approx(1.0 / 25.0));
  CHECK(normalized_mse(xh, VectorXd::Zero(2)) == doctest::Approx(9.0));
  CHECK(to_db(0.01) == doctest::Approx(-20.0));
  CHECK(std::isfinite(to_db(0.0)));
}

TEST_CASE("every algorithm runs on a small sweep") {
  auto c = tiny_config();
  const auto table = run_experiment(c, false);
  CHECK(table.rows.size() == 4 * 2 * 3);
  for (const auto& r : table.rows) {
    CHECK(r.error.empty());
    CHECK(std::isfinite(r.mse_db));
    CHECK(r.wall_ms == 0.0);
  }
  CHECK(table.rows.front().algorithm == "hybrid-gamp");
  CHECK(table.rows.back().algorithm == "lmmse");
  const auto agg = table.aggregates();
  CHECK(agg.size() == 8);
  for (const auto& a : agg) CHECK(a.count == 3);

  // a single measurement is still a valid sweep
  c.m_grid = {1};
  c.n_seeds = 1;
  for (const auto& r : run_experiment(c, false).rows) CHECK(r.error.empty());
}

TEST_CASE("CSV output is byte-stable and thread-count independent") {
  auto c = tiny_config();
  const auto a = run_experiment(c, false).csv();
  const auto b = run_experiment(c, false).csv();
  c.threads = 3;
  const auto t = run_experiment(c, false).csv();
  CHECK(a == b);
  CHECK(a == t);
  CHECK(a.rfind("algorithm,m,seed,mse_db,mse_linear,iters,wall_ms\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : a) lines += ch == '\n';
  CHECK(lines == 1 + 24);
}

TEST_CASE("files are written where asked") {
  auto c = tiny_config();
  c.algorithms = {"hybrid-gamp", "lmmse"};
  const auto dir = scratch_dir("files");
  c.out_dir = dir.string();
  c.csv_name = "r.csv";
  const auto table = run_experiment(c, true);
  CHECK(slurp(dir / "r.csv") == table.csv());
  for (const char* alg : {"hybrid-gamp", "lmmse"}) {
    const auto text = slurp(dir / (std::string("plot_") + alg + ".dat"));
    std::istringstream in(text);
    std::string header;
    std::getline(in, header);
    CHECK(header == "# m median_mse_db");
    std::size_t m = 0;
    double med = 0.0;
    std::vector<std::size_t> ms;
    while (in >> m >> med) ms.push_back(m);
    CHECK(ms == std::vector<std::size_t>{10, 14});
  }
  CHECK_FALSE(fs::exists(dir / "plot_group-omp.dat"));
  fs::remove_all(dir);
}

TEST_CASE("median aggregation") {
  ResultTable t;
  for (double v : {-3.0, -1.0, -10.0, -2.0}) t.rows.push_back({"lmmse", 5, 1, v, std::pow(10.0, v / 10), 1, 0.0, ""});
  t.rows.push_back({"lmmse", 5, 9, std::nan(""), std::nan(""), 0, 0.0, "boom"});
  const auto agg = t.aggregates();
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].median_mse_db == doctest::Approx(-2.5));
  CHECK(agg[0].mean_mse_db == doctest::Approx(-4.0));
  CHECK(agg[0].count == 4);
  CHECK(agg[0].failed == 1);
}

TEST_CASE("configuration parsing") {
  const auto c = ExperimentConfig::from_json_text(R"({"n_groups": 5, "m_grid": [7, 9], "algorithms": ["lmmse"]})");
  CHECK(c.n_groups == 5);
  CHECK(c.m_grid == std::vector<std::size_t>{7, 9});
  CHECK(c.group_dim == 4);
  CHECK_THROWS(ExperimentConfig::from_json_text(R"({"n_grups": 5})"));
  CHECK_THROWS(ExperimentConfig::from_json_text(R"({"rho": 2})"));
  CHECK_THROWS(ExperimentConfig::from_json_text(R"({"m_grid": []})"));
  CHECK_THROWS(ExperimentConfig::from_json_text(R"({"algorithms": ["magic"]})"));
  CHECK_THROWS(ExperimentConfig::from_json_text(R"({"threads": 0})"));
  CHECK_THROWS(ExperimentConfig::from_json_text(R"([1, 2])"));
  CHECK_THROWS(ExperimentConfig::from_json_text("{"));
  CHECK_THROWS(ExperimentConfig::from_file("/nonexistent/config.json"));
}

TEST_CASE("property battery passes and notices a broken engine") {
  BatteryOptions opt;
  opt.suites = {"gaussian_exactness", "singleton_reduction"};
  const auto ok = run_property_battery(opt);
  CHECK(ok.passed());
  CHECK(ok.suites.size() == 2);
  CHECK(ok.json().find("\"gaussian_exactness\"") != std::string::npos);
  CHECK(ok.text().find("PASS") != std::string::npos);

  opt.fault = GampOptions::Fault::flip_r_update_sign;
  opt.suites = {"gaussian_exactness"};
  const auto bad = run_property_battery(opt);
  CHECK_FALSE(bad.passed());
  CHECK(bad.text().find("FAIL") != std::string::npos);

  opt.suites = {"nonsense"};
  CHECK_THROWS(run_property_battery(opt));
}

TEST_CASE("tree generator produces valid graphs") {
  std::mt19937_64 rng(61);
  for (int k = 0; k < 30; ++k) {
    const auto g = random_tree_graph(rng);
    CHECK(validate_graph(g).ok());
    CHECK(g.num_variables() <= 12);
    for (const auto& v : g.variables) CHECK(v.is_finite());
  }
}

TEST_CASE("problem files round trip") {
  const auto p = generate_problem(3, 4, 2, 0.5, 6, 20.0);
  const auto parsed = parse_problem(group_problem_json(p, 12));
  REQUIRE(parsed.group.has_value());
  CHECK_FALSE(parsed.graph.has_value());
  const auto& g = *parsed.group;
  CHECK(g.iters == 12);
  CHECK((g.model.a - p.a).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.y - p.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.model.groups == p.model.groups);
  CHECK(g.model.rho == p.model.rho);
  REQUIRE(g.x_true.has_value());
  CHECK(*g.x_true == p.x_true);

  const auto graph = parse_problem(R"({"graph": {
      "variables": [{"dim": 1}, {"alphabet": [0, 1]}],
      "factors": [{"kind": "gaussian_prior", "var": 0, "mean": [0], "cov": [[1]]},
                  {"kind": "awgn_output", "y": 0.3, "noise_var": 0.1}],
      "mixing": [{"factor": 1, "var": 0, "block": [[0.5]]}]},
    "variant": "max_sum", "u": 2, "iters": 7})");
  REQUIRE(graph.graph.has_value());
  CHECK(graph.graph->graph.num_variables() == 2);
  CHECK(graph.graph->graph.variables[1].alphabet.size() == 2);
  CHECK(graph.graph->options.variant == Variant::max_sum);
  CHECK(graph.graph->options.iters == 7);
  CHECK(graph.graph->options.u == 2.0);

  CHECK_THROWS(parse_problem(R"({"graph": {"variables": [], "factors": [{"kind": "bogus"}], "mixing": []}})"));
  CHECK_THROWS(parse_problem(R"({"A": [[1, 2]], "y": [1, 2], "groups": [[0, 1]]})"));
  CHECK_THROWS(parse_problem("{}"));
}
