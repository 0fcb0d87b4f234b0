// Command-line front end: benchmark sweep, property battery, single denoiser
// evaluation, and GAMP on a problem file.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "hgamp/harness.hpp"
#include "hgamp/problem_io.hpp"
#include "hgamp/scalar_channels.hpp"

namespace {

using namespace hgamp;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Base seed");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write into " + dir);
  out << text;
}

std::string vector_json(const Eigen::VectorXd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v(k));
  return j.dump();
}

int run_bench(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (c.threads != 1) cfg.threads = c.threads;
  cfg.validate();
  const auto table = run_experiment(cfg);
  std::size_t failed = 0;
  std::printf("%-12s %6s %14s %8s\n", "algorithm", "m", "median_mse_db", "failed");
  for (const auto& agg : table.aggregates()) {
    std::printf("%-12s %6zu %14.3f %8zu\n", agg.algorithm.c_str(), agg.m, agg.median_mse_db, agg.failed);
    failed += agg.failed;
  }
  std::printf("wrote %s\n", (std::filesystem::path(cfg.out_dir) / cfg.csv_name).string().c_str());
  if (failed) std::fprintf(stderr, "%zu solver runs failed; see the CSV rows with nan\n", failed);
  return 0;
}

int run_check(const Common& c, const std::vector<std::string>& suites, bool inject_fault) {
  BatteryOptions opt;
  if (c.seed) opt.seed = *c.seed;
  opt.suites = suites;
  if (inject_fault) opt.fault = GampOptions::Fault::flip_r_update_sign;
  const auto report = run_property_battery(opt);
  std::cout << report.text();
  if (!c.out.empty()) write_text(c.out, "check_report.json", report.json() + "\n");
  return report.passed() ? 0 : 1;
}

int run_gamp(const Common& c, const std::string& problem_path) {
  omp_set_num_threads(static_cast<int>(c.threads));
  const auto exec = c.threads > 1 ? kernels::Exec::parallel : kernels::Exec::serial;
  const auto file = load_problem(problem_path);
  nlohmann::json out;
  if (file.group) {
    GroupGampOptions opt;
    opt.iters = file.group->iters;
    opt.exec = exec;
    const auto res = group_gamp_run(file.group->model, file.group->y, opt);
    out["x_hat"] = nlohmann::json::parse(vector_json(res.x_hat));
    out["rho_hat"] = nlohmann::json::parse(vector_json(res.rho_hat));
    out["iters"] = res.iterations;
    if (file.group->x_true) {
      const double mse = normalized_mse(res.x_hat, *file.group->x_true);
      out["mse_linear"] = mse;
      out["mse_db"] = to_db(mse);
    }
  } else {
    auto opt = file.graph->options;
    opt.exec = exec;
    const auto res = gamp_run(file.graph->graph, opt);
    out["x_hat"] = nlohmann::json::array();
    for (const auto& x : res.x_hat) out["x_hat"].push_back(nlohmann::json::parse(vector_json(x)));
    out["iters"] = res.diagnostics.iterations;
    out["converged"] = res.diagnostics.converged;
    out["psd_repairs"] = res.diagnostics.psd_repairs;
  }
  const auto text = out.dump(2) + "\n";
  std::cout << text;
  if (!c.out.empty()) write_text(c.out, "gamp_result.json", text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-GAMP solvers and benchmark harness"};
  app.require_subcommand(1);

  Common common;
  auto* bench = app.add_subcommand("bench", "Run the recovery benchmark sweep");
  add_common(bench, common);

  auto* check = app.add_subcommand("check", "Run the property battery");
  add_common(check, common);
  std::vector<std::string> suites;
  bool inject_fault = false;
  check->add_option("--suite", suites, "Run only these suites")->check(CLI::IsMember(kSuites));
  check->add_flag("--inject-fault", inject_fault, "Corrupt the r-update (the battery must fail)");

  auto* denoise = app.add_subcommand("denoise", "Evaluate the Bernoulli-Gaussian denoiser once");
  add_common(denoise, common);
  double r = 0.0, qr = 1.0, rho = 0.1, active_mean = 0.0, active_var = 1.0;
  denoise->add_option("--r", r, "Pseudo-observation")->required();
  denoise->add_option("--qr", qr, "Pseudo-observation variance (inf allowed)")->required();
  denoise->add_option("--rho", rho, "Activity probability");
  denoise->add_option("--active-mean", active_mean, "Mean of an active component");
  denoise->add_option("--active-var", active_var, "Variance of an active component");

  auto* gamp = app.add_subcommand("gamp", "Run Hybrid-GAMP on a JSON problem file");
  add_common(gamp, common);
  std::string problem;
  gamp->add_option("problem", problem, "Problem file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*bench) return run_bench(common);
    if (*check) return run_check(common, suites, inject_fault);
    if (*gamp) return run_gamp(common, problem);
    if (*denoise) {
      const auto est = bg_denoise(r, qr, rho, SpikeSlabPrior{active_mean, active_var});
      std::printf("{\"mean\": %.17g, \"var\": %.17g}\n", est.mean, est.var);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
