#include "hgamp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "hgamp/baselines.hpp"
#include "hgamp/bp.hpp"
#include "hgamp/factors.hpp"
#include "hgamp/lemmas.hpp"
#include "hgamp/quadrature.hpp"

namespace hgamp {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::size_t algorithm_rank(const std::string& name) {
  const auto it = std::find(kAlgorithms.begin(), kAlgorithms.end(), name);
  return static_cast<std::size_t>(it - kAlgorithms.begin());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

}  // namespace

void ExperimentConfig::validate() const {
  if (n_groups == 0 || group_dim == 0) throw std::invalid_argument("config: n_groups and group_dim must be positive");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("config: rho must lie in [0, 1]");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("config: snr_db must be finite");
  if (!(active_var > 0.0)) throw std::invalid_argument("config: active_var must be positive");
  if (m_grid.empty()) throw std::invalid_argument("config: m_grid is empty");
  for (auto m : m_grid)
    if (m == 0) throw std::invalid_argument("config: m must be positive");
  if (n_seeds == 0) throw std::invalid_argument("config: n_seeds must be at least 1");
  if (iters == 0) throw std::invalid_argument("config: iters must be positive");
  if (algorithms.empty()) throw std::invalid_argument("config: no algorithms selected");
  for (const auto& a : algorithms)
    if (algorithm_rank(a) == kAlgorithms.size()) throw std::invalid_argument("config: unknown algorithm '" + a + "'");
  if (lasso_grid < 2 || lasso_iters == 0) throw std::invalid_argument("config: lasso_grid >= 2 and lasso_iters >= 1 required");
  if (threads == 0) throw std::invalid_argument("config: threads must be positive");
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::vector<std::string> known = {
      "n_groups", "group_dim", "rho",     "snr_db",   "active_var",  "m_grid",
      "n_seeds",  "iters",     "algorithms", "seed",  "out_dir",     "csv_name",
      "lasso_grid", "lasso_iters", "record_wall_time", "threads"};
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw std::invalid_argument("config: unknown key '" + item.key() + "'");
  ExperimentConfig c;
  c.n_groups = j.value("n_groups", c.n_groups);
  c.group_dim = j.value("group_dim", c.group_dim);
  c.rho = j.value("rho", c.rho);
  c.snr_db = j.value("snr_db", c.snr_db);
  c.active_var = j.value("active_var", c.active_var);
  c.m_grid = j.value("m_grid", c.m_grid);
  c.n_seeds = j.value("n_seeds", c.n_seeds);
  c.iters = j.value("iters", c.iters);
  c.algorithms = j.value("algorithms", c.algorithms);
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.csv_name = j.value("csv_name", c.csv_name);
  c.lasso_grid = j.value("lasso_grid", c.lasso_grid);
  c.lasso_iters = j.value("lasso_iters", c.lasso_iters);
  c.record_wall_time = j.value("record_wall_time", c.record_wall_time);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

SyntheticProblem generate_problem(std::uint64_t seed, std::size_t n_groups, std::size_t group_dim,
                                  double rho, std::size_t m, double snr_db, double active_var) {
  if (n_groups == 0 || group_dim == 0 || m == 0) throw std::invalid_argument("generate_problem: sizes must be positive");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("generate_problem: rho outside [0, 1]");
  if (std::isnan(snr_db)) throw std::invalid_argument("generate_problem: snr_db is NaN");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(m)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> nd;
  std::bernoulli_distribution coin(rho);

  const std::size_t n = n_groups * group_dim;
  SyntheticProblem p;
  p.a.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index c = 0; c < p.a.cols(); ++c)
    for (Eigen::Index r = 0; r < p.a.rows(); ++r) p.a(r, c) = scale * nd(rng);

  p.x_true = VectorXd::Zero(static_cast<Eigen::Index>(n));
  p.group_active.assign(n_groups, 0);
  p.model.groups.resize(n_groups);
  for (std::size_t k = 0; k < n_groups; ++k) {
    p.group_active[k] = coin(rng) ? 1 : 0;
    for (std::size_t e = 0; e < group_dim; ++e) {
      const std::size_t j = k * group_dim + e;
      p.model.groups[k].push_back(j);
      const double v = std::sqrt(active_var) * nd(rng);
      if (p.group_active[k]) p.x_true(static_cast<Eigen::Index>(j)) = v;
    }
  }
  const VectorXd z = p.a * p.x_true;
  const double ratio = std::pow(10.0, snr_db / 10.0);
  const double power = z.squaredNorm() > 0.0
                           ? z.squaredNorm() / static_cast<double>(m)
                           : static_cast<double>(n) / static_cast<double>(m) * active_var;
  p.noise_var = std::isinf(ratio) ? 0.0 : power / ratio;
  p.y = z;
  const double sd = std::sqrt(p.noise_var);
  for (Eigen::Index i = 0; i < p.y.size(); ++i) {
    const double w = nd(rng);
    if (sd > 0.0) p.y(i) += sd * w;
  }
  p.model.a = p.a;
  p.model.rho = rho;
  p.model.prior = SpikeSlabPrior{0.0, active_var};
  p.model.channel = AwgnChannel{std::max(p.noise_var, 1e-12)};
  return p;
}

double normalized_mse(const VectorXd& x_hat, const VectorXd& x_true) {
  if (x_hat.size() != x_true.size()) throw std::invalid_argument("normalized_mse: length mismatch");
  const double den = x_true.squaredNorm();
  if (den > 0.0) return (x_hat - x_true).squaredNorm() / den;
  return x_hat.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(x_hat.size(), 1));
}

double to_db(double linear) { return 10.0 * std::log10(std::max(linear, 1e-30)); }

ResultRow run_algorithm(const std::string& algorithm, const SyntheticProblem& p,
                        const ExperimentConfig& cfg) {
  ResultRow row;
  row.algorithm = algorithm;
  row.m = static_cast<std::size_t>(p.a.rows());
  const auto start = std::chrono::steady_clock::now();
  try {
    VectorXd x_hat;
    if (algorithm == "hybrid-gamp") {
      GroupGampOptions opt;
      opt.iters = cfg.iters;
      const auto res = group_gamp_run(p.model, p.y, opt);
      x_hat = res.x_hat;
      row.iters = res.iterations;
    } else if (algorithm == "group-lasso") {
      const double g_max = group_lasso_gamma_max(p.y, p.a, p.model.groups);
      x_hat = VectorXd::Zero(p.a.cols());
      double best = normalized_mse(x_hat, p.x_true);
      if (g_max > 0.0) {
        VectorXd warm = x_hat;
        for (std::size_t s = 0; s < cfg.lasso_grid; ++s) {
          // from the full-shrinkage end down to 1e-3 of it
          const double e = -3.0 * static_cast<double>(s) / static_cast<double>(cfg.lasso_grid - 1);
          LassoConfig lc;
          lc.gamma = g_max * std::pow(10.0, e);
          lc.iters = cfg.lasso_iters;
          const auto res = group_lasso(p.y, p.a, p.model.groups, lc, &warm);
          warm = res.x;
          const double mse = normalized_mse(res.x, p.x_true);
          if (s == 0 || mse < best) {
            best = mse;
            x_hat = res.x;
            row.iters = res.iterations;
          }
        }
      }
    } else if (algorithm == "group-omp") {
      const auto k_active = static_cast<std::size_t>(
          std::count(p.group_active.begin(), p.group_active.end(), char{1}));
      const auto res = group_omp(p.y, p.a, p.model.groups, k_active);
      x_hat = res.x;
      row.iters = res.selected.size();
    } else if (algorithm == "lmmse") {
      x_hat = lmmse(p.y, p.a, p.model.rho * p.model.prior.active_var, p.model.channel.noise_var);
      row.iters = 1;
    } else {
      throw std::invalid_argument("unknown algorithm '" + algorithm + "'");
    }
    if (!x_hat.allFinite()) throw std::runtime_error("non-finite estimate");
    row.mse_linear = normalized_mse(x_hat, p.x_true);
    row.mse_db = to_db(row.mse_linear);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.mse_linear = row.mse_db = std::numeric_limits<double>::quiet_NaN();
  }
  if (cfg.record_wall_time)
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

ResultTable run_experiment(const ExperimentConfig& cfg, bool write_files) {
  cfg.validate();
  const std::size_t cells = cfg.m_grid.size() * cfg.n_seeds;
  std::vector<std::vector<ResultRow>> per_cell(cells);
  const auto count = static_cast<std::ptrdiff_t>(cells);
  const int threads = static_cast<int>(cfg.threads);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t c = 0; c < count; ++c) {
    const auto cell = static_cast<std::size_t>(c);
    const std::size_t m = cfg.m_grid[cell / cfg.n_seeds];
    const std::uint64_t seed = cfg.seed + cell % cfg.n_seeds;
    const auto problem = generate_problem(seed, cfg.n_groups, cfg.group_dim, cfg.rho, m,
                                          cfg.snr_db, cfg.active_var);
    for (const auto& alg : cfg.algorithms) {
      auto row = run_algorithm(alg, problem, cfg);
      row.seed = seed;
      per_cell[cell].push_back(std::move(row));
    }
  }
  ResultTable table;
  for (auto& rows : per_cell)
    for (auto& r : rows) table.rows.push_back(std::move(r));
  std::stable_sort(table.rows.begin(), table.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    const auto ka = std::make_tuple(algorithm_rank(a.algorithm), a.m, a.seed);
    const auto kb = std::make_tuple(algorithm_rank(b.algorithm), b.m, b.seed);
    return ka < kb;
  });
  if (write_files) {
    std::filesystem::create_directories(cfg.out_dir);
    table.write_csv((std::filesystem::path(cfg.out_dir) / cfg.csv_name).string());
    table.write_plot_files(cfg.out_dir);
  }
  return table;
}

std::vector<AggregateRow> ResultTable::aggregates() const {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const ResultRow*>> buckets;
  for (const auto& r : rows) buckets[{algorithm_rank(r.algorithm), r.m}].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : buckets) {
    AggregateRow agg;
    agg.algorithm = members.front()->algorithm;
    agg.m = key.second;
    std::vector<double> db;
    for (const auto* r : members) {
      if (r->error.empty() && std::isfinite(r->mse_db)) db.push_back(r->mse_db);
      else ++agg.failed;
    }
    agg.count = db.size();
    if (db.empty()) {
      agg.median_mse_db = agg.mean_mse_db = std::numeric_limits<double>::quiet_NaN();
    } else {
      double sum = 0.0;
      for (double v : db) sum += v;
      agg.mean_mse_db = sum / static_cast<double>(db.size());
      agg.median_mse_db = median(db);
    }
    out.push_back(agg);
  }
  return out;
}

std::string ResultTable::csv() const {
  std::string s = "algorithm,m,seed,mse_db,mse_linear,iters,wall_ms\n";
  for (const auto& r : rows) {
    s += r.algorithm + ',' + std::to_string(r.m) + ',' + std::to_string(r.seed) + ',' +
         fmt("%.6f", r.mse_db) + ',' + fmt("%.9e", r.mse_linear) + ',' + std::to_string(r.iters) +
         ',' + fmt("%.3f", r.wall_ms) + '\n';
  }
  return s;
}

void ResultTable::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << csv();
}

std::vector<std::string> ResultTable::write_plot_files(const std::string& dir) const {
  std::map<std::string, std::string> body;
  for (const auto& agg : aggregates())
    body[agg.algorithm] += std::to_string(agg.m) + ' ' + fmt("%.6f", agg.median_mse_db) + '\n';
  std::vector<std::string> paths;
  for (const auto& [alg, text] : body) {
    const auto path = (std::filesystem::path(dir) / ("plot_" + alg + ".dat")).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# m median_mse_db\n" << text;
    paths.push_back(path);
  }
  return paths;
}

FactorGraph random_tree_graph(std::mt19937_64& rng, std::size_t max_vars) {
  if (max_vars < 2) throw std::invalid_argument("random_tree_graph: need at least 2 variables");
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const auto n = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(2, max_vars)(rng));

  FactorGraph g;
  std::vector<std::vector<double>> alph(n);
  for (std::size_t j = 0; j < n; ++j) {
    alph[j] = ud(rng) < 0.5 ? std::vector<double>{0.0, 1.0} : std::vector<double>{-1.0, 1.0};
    g.variables.push_back(VariableSpec::finite(alph[j]));
  }
  struct Weak {
    std::size_t factor, var;
    double a;
  };
  std::vector<Weak> weak;
  std::vector<std::size_t> z_dims;

  auto table_factor = [&](std::vector<std::size_t> strong, std::size_t z_dim) {
    std::vector<std::vector<double>> alphabets;
    for (auto j : strong) alphabets.push_back(alph[j]);
    const std::size_t states = std::size_t{1} << strong.size();
    std::vector<double> table(states);
    for (auto& t : table) t = nd(rng);
    const double c1 = nd(rng), c2 = 0.5 + ud(rng), c3 = 0.3 * ud(rng);
    auto fn = [table, alphabets, z_dim, c1, c2, c3](std::span<const double> x, double z) {
      std::size_t idx = 0;
      for (std::size_t k = 0; k < x.size(); ++k)
        if (x[k] == alphabets[k][1]) idx |= std::size_t{1} << k;
      double v = table[idx];
      if (z_dim == 1) v += c1 * std::sin(c2 * z) - c3 * z * z;
      return v;
    };
    g.factors.push_back({std::make_shared<EnumeratedFactor>(alphabets, z_dim, fn), std::move(strong)});
    z_dims.push_back(z_dim);
  };

  for (std::size_t j = 0; j < n; ++j) table_factor({j}, 0);

  std::size_t next = 1;
  while (next < n) {
    const auto parent = std::uniform_int_distribution<std::size_t>(0, next - 1)(rng);
    const std::size_t fresh = (next + 1 < n && ud(rng) < 0.3) ? 2 : 1;
    std::vector<std::size_t> members{parent};
    for (std::size_t e = 0; e < fresh; ++e) members.push_back(next + e);
    next += fresh;
    const double mode = ud(rng);
    if (mode < 0.4) {
      table_factor(members, 0);
    } else {
      // parent strong with weak children, or every member weak
      const bool parent_strong = mode < 0.7;
      std::vector<std::size_t> strong;
      if (parent_strong) strong.push_back(parent);
      const std::size_t i = g.factors.size();
      for (std::size_t e = parent_strong ? 1 : 0; e < members.size(); ++e) {
        double a = nd(rng);
        if (std::abs(a) < 0.2) a = a < 0 ? -0.2 : 0.2;
        weak.push_back({i, members[e], a});
      }
      table_factor(strong, 1);
    }
  }
  g.mixing = LinearMixing(z_dims, std::vector<std::size_t>(n, 1));
  for (const auto& w : weak) g.mixing.set_block(w.factor, w.var, scalar(w.a));
  return g;
}

GaussianModel random_gaussian_model(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  GaussianModel gm;
  gm.a.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (Eigen::Index r = 0; r < gm.a.rows(); ++r)
    for (Eigen::Index c = 0; c < gm.a.cols(); ++c) gm.a(r, c) = scale * nd(rng);
  gm.prior_mean.resize(static_cast<Eigen::Index>(n));
  gm.prior_var.resize(static_cast<Eigen::Index>(n));
  VectorXd x(static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    gm.prior_mean(j) = 0.5 * nd(rng);
    gm.prior_var(j) = 0.5 + ud(rng);
    x(j) = gm.prior_mean(j) + std::sqrt(gm.prior_var(j)) * nd(rng);
  }
  gm.noise_var = 0.05 + 0.1 * ud(rng);
  gm.y = gm.a * x;
  for (Eigen::Index i = 0; i < gm.y.size(); ++i) gm.y(i) += std::sqrt(gm.noise_var) * nd(rng);

  std::vector<std::size_t> z_dims(n, 0);
  z_dims.resize(n + m, 1);
  for (std::size_t j = 0; j < n; ++j) {
    gm.graph.variables.push_back(VariableSpec::continuous(1));
    const auto jj = static_cast<Eigen::Index>(j);
    gm.graph.factors.push_back({gaussian_prior(VectorXd::Constant(1, gm.prior_mean(jj)), scalar(gm.prior_var(jj))), {j}});
  }
  for (std::size_t i = 0; i < m; ++i)
    gm.graph.factors.push_back({std::make_shared<AwgnOutputFactor>(gm.y(static_cast<Eigen::Index>(i)), AwgnChannel{gm.noise_var}), {}});
  gm.graph.mixing = LinearMixing(z_dims, std::vector<std::size_t>(n, 1));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      gm.graph.mixing.set_block(n + i, j, scalar(gm.a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
  return gm;
}

// ---- property battery ----

namespace {

void record(SuiteReport& rep, double err) {
  ++rep.cases;
  if (!(err <= rep.tolerance)) ++rep.failures;
  if (std::isnan(err) || err > rep.max_error) rep.max_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
}

VectorXd stack(const std::vector<VectorXd>& blocks) {
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.size();
  VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.segment(at, b.size()) = b;
    at += b.size();
  }
  return out;
}

}  // namespace

SuiteReport suite_lemma1(std::uint64_t seed, std::size_t cases) {
  SuiteReport rep{"lemma1", 0, 0, 0.0, 1e-4, ""};
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const auto inst = random_lemma1_instance(rng);
    try {
      record(rep, lemma1_check(inst.h0, inst.qv, inst.v, rep.tolerance).max_error());
    } catch (const std::exception& e) {
      record(rep, std::numeric_limits<double>::infinity());
      rep.detail = e.what();
    }
  }
  return rep;
}

SuiteReport suite_lemma2(std::uint64_t seed, std::size_t cases) {
  SuiteReport rep{"lemma2", 0, 0, 0.0, 1e-3, ""};
  std::mt19937_64 rng(seed + 1);
  for (std::size_t c = 0; c < cases; ++c) {
    const auto inst = random_lemma2_instance(rng);
    try {
      record(rep, lemma2_check(inst.h0, inst.qv, inst.u, inst.v, rep.tolerance).max_error());
    } catch (const std::exception& e) {
      record(rep, std::numeric_limits<double>::infinity());
      rep.detail = e.what();
    }
  }
  return rep;
}

SuiteReport suite_tree_exactness(std::uint64_t seed, std::size_t cases) {
  SuiteReport rep{"tree_exactness", 0, 0, 0.0, 1e-9, ""};
  std::mt19937_64 rng(seed + 2);
  std::uniform_real_distribution<double> ud(0.5, 3.0);
  for (std::size_t c = 0; c < cases; ++c) {
    const auto g = random_tree_graph(rng, 12);
    const double u = ud(rng);
    double err = 0.0;
    try {
      for (const auto variant : {Variant::max_sum, Variant::sum_product}) {
        BpOptions opt;
        opt.variant = variant;
        opt.u = u;
        opt.iters = 2 * g.num_variables() + 4;
        const auto bp = bp_run(g, opt);
        const auto exact = variant == Variant::max_sum ? brute_force_map(g) : brute_force_marginals(g, u);
        for (std::size_t j = 0; j < g.num_variables(); ++j)
          err = std::max(err, distance_up_to_constant(bp.marginals[j], exact.marginals[j]));
      }
    } catch (const std::exception& e) {
      err = std::numeric_limits<double>::infinity();
      rep.detail = e.what();
    }
    record(rep, err);
  }
  return rep;
}

SuiteReport suite_gaussian_exactness(std::uint64_t seed, GampOptions::Fault fault, std::size_t cases) {
  SuiteReport rep{"gaussian_exactness", 0, 0, 0.0, 1e-6, ""};
  std::mt19937_64 rng(seed + 3);
  for (std::size_t c = 0; c < cases; ++c) {
    const auto gm = random_gaussian_model(rng, 20, 30);
    const MatrixXd precision =
        MatrixXd(gm.prior_var.cwiseInverse().asDiagonal()) + gm.a.transpose() * gm.a / gm.noise_var;
    const VectorXd info = gm.prior_mean.cwiseQuotient(gm.prior_var) + gm.a.transpose() * gm.y / gm.noise_var;
    const VectorXd exact = precision.ldlt().solve(info);
    for (const auto variant : {Variant::sum_product, Variant::max_sum}) {
      double err;
      try {
        GampOptions opt;
        opt.variant = variant;
        opt.iters = 500;
        opt.tolerance = 1e-14;
        opt.fault = fault;
        const auto res = gamp_run(gm.graph, opt);
        err = (stack(res.x_hat) - exact).cwiseAbs().maxCoeff() / exact.cwiseAbs().maxCoeff();
        if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
      } catch (const std::exception& e) {
        err = std::numeric_limits<double>::infinity();
        rep.detail = e.what();
      }
      record(rep, err);
    }
  }
  return rep;
}

SuiteReport suite_singleton_reduction(std::uint64_t seed, std::size_t cases) {
  SuiteReport rep{"singleton_reduction", 0, 0, 0.0, 1e-12, ""};
  for (std::size_t c = 0; c < cases; ++c) {
    const auto p = generate_problem(seed + 4 + c, 60, 1, 0.2, 40, 20.0);
    double err = 0.0;
    try {
      GroupGampOptions opt;
      opt.iters = 20;
      const auto grp = group_gamp_run(p.model, p.y, opt);
      const auto basic = basic_gamp_run(p.model, p.y, VectorXd::Constant(p.a.cols(), p.model.rho), opt);
      if (grp.trajectory.size() != basic.trajectory.size()) throw std::runtime_error("trajectory lengths differ");
      for (std::size_t t = 0; t < grp.trajectory.size(); ++t)
        err = std::max(err, (grp.trajectory[t] - basic.trajectory[t]).cwiseAbs().maxCoeff());
    } catch (const std::exception& e) {
      err = std::numeric_limits<double>::infinity();
      rep.detail = e.what();
    }
    record(rep, err);
  }
  return rep;
}

SuiteReport suite_denoiser_equivalence() {
  SuiteReport rep{"denoiser_equivalence", 0, 0, 0.0, 1e-8, ""};
  const SpikeSlabPrior prior{0.0, 1.0};
  const double rhos[] = {0.001, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 0.95, 0.999};
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (int a = 0; a < 10; ++a) {
    const double r = -5.0 + 10.0 * a / 9.0;
    for (int b = 0; b < 10; ++b) {
      const double qr = std::pow(10.0, -3.0 + 4.0 * b / 9.0);
      for (double rho : rhos) {
        const auto est = bg_denoise(r, qr, rho, prior);
        const auto ref = quadrature::quadrature_posterior_oracle(spike_slab_density_spec(rho, prior), r, qr);
        record(rep, std::max(rel(est.mean, ref.mean), rel(est.var, ref.var)));
      }
    }
  }
  const AwgnChannel channel{0.5};
  for (int a = 0; a < 10; ++a) {
    const double p = -3.0 + 6.0 * a / 9.0;
    for (int b = 0; b < 10; ++b) {
      const double qp = std::pow(10.0, -2.0 + 3.0 * b / 9.0);
      for (int c = 0; c < 10; ++c) {
        const double y = -4.0 + 8.0 * c / 9.0;
        const auto est = awgn_output_denoise(p, qp, y, channel);
        quadrature::PriorDensitySpec spec;
        spec.continuous = quadrature::ContinuousPart{
            1.0, [p, qp](double z) { return -0.5 * (z - p) * (z - p) / qp; }, p, std::sqrt(qp)};
        const auto ref = quadrature::quadrature_posterior_oracle(spec, y, channel.noise_var);
        record(rep, std::max(rel(est.mean, ref.mean), rel(est.var, ref.var)));
      }
    }
  }
  return rep;
}

bool BatteryReport::passed() const {
  return !suites.empty() &&
         std::all_of(suites.begin(), suites.end(), [](const SuiteReport& s) { return s.passed(); });
}

std::string BatteryReport::text() const {
  std::string s;
  for (const auto& r : suites) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-22s %s  cases=%zu failures=%zu max_error=%.3e tol=%.1e",
                  r.name.c_str(), r.passed() ? "PASS" : "FAIL", r.cases, r.failures, r.max_error,
                  r.tolerance);
    s += buf;
    if (!r.detail.empty()) s += "  (" + r.detail + ")";
    s += '\n';
  }
  s += passed() ? "all suites passed\n" : "battery FAILED\n";
  return s;
}

std::string BatteryReport::json() const {
  nlohmann::json j;
  j["passed"] = passed();
  j["suites"] = nlohmann::json::array();
  for (const auto& r : suites) {
    j["suites"].push_back({{"name", r.name},
                           {"passed", r.passed()},
                           {"cases", r.cases},
                           {"failures", r.failures},
                           {"max_error", std::isfinite(r.max_error) ? nlohmann::json(r.max_error) : nlohmann::json("inf")},
                           {"tolerance", r.tolerance},
                           {"detail", r.detail}});
  }
  return j.dump(2);
}

BatteryReport run_property_battery(const BatteryOptions& options) {
  const auto wanted = [&](const std::string& name) {
    return options.suites.empty() ||
           std::find(options.suites.begin(), options.suites.end(), name) != options.suites.end();
  };
  for (const auto& s : options.suites)
    if (std::find(kSuites.begin(), kSuites.end(), s) == kSuites.end())
      throw std::invalid_argument("unknown suite '" + s + "'");
  BatteryReport rep;
  if (wanted("lemma1")) rep.suites.push_back(suite_lemma1(options.seed));
  if (wanted("lemma2")) rep.suites.push_back(suite_lemma2(options.seed));
  if (wanted("tree_exactness")) rep.suites.push_back(suite_tree_exactness(options.seed));
  if (wanted("gaussian_exactness")) rep.suites.push_back(suite_gaussian_exactness(options.seed, options.fault));
  if (wanted("singleton_reduction")) rep.suites.push_back(suite_singleton_reduction(options.seed));
  if (wanted("denoiser_equivalence")) rep.suites.push_back(suite_denoiser_equivalence());
  return rep;
}

}  // namespace hgamp
