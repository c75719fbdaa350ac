#include "spats/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace spats {

namespace {

Eigen::MatrixXd ar1_cholesky(int n, double rho) {
  Eigen::MatrixXd corr(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) corr(i, j) = std::pow(rho, std::abs(i - j));
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("ar1_cholesky: correlation matrix not positive definite");
  return llt.matrixL();
}

std::string genotype_label(int id, int width) {
  std::string digits = std::to_string(id);
  return "G" + std::string(width - std::min<int>(width, digits.size()), '0') + digits;
}

struct RunResult {
  bool converged = false;
  double log10_rmse = 0.0;
  double sigma2_g = 0.0;
  double sigma2 = 0.0;
  double ed_s = 0.0;
};

// Row/column main effects plus random genotype, no smooth surface. The
// classical baseline the surface model is compared against.
MixedModelSystem rowcol_system(const Eigen::VectorXd& y, const std::vector<int>& design,
                               int rows, int cols, int m_g) {
  const int n = rows * cols;
  MixedModelSystem sys;
  sys.y = y;
  sys.x = Eigen::MatrixXd::Ones(n, 1);
  sys.x_names = {"Intercept"};

  Eigen::MatrixXd zr = Eigen::MatrixXd::Zero(n, rows);
  Eigen::MatrixXd zc = Eigen::MatrixXd::Zero(n, cols);
  Eigen::MatrixXd zg = Eigen::MatrixXd::Zero(n, m_g);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const int l = i * cols + j;
      zr(l, i) = 1.0;
      zc(l, j) = 1.0;
      zg(l, design[l]) = 1.0;
    }
  sys.blocks.push_back({"row", zr, Eigen::VectorXd::Ones(rows), rows - 1, BlockType::Factor});
  sys.blocks.push_back({"col", zc, Eigen::VectorXd::Ones(cols), cols - 1, BlockType::Factor});
  sys.blocks.push_back({"gen", zg, Eigen::VectorXd::Ones(m_g), m_g - 1, BlockType::Factor});
  return sys;
}

RunResult one_run(const SimulationConfig& cfg, const std::string& variant, std::uint64_t run) {
  std::mt19937_64 rng(substream_seed(cfg.seed, run));
  std::normal_distribution<double> norm;

  const int n = cfg.rows * cfg.cols;
  const int m_g = cfg.n_genotypes;

  Eigen::VectorXd effects(m_g);
  for (int g = 0; g < m_g; ++g) effects[g] = std::sqrt(cfg.sigma2_g) * norm(rng);

  const std::vector<int> design =
      gen_design(m_g, cfg.replicates, cfg.block_size, cfg.rows, cfg.cols, rng);
  const Eigen::VectorXd field =
      gen_ar_field(cfg.rows, cfg.cols, cfg.sigma2_s, cfg.rho_r, cfg.rho_c, rng);

  Eigen::VectorXd y(n);
  for (int l = 0; l < n; ++l) {
    if (design[l] < 0) throw std::invalid_argument("run_study: filler plots are not supported");
    y[l] = effects[design[l]] + field[l] + std::sqrt(cfg.sigma2) * norm(rng);
  }

  RunResult res;
  FittedModel fitted;
  int genotype_block = -1;
  std::vector<int> level_of;  // genotype level order -> simulated id

  if (variant == "rowcol") {
    MixedModelSystem sys = rowcol_system(y, design, cfg.rows, cfg.cols, m_g);
    fitted = fit(sys, cfg.fit);
    genotype_block = 2;
    level_of.resize(m_g);
    std::iota(level_of.begin(), level_of.end(), 0);
  } else if (variant == "spats") {
    const int width = std::to_string(m_g - 1).size();
    TrialData data;
    data.records.reserve(n);
    for (int i = 0; i < cfg.rows; ++i)
      for (int j = 0; j < cfg.cols; ++j) {
        TrialRecord rec;
        rec.response = y[i * cfg.cols + j];
        rec.genotype = genotype_label(design[i * cfg.cols + j], width);
        rec.row = i + 1;
        rec.col = j + 1;
        data.records.push_back(std::move(rec));
      }
    data.update_extents();

    ModelSpec spec;
    spec.genotype_random = true;
    spec.spatial = cfg.spatial;
    TrialModel model = build_system(data, spec);
    fitted = fit(model.system, cfg.fit);

    genotype_block = model.genotype_block;
    level_of.reserve(m_g);
    for (const auto& label : model.genotype_levels)
      level_of.push_back(std::stoi(label.substr(1)));

    res.ed_s = 3.0;  // row, col, row:col
    for (int k = 0; k < 5; ++k) res.ed_s += fitted.effective_dims[k];
  } else {
    throw std::invalid_argument("run_study: unknown variant '" + variant + "'");
  }

  res.converged = fitted.converged;
  if (cfg.trace_level >= 1) {
    std::ostringstream line;
    line << "run " << run << " " << variant << " converged=" << res.converged << " iter="
         << fitted.iterations << "\n";
    std::cerr << line.str();
  }
  if (!res.converged) return res;

  const Eigen::VectorXd& blup = fitted.solve.c_hat[genotype_block];
  double sse = 0.0;
  for (int i = 0; i < m_g; ++i) {
    const double d = blup[i] - effects[level_of[i]];
    sse += d * d;
  }
  res.log10_rmse = 0.5 * std::log10(sse / m_g);
  res.sigma2_g = fitted.variances[genotype_block];
  res.sigma2 = fitted.sigma2;
  return res;
}

VariantSummary summarize(const std::string& variant, const SimulationConfig& cfg,
                         const std::vector<RunResult>& runs) {
  VariantSummary s;
  s.variant = variant;

  auto accumulate = [&](auto value) {
    double mean = 0.0;
    for (const auto& r : runs)
      if (r.converged) mean += value(r);
    mean /= s.runs_used;
    double ss = 0.0;
    for (const auto& r : runs)
      if (r.converged) ss += (value(r) - mean) * (value(r) - mean);
    const double sd = s.runs_used > 1 ? std::sqrt(ss / (s.runs_used - 1)) : 0.0;
    return std::pair{mean, sd};
  };

  for (const auto& r : runs) s.runs_used += r.converged;
  s.convergence_rate = static_cast<double>(s.runs_used) / runs.size();
  if (s.runs_used == 0) return s;

  std::tie(s.mean_log10_rmse, s.sd_log10_rmse) =
      accumulate([](const RunResult& r) { return r.log10_rmse; });
  std::tie(s.bias_sigma2_g, s.sd_sigma2_g) =
      accumulate([&](const RunResult& r) { return r.sigma2_g - cfg.sigma2_g; });
  std::tie(s.bias_sigma2, s.sd_sigma2) =
      accumulate([&](const RunResult& r) { return r.sigma2 - cfg.sigma2; });
  std::tie(s.mean_ed_s, s.sd_ed_s) = accumulate([](const RunResult& r) { return r.ed_s; });
  return s;
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t run) {
  // splitmix64 over the (seed, run) pair; distinct runs land in distinct,
  // reproducible streams regardless of execution order.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (run + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Eigen::VectorXd gen_ar_field(int rows, int cols, double sigma2_s, double rho_r, double rho_c,
                             std::mt19937_64& rng) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("gen_ar_field: empty grid");
  if (std::abs(rho_r) >= 1.0 || std::abs(rho_c) >= 1.0)
    throw std::invalid_argument("gen_ar_field: |rho| must be below 1");

  const Eigen::MatrixXd lr = ar1_cholesky(rows, rho_r);
  const Eigen::MatrixXd lc = ar1_cholesky(cols, rho_c);

  std::normal_distribution<double> norm;
  Eigen::MatrixXd noise(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) noise(i, j) = norm(rng);

  Eigen::MatrixXd field = std::sqrt(sigma2_s) * lr * noise * lc.transpose();
  Eigen::VectorXd out(rows * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[i * cols + j] = field(i, j);
  return out;
}

std::vector<int> gen_design(int m_g, int r, int block_size, int rows, int cols,
                            std::mt19937_64& rng) {
  if (m_g < 1 || r < 1 || block_size < 1 || rows < 1 || cols < 1)
    throw std::invalid_argument("gen_design: all sizes must be positive");
  const int plots = rows * cols;
  if (m_g * r > plots)
    throw std::invalid_argument("gen_design: not enough plots for all replicates");
  if (cols % r != 0)
    throw std::invalid_argument("gen_design: replicates must split the columns evenly");
  const int rep_cols = cols / r;
  if (m_g > rows * rep_cols)
    throw std::invalid_argument("gen_design: replicate span too small for the genotype list");

  std::vector<int> plot(plots, -1);
  std::vector<int> order(m_g);
  std::iota(order.begin(), order.end(), 0);

  for (int rep = 0; rep < r; ++rep) {
    std::shuffle(order.begin(), order.end(), rng);
    // Column-major walk through the replicate span: consecutive block_size
    // plots form an incomplete block.
    int idx = 0;
    for (int j = rep * rep_cols; j < (rep + 1) * rep_cols && idx < m_g; ++j)
      for (int i = 0; i < rows && idx < m_g; ++i) plot[i * cols + j] = order[idx++];
  }
  return plot;
}

SimulationReport run_study(const SimulationConfig& cfg) {
  if (cfg.n_runs < 1) throw std::invalid_argument("run_study: needs at least one run");
  if (cfg.variants.empty()) throw std::invalid_argument("run_study: no variants requested");

  SimulationReport report;
  report.config = cfg;

  for (const auto& variant : cfg.variants) {
    std::vector<RunResult> runs(cfg.n_runs);
    const int workers = std::clamp(cfg.threads, 1, cfg.n_runs);
    if (workers == 1) {
      for (int run = 0; run < cfg.n_runs; ++run)
        runs[run] = one_run(cfg, variant, static_cast<std::uint64_t>(run));
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (int run = next++; run < cfg.n_runs; run = next++)
            runs[run] = one_run(cfg, variant, static_cast<std::uint64_t>(run));
        });
      for (auto& t : pool) t.join();
    }
    report.variants.push_back(summarize(variant, cfg, runs));
  }
  return report;
}

}  // namespace spats
