#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "spats/reml.hpp"
#include "spats/trial.hpp"

namespace spats {

struct SimulationConfig {
  int rows = 10, cols = 20;
  int n_genotypes = 100;
  int replicates = 2;
  int block_size = 10;
  double sigma2_g = 1.0;
  double sigma2_s = 1.0;
  double sigma2 = 1.0;
  double rho_r = 0.5, rho_c = 0.5;
  int n_runs = 50;
  std::uint64_t seed = 1;
  std::vector<std::string> variants = {"spats"};  // "spats" and/or "rowcol"
  SpatialConfig spatial;                          // defaults resolved from the layout
  FitOptions fit;
  int threads = 1;
  int trace_level = 0;  // >=1: one line per run on stderr
};

struct VariantSummary {
  std::string variant;
  int runs_used = 0;           // converged runs entering the averages
  double convergence_rate = 0.0;  // fraction of n_runs
  double mean_log10_rmse = 0.0, sd_log10_rmse = 0.0;
  double bias_sigma2_g = 0.0, sd_sigma2_g = 0.0;
  double bias_sigma2 = 0.0, sd_sigma2 = 0.0;
  double mean_ed_s = 0.0, sd_ed_s = 0.0;  // spatial field ED excluding the intercept
};

struct SimulationReport {
  SimulationConfig config;
  std::vector<VariantSummary> variants;
};

// Deterministic per-run substream seed derived from (seed, run index).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t run);

// Separable AR(1) x AR(1) Gaussian field over the grid, row-major, with
// cov(xi_l, xi_p) = sigma2_s * rho_r^|dr| * rho_c^|dc|.
Eigen::VectorXd gen_ar_field(int rows, int cols, double sigma2_s, double rho_r, double rho_c,
                             std::mt19937_64& rng);

// Randomized resolvable incomplete block assignment: plot (row-major) ->
// genotype index. Each replicate is a contiguous span of columns containing
// every genotype once; within a replicate genotypes are randomized into
// column-blocks of block_size. Leftover plots are fillers (-1).
std::vector<int> gen_design(int m_g, int r, int block_size, int rows, int cols,
                            std::mt19937_64& rng);

SimulationReport run_study(const SimulationConfig& config);

}  // namespace spats
