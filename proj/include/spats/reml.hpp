#pragma once

#include <optional>
#include <vector>
#include <Eigen/Dense>

#include "spats/mixed_model.hpp"

namespace spats {

struct FitOptions {
  double tolerance = 1e-6;     // absolute change in REML deviance
  int max_iter = 200;
  double variance_floor_scale = 1e-10;  // floor = scale * var(y)
  std::optional<Eigen::VectorXd> init_variances;
  std::optional<double> init_sigma2;
  bool fix_variances = false;  // skip the outer loop, solve at the initial values
  int trace_level = 0;         // >=1: one line per iteration on stderr
};

struct FittedModel {
  SolveResult solve;
  Eigen::VectorXd variances;
  double sigma2 = 0.0;
  Eigen::VectorXd effective_dims;  // per random block
  double ed_residual = 0.0;
  int rank_x = 0;
  std::vector<double> deviance_path;
  bool converged = false;
  int iterations = 0;
  FitOptions options;

  double deviance() const { return deviance_path.empty() ? 0.0 : deviance_path.back(); }
  double total_ed() const { return rank_x + effective_dims.sum(); }
};

// Schall iteration: alternate Henderson solves, effective-dimension traces and
// the variance updates sigma_k^2 = c_k' Lambda_k^{-1} c_k / ED_k,
// sigma^2 = e'e / ED_e, until the REML deviance stabilizes.
FittedModel fit(const HendersonSolver& solver, const FitOptions& options = {});
FittedModel fit(const MixedModelSystem& system, const FitOptions& options = {});

// Warm restart from a previous fit with selectively overridden options.
FittedModel refit_with(const HendersonSolver& solver, const FittedModel& previous,
                       FitOptions overrides);

}  // namespace spats
