#pragma once

#include <array>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "spats/reml.hpp"
#include "spats/trial.hpp"

namespace spats {

struct EdRow {
  std::string name;
  double model_dim = 0.0;
  double nominal_dim = 0.0;
  double effective_dim = 0.0;
  double ratio = 0.0;
  char type = 'F';  // F fixed, R random factor, S smooth/semiparametric
};

struct EdTable {
  std::vector<EdRow> rows;
  double total_model = 0.0;
  double total_nominal = 0.0;
  double total_effective = 0.0;
  double residual_ed = 0.0;
  int nobs = 0;
};

EdTable ed_table(const TrialModel& model, const FittedModel& fitted);

// ANOVA-type decomposition of the spatial trend at arbitrary (scaled) points.
// total = bilinear + sum of the five smooth components, exact by construction.
struct SurfaceDecomposition {
  Eigen::VectorXd bilinear;
  std::array<Eigen::VectorXd, 5> smooth;
  Eigen::VectorXd total;
};

SurfaceDecomposition decompose_surface(const TrialModel& model, const FittedModel& fitted,
                                       const Eigen::VectorXd& u_scaled,
                                       const Eigen::VectorXd& v_scaled,
                                       bool include_intercept = false);

struct VariogramRow {
  int row_displacement = 0;
  int col_displacement = 0;
  double value = 0.0;  // mean half squared residual difference
  long pairs = 0;
};

struct VariogramTable {
  std::vector<VariogramRow> rows;
};

// Integer plot displacements over the half plane row_displacement >= 0 (sign
// reflections merged); value at (0,0) is exactly zero.
VariogramTable sample_variogram(const TrialData& data, const TrialModel& model,
                                const FittedModel& fitted);

}  // namespace spats
