#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>
#include <Eigen/Dense>

#include "spats/mixed_model.hpp"
#include "spats/psanova.hpp"

namespace spats {

struct TrialRecord {
  double response = 0.0;
  bool missing = false;
  std::string genotype;
  int row = 0;
  int col = 0;
  std::map<std::string, std::string> factors;
  std::map<std::string, double> covariates;
};

// Observations on a row/column grid. (row, col) pairs are unique; missing
// responses stay in the layout but are excluded from all design rows.
struct TrialData {
  std::vector<TrialRecord> records;
  int row_min = 0, row_max = 0, col_min = 0, col_max = 0;

  void update_extents();
  int n_rows() const { return row_max - row_min + 1; }
  int n_cols() const { return col_max - col_min + 1; }
};

struct ModelSpec {
  bool genotype_random = false;
  std::vector<std::string> check_genotypes;  // always fixed, even with random lines
  std::vector<std::string> fixed_covariates;
  std::vector<std::string> fixed_factors;    // reference level dropped
  std::vector<std::string> random_factors;   // identity precision
  SpatialConfig spatial;                     // nseg < 0: as many segments as rows/cols
};

// Centering to mean zero and scaling by the half-range, fixed at build time and
// reused for prediction grids.
struct CoordScaler {
  double center = 0.0;
  double half_range = 1.0;
  double operator()(double x) const { return (x - center) / half_range; }
};

// A fully assembled trial model: the Henderson system plus everything needed
// to interpret and re-evaluate it (spatial design, label maps, layout).
struct TrialModel {
  MixedModelSystem system;
  PsAnovaDesign design;
  CoordScaler scale_u, scale_v;  // u = row coordinate, v = column coordinate
  std::vector<int> record_index;  // design row -> index into TrialData.records

  // Fixed-part layout: x columns are [spatial bilinear (4) | genotype | others].
  int fixed_genotype_offset = -1;  // -1 when genotype is random and no checks
  int fixed_genotype_cols = 0;
  std::vector<std::string> fixed_genotype_levels;  // coded levels (reference dropped)
  std::string genotype_reference;                   // empty unless genotype fixed

  int genotype_block = -1;  // index into system.blocks when genotype is random
  std::vector<std::string> genotype_levels;  // random genotype level order
  std::map<std::string, std::vector<std::string>> factor_levels;  // per random factor

  int layout_rows = 0, layout_cols = 0;
  int row_min = 0, col_min = 0;

  Eigen::Index n() const { return system.n(); }
};

TrialModel build_system(const TrialData& data, const ModelSpec& spec);

struct PredictionGrid {
  Eigen::VectorXd row_coord, col_coord;  // raw coordinates, row-major over the grid
  Eigen::VectorXd u_scaled, v_scaled;
  std::vector<bool> observed_cell;  // false over holes in irregular layouts
  int n_rows = 0, n_cols = 0;
};

// Regular grid over the layout bounding box with at least the layout's own
// resolution; plot centers are reproduced exactly when the resolution matches.
PredictionGrid prediction_grid(const TrialData& data, const TrialModel& model,
                               int resolution_rows, int resolution_cols);

}  // namespace spats
