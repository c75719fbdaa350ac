#pragma once

#include <string>
#include <vector>

#include "spats/diagnostics.hpp"
#include "spats/genetics.hpp"
#include "spats/reml.hpp"
#include "spats/simulation.hpp"
#include "spats/trial.hpp"

namespace spats {

// Shortest decimal that round-trips the exact double.
std::string format_number(double x);

struct TableOptions {
  std::string missing_token = "NA";
  char delimiter = 0;  // 0: auto-detect among comma, tab, semicolon
};

struct ColumnRoles {
  std::string response = "response";
  std::string genotype = "genotype";
  std::string row = "row";
  std::string col = "col";
};

// Delimited text with a header row. Extra columns are kept as factor levels;
// columns that parse as numbers throughout are additionally exposed as
// covariates. Errors carry path and line number.
TrialData read_trial(const std::string& path, const ColumnRoles& roles = {},
                     const TableOptions& options = {});

void write_trial(const std::string& path, const TrialData& data, const ColumnRoles& roles = {},
                 const TableOptions& options = {});

struct OutputFlags {
  bool tables = true;
  bool json = true;
  bool svg = false;
};

// Emits ed_table.csv, variances.csv, blups.csv, fitted.csv, trend_grid.csv,
// summary.json and optional trend.svg / residuals.svg into dir. Deterministic
// given the fit; returns the paths written.
std::vector<std::string> write_outputs(const std::string& dir, const TrialData& data,
                                       const TrialModel& model, const FittedModel& fitted,
                                       const PredictionGrid& grid,
                                       const SurfaceDecomposition& trend,
                                       const OutputFlags& flags = {});

void write_variogram(const std::string& path, const VariogramTable& table);

// simulation.csv (one row per variant) and simulation.json.
std::vector<std::string> write_simulation_report(const std::string& dir,
                                                 const SimulationReport& report);

// Diverging blue-white-red heatmap, one rect per cell, min/max annotated.
void write_heatmap_svg(const std::string& path, const std::vector<double>& values,
                       const std::vector<bool>& mask, int n_rows, int n_cols,
                       const std::string& title);

// Declarative run configuration; the CLI overlays inline flags on top.
struct RunConfig {
  std::string input;
  std::string output_dir;
  ColumnRoles roles;
  std::string missing_token = "NA";
  std::string delimiter;  // empty: auto

  bool genotype_as_random = false;
  std::vector<std::string> check_genotypes;
  std::vector<std::string> fixed;       // fixed factor columns
  std::vector<std::string> covariates;  // fixed numeric covariates
  std::vector<std::string> random_factors;

  int nseg_row = -1, nseg_col = -1;
  int degree = 3;
  int nest_div_row = -1, nest_div_col = -1;

  double tolerance = 1e-6;
  int max_iter = 200;
  int monitoring = 0;

  int resolution_rows = -1, resolution_cols = -1;  // -1: layout resolution
  OutputFlags emit;
  int threads = 1;

  ModelSpec model_spec() const;
  TableOptions table_options() const;
};

RunConfig load_config(const std::string& path);

}  // namespace spats
