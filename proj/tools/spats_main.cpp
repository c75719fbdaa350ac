#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spats/diagnostics.hpp"
#include "spats/genetics.hpp"
#include "spats/io.hpp"
#include "spats/reml.hpp"
#include "spats/simulation.hpp"
#include "spats/trial.hpp"

namespace {

using namespace spats;

std::string resolve_output_dir(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("SPATS_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

FitOptions fit_options(const RunConfig& cfg) {
  FitOptions opts;
  opts.tolerance = cfg.tolerance;
  opts.max_iter = cfg.max_iter;
  opts.trace_level = cfg.monitoring;
  return opts;
}

struct Fitted {
  TrialData data;
  TrialModel model;
  FittedModel fitted;
};

Fitted run_fit(const RunConfig& cfg) {
  if (cfg.input.empty()) throw std::runtime_error("no input file (--input)");
  Fitted out;
  out.data = read_trial(cfg.input, cfg.roles, cfg.table_options());
  out.model = build_system(out.data, cfg.model_spec());
  out.fitted = fit(out.model.system, fit_options(cfg));
  return out;
}

void print_summary(const Fitted& f) {
  const EdTable table = ed_table(f.model, f.fitted);
  const auto& blocks = f.model.system.blocks;

  // Genotype first, user random factors next, the spatial surface last.
  std::vector<size_t> order;
  if (f.model.genotype_block >= 0) order.push_back(f.model.genotype_block);
  for (size_t k = 5; k < blocks.size(); ++k)
    if (static_cast<int>(k) != f.model.genotype_block) order.push_back(k);
  for (size_t k = 0; k < 5; ++k) order.push_back(k);

  std::printf("Variance components:\n");
  std::printf("%-18s %12s %13s %17s\n", "", "Variance", "SD", "log10(lambda)");
  for (size_t k : order) {
    const double v = f.fitted.variances[k];
    std::printf("%-18s %12.3e %13.3e %17.5f\n", blocks[k].name.c_str(), v, std::sqrt(v),
                std::log10(f.fitted.sigma2 / v));
  }
  std::printf("\n%-18s %12.3e %13.3e\n\n", "Residual", f.fitted.sigma2,
              std::sqrt(f.fitted.sigma2));

  std::printf("Dimensions:\n");
  std::printf("%-18s %9s %9s %9s %9s %8s\n", "", "Effective", "Model", "Nominal", "Ratio", "Type");
  for (const auto& r : table.rows)
    std::printf("%-18s %9.1f %9.0f %9.0f %9.2f %8c\n", r.name.c_str(), r.effective_dim,
                r.model_dim, r.nominal_dim, r.ratio, r.type);
  std::printf("\n%-18s %9.1f %9.0f %9.0f %9.2f\n", "Total", table.total_effective,
              table.total_model, table.total_nominal,
              table.total_nominal > 0 ? table.total_effective / table.total_nominal : 0.0);
  std::printf("%-18s %9.1f\n", "Residual", table.residual_ed);
  std::printf("%-18s %9d\n\n", "Nobs", table.nobs);
  std::printf("Type codes: F 'Fixed'    R 'Random'    S 'Smooth/Semiparametric'\n");

  if (f.model.genotype_block >= 0) {
    const auto oakey = heritability(f.model, f.fitted, HeritabilityMode::Oakey);
    const auto cullis = heritability(f.model, f.fitted, HeritabilityMode::Cullis);
    std::printf("\nHeritability: Oakey %.3f    Cullis %.3f\n", oakey.value, cullis.value);
  }
}

std::pair<PredictionGrid, SurfaceDecomposition> trend_on_grid(const Fitted& f,
                                                              const RunConfig& cfg) {
  const int rr = cfg.resolution_rows > 0 ? cfg.resolution_rows : f.model.layout_rows;
  const int rc = cfg.resolution_cols > 0 ? cfg.resolution_cols : f.model.layout_cols;
  PredictionGrid grid = prediction_grid(f.data, f.model, rr, rc);
  SurfaceDecomposition trend = decompose_surface(f.model, f.fitted, grid.u_scaled, grid.v_scaled);
  return {std::move(grid), std::move(trend)};
}

int cmd_fit(const RunConfig& cfg) {
  Fitted f = run_fit(cfg);
  auto [grid, trend] = trend_on_grid(f, cfg);
  write_outputs(resolve_output_dir(cfg.output_dir), f.data, f.model, f.fitted, grid, trend,
                cfg.emit);
  print_summary(f);
  if (!f.fitted.converged)
    std::cerr << "warning: not converged after " << f.fitted.iterations << " iterations\n";
  return f.fitted.converged ? 0 : 2;
}

int cmd_predict(const RunConfig& cfg) {
  Fitted f = run_fit(cfg);
  auto [grid, trend] = trend_on_grid(f, cfg);
  const std::string dir = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  const auto grid_path = (std::filesystem::path(dir) / "trend_grid.csv").string();
  {
    std::ofstream out(grid_path);
    if (!out) throw std::runtime_error("cannot write " + grid_path);
    out << "row,col,observed,trend\n";
    for (Eigen::Index i = 0; i < grid.row_coord.size(); ++i)
      out << format_number(grid.row_coord[i]) << "," << format_number(grid.col_coord[i]) << ","
          << (grid.observed_cell[i] ? 1 : 0) << "," << format_number(trend.total[i]) << "\n";
  }
  if (cfg.emit.svg) {
    std::vector<double> vals(trend.total.data(), trend.total.data() + trend.total.size());
    write_heatmap_svg((std::filesystem::path(dir) / "trend.svg").string(), vals,
                      grid.observed_cell, grid.n_rows, grid.n_cols, "fitted spatial trend");
  }

  std::printf("trend grid %d x %d written to %s\n", grid.n_rows, grid.n_cols, grid_path.c_str());
  return f.fitted.converged ? 0 : 2;
}

int cmd_variogram(const RunConfig& cfg) {
  Fitted f = run_fit(cfg);
  const VariogramTable table = sample_variogram(f.data, f.model, f.fitted);
  const std::string dir = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  const auto path = (std::filesystem::path(dir) / "variogram.csv").string();
  write_variogram(path, table);

  if (cfg.emit.svg) {
    int max_dr = 0, min_dc = 0, max_dc = 0;
    for (const auto& r : table.rows) {
      max_dr = std::max(max_dr, r.row_displacement);
      min_dc = std::min(min_dc, r.col_displacement);
      max_dc = std::max(max_dc, r.col_displacement);
    }
    const int nr = max_dr + 1, nc = max_dc - min_dc + 1;
    std::vector<double> vals(static_cast<size_t>(nr) * nc, 0.0);
    std::vector<bool> mask(vals.size(), false);
    for (const auto& r : table.rows) {
      const size_t idx =
          static_cast<size_t>(r.row_displacement) * nc + (r.col_displacement - min_dc);
      vals[idx] = r.value;
      mask[idx] = true;
    }
    write_heatmap_svg((std::filesystem::path(dir) / "variogram.svg").string(), vals, mask, nr, nc,
                      "sample variogram");
  }

  std::printf("variogram with %zu displacement bins written to %s\n", table.rows.size(),
              path.c_str());
  return f.fitted.converged ? 0 : 2;
}

int cmd_simulate(const SimulationConfig& cfg, const std::string& output_dir) {
  const SimulationReport report = run_study(cfg);
  const auto written = write_simulation_report(resolve_output_dir(output_dir), report);

  std::printf("%-10s %6s %8s %16s %14s %12s %10s\n", "variant", "runs", "conv", "mean log10 RMSE",
              "bias sigma2_g", "bias sigma2", "mean ED_s");
  for (const auto& v : report.variants)
    std::printf("%-10s %6d %8.2f %16.4f %14.4f %12.4f %10.2f\n", v.variant.c_str(), v.runs_used,
                v.convergence_rate, v.mean_log10_rmse, v.bias_sigma2_g, v.bias_sigma2, v.mean_ed_s);
  for (const auto& p : written) std::fprintf(stderr, "wrote %s\n", p.c_str());
  return 0;
}

// A --config file seeds the defaults; inline flags take precedence.
std::string config_path_from_argv(int argc, char** argv) {
  for (int i = 1; i < argc - 1; ++i)
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    if (const auto path = config_path_from_argv(argc, argv); !path.empty())
      cfg = load_config(path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"spatial analysis of field trials with P-splines"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "declarative run configuration (JSON)");

  std::vector<int> nseg, nest_div, resolution;
  auto add_model_flags = [&](CLI::App* cmd) {
    // already consumed by the pre-parse above; registered so CLI11 accepts it
    cmd->add_option("--config", config_path, "declarative run configuration (JSON)");
    cmd->add_option("--input", cfg.input, "trial data file");
    cmd->add_option("--output", cfg.output_dir, "output directory");
    cmd->add_option("--response", cfg.roles.response, "response column");
    cmd->add_option("--genotype", cfg.roles.genotype, "genotype column");
    cmd->add_option("--row", cfg.roles.row, "row coordinate column");
    cmd->add_option("--col", cfg.roles.col, "column coordinate column");
    cmd->add_option("--missing", cfg.missing_token, "missing value token");
    cmd->add_option("--delimiter", cfg.delimiter, "field delimiter (single char or 'tab')");
    cmd->add_flag("--genotype_as_random", cfg.genotype_as_random, "genotype as random effect");
    cmd->add_option("--checks", cfg.check_genotypes, "check genotypes kept fixed");
    cmd->add_option("--fixed", cfg.fixed, "fixed factor columns");
    cmd->add_option("--covariates", cfg.covariates, "fixed numeric covariate columns");
    cmd->add_option("--random", cfg.random_factors, "random factor columns");
    cmd->add_option("--nseg", nseg, "segments (row col)")->expected(2);
    cmd->add_option("--degree", cfg.degree, "B-spline degree");
    cmd->add_option("--nest_div", nest_div, "nesting divisors (row col)")->expected(2);
    cmd->add_option("--tolerance", cfg.tolerance, "deviance convergence tolerance");
    cmd->add_option("--max_iter", cfg.max_iter, "iteration cap");
    cmd->add_option("--monitoring", cfg.monitoring, "trace level (0 silent)");
    cmd->add_option("--resolution", resolution, "prediction grid (rows cols)")->expected(2);
    cmd->add_flag("--svg,!--no-svg", cfg.emit.svg, "emit SVG heatmaps");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit the spatial model and emit the bundle");
  add_model_flags(fit_cmd);
  CLI::App* predict_cmd = app.add_subcommand("predict", "spatial trend on a prediction grid");
  add_model_flags(predict_cmd);
  CLI::App* vario_cmd = app.add_subcommand("variogram", "sample variogram of the residuals");
  add_model_flags(vario_cmd);

  SimulationConfig sim;
  sim.trace_level = 0;
  std::string sim_output;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "AR(1)xAR(1) simulation study");
  sim_cmd->add_option("--output", sim_output, "output directory");
  sim_cmd->add_option("--rows", sim.rows, "field rows");
  sim_cmd->add_option("--cols", sim.cols, "field columns");
  sim_cmd->add_option("--genotypes", sim.n_genotypes, "genotype count");
  sim_cmd->add_option("--replicates", sim.replicates, "replicates per genotype");
  sim_cmd->add_option("--block", sim.block_size, "incomplete block size");
  sim_cmd->add_option("--sigma2_g", sim.sigma2_g, "genetic variance");
  sim_cmd->add_option("--sigma2_s", sim.sigma2_s, "spatial variance");
  sim_cmd->add_option("--sigma2", sim.sigma2, "nugget variance");
  sim_cmd->add_option("--rho_r", sim.rho_r, "row autocorrelation");
  sim_cmd->add_option("--rho_c", sim.rho_c, "column autocorrelation");
  sim_cmd->add_option("--runs", sim.n_runs, "number of simulated trials");
  sim_cmd->add_option("--seed", sim.seed, "stream seed");
  sim_cmd->add_option("--variants", sim.variants, "models to fit (spats, rowcol)");
  sim_cmd->add_option("--threads", sim.threads, "worker cap for parallel runs");
  sim_cmd->add_option("--tolerance", sim.fit.tolerance, "deviance convergence tolerance");
  sim_cmd->add_option("--max_iter", sim.fit.max_iter, "iteration cap");
  sim_cmd->add_option("--monitoring", sim.trace_level, "per-run log at >= 1");

  CLI11_PARSE(app, argc, argv);

  if (nseg.size() == 2) {
    cfg.nseg_row = nseg[0];
    cfg.nseg_col = nseg[1];
  }
  if (nest_div.size() == 2) {
    cfg.nest_div_row = nest_div[0];
    cfg.nest_div_col = nest_div[1];
  }
  if (resolution.size() == 2) {
    cfg.resolution_rows = resolution[0];
    cfg.resolution_cols = resolution[1];
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(cfg);
    if (predict_cmd->parsed()) return cmd_predict(cfg);
    if (vario_cmd->parsed()) return cmd_variogram(cfg);
    if (sim_cmd->parsed()) return cmd_simulate(sim, sim_output);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
