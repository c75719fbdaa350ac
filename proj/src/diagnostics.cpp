#include "spats/diagnostics.hpp"

#include <cstdlib>
#include <map>
#include <stdexcept>

namespace spats {

EdTable ed_table(const TrialModel& model, const FittedModel& fitted) {
  EdTable t;
  t.nobs = static_cast<int>(model.n());

  auto add = [&](const std::string& name, double md, double nd, double ed, char type) {
    t.rows.push_back({name, md, nd, ed, nd > 0 ? ed / nd : 0.0, type});
  };

  if (model.genotype_block < 0 && model.fixed_genotype_cols > 0)
    add("gen", model.fixed_genotype_cols, model.fixed_genotype_cols, model.fixed_genotype_cols,
        'F');
  else if (model.fixed_genotype_cols > 0)
    add("checks", model.fixed_genotype_cols, model.fixed_genotype_cols, model.fixed_genotype_cols,
        'F');
  add("Intercept", 1, 1, 1, 'F');

  // Remaining fixed terms, grouped by the factor prefix.
  {
    std::map<std::string, int> groups;
    std::vector<std::string> order;
    const int first = model.fixed_genotype_offset + model.fixed_genotype_cols;
    for (size_t j = first; j < model.system.x_names.size(); ++j) {
      std::string name = model.system.x_names[j];
      if (auto pos = name.find(':'); pos != std::string::npos) name = name.substr(0, pos);
      if (groups.emplace(name, 0).second) order.push_back(name);
      ++groups[name];
    }
    for (const auto& name : order)
      add(name, groups[name], groups[name], groups[name], 'F');
  }

  for (size_t k = 5; k < model.system.blocks.size(); ++k) {
    const auto& b = model.system.blocks[k];
    add(b.name, b.size(), b.nominal_dim, fitted.effective_dims[k], 'R');
  }

  // Unpenalized bilinear columns of the spatial surface.
  add("col", 1, 1, 1, 'S');
  add("row", 1, 1, 1, 'S');
  add("row:col", 1, 1, 1, 'S');
  for (int k = 0; k < 5; ++k) {
    const auto& b = model.system.blocks[k];
    add(b.name, b.size(), b.nominal_dim, fitted.effective_dims[k], 'S');
  }

  for (const auto& r : t.rows) {
    t.total_model += r.model_dim;
    t.total_nominal += r.nominal_dim;
  }
  t.total_effective = fitted.total_ed();
  t.residual_ed = fitted.ed_residual;
  return t;
}

SurfaceDecomposition decompose_surface(const TrialModel& model, const FittedModel& fitted,
                                       const Eigen::VectorXd& u_scaled,
                                       const Eigen::VectorXd& v_scaled,
                                       bool include_intercept) {
  const SpatialEval eval = eval_psanova(model.design, u_scaled, v_scaled);
  SurfaceDecomposition d;
  Eigen::Vector4d beta = fitted.solve.beta_hat.head<4>();
  if (!include_intercept) beta[0] = 0.0;
  d.bilinear = eval.x_fixed * beta;
  d.total = d.bilinear;
  for (int k = 0; k < 5; ++k) {
    d.smooth[k] = eval.z_blocks[k] * fitted.solve.c_hat[k];
    d.total += d.smooth[k];
  }
  return d;
}

VariogramTable sample_variogram(const TrialData& data, const TrialModel& model,
                                const FittedModel& fitted) {
  const int n = static_cast<int>(model.n());
  if (n < 2) throw std::invalid_argument("sample_variogram: needs at least two plots");

  std::map<std::pair<int, int>, std::pair<double, long>> bins;
  for (int i = 0; i < n; ++i) {
    const auto& ri = data.records[model.record_index[i]];
    for (int j = i; j < n; ++j) {
      const auto& rj = data.records[model.record_index[j]];
      int dr = ri.row - rj.row;
      int dc = ri.col - rj.col;
      // gamma(d) = gamma(-d): keep the half plane dr >= 0, ties on dc >= 0.
      if (dr < 0 || (dr == 0 && dc < 0)) {
        dr = -dr;
        dc = -dc;
      }
      const double diff = fitted.solve.residuals[i] - fitted.solve.residuals[j];
      auto& bin = bins[{dr, dc}];
      bin.first += 0.5 * diff * diff;
      ++bin.second;
    }
  }

  VariogramTable t;
  for (const auto& [key, bin] : bins)
    t.rows.push_back({key.first, key.second, bin.first / bin.second, bin.second});
  return t;
}

}  // namespace spats
