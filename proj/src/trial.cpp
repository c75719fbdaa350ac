#include "spats/trial.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace spats {

void TrialData::update_extents() {
  if (records.empty()) throw std::invalid_argument("trial data has no records");
  row_min = row_max = records.front().row;
  col_min = col_max = records.front().col;
  for (const auto& r : records) {
    row_min = std::min(row_min, r.row);
    row_max = std::max(row_max, r.row);
    col_min = std::min(col_min, r.col);
    col_max = std::max(col_max, r.col);
  }
}

namespace {

std::vector<std::string> sorted_levels(const std::set<std::string>& s) {
  return {s.begin(), s.end()};
}

// Levels must be carried by at least one non-missing record.
void check_connected(const std::string& what, const std::set<std::string>& all,
                     const std::set<std::string>& observed) {
  for (const auto& level : all)
    if (!observed.count(level))
      throw std::invalid_argument("build_system: " + what + " level '" + level +
                                  "' occurs only in missing-response plots");
}

}  // namespace

TrialModel build_system(const TrialData& data, const ModelSpec& spec) {
  if (data.records.empty()) throw std::invalid_argument("build_system: no records");

  std::set<std::pair<int, int>> coords;
  for (const auto& r : data.records) {
    if (!coords.insert({r.row, r.col}).second)
      throw std::invalid_argument("build_system: duplicate plot (" + std::to_string(r.row) +
                                  ", " + std::to_string(r.col) + ")");
  }

  TrialModel m;
  TrialData extents = data;
  extents.update_extents();
  m.row_min = extents.row_min;
  m.col_min = extents.col_min;
  m.layout_rows = extents.n_rows();
  m.layout_cols = extents.n_cols();

  for (size_t i = 0; i < data.records.size(); ++i)
    if (!data.records[i].missing) m.record_index.push_back(static_cast<int>(i));
  const int n = static_cast<int>(m.record_index.size());
  if (n == 0) throw std::invalid_argument("build_system: all responses missing");

  // Coordinates centered at the layout midpoint and scaled to [-1, 1]; the
  // transform depends only on the layout extents, not on missingness.
  m.scale_u = {0.5 * (extents.row_min + extents.row_max), 0.5 * (extents.row_max - extents.row_min)};
  m.scale_v = {0.5 * (extents.col_min + extents.col_max), 0.5 * (extents.col_max - extents.col_min)};
  if (m.scale_u.half_range <= 0 || m.scale_v.half_range <= 0)
    throw std::invalid_argument("build_system: degenerate layout (single row or column)");

  Eigen::VectorXd u(n), v(n), y(n);
  for (int i = 0; i < n; ++i) {
    const auto& r = data.records[m.record_index[i]];
    u[i] = m.scale_u(r.row);
    v[i] = m.scale_v(r.col);
    y[i] = r.response;
  }

  SpatialConfig cfg = spec.spatial;
  if (cfg.nseg_u < 1) cfg.nseg_u = m.layout_rows;
  if (cfg.nseg_v < 1) cfg.nseg_v = m.layout_cols;
  if (cfg.nest_div_u < 1) cfg.nest_div_u = (cfg.nseg_u % 2 == 0) ? 2 : 1;
  if (cfg.nest_div_v < 1) cfg.nest_div_v = (cfg.nseg_v % 2 == 0) ? 2 : 1;
  m.design = build_psanova(u, v, cfg);

  // Genotype level bookkeeping.
  const std::set<std::string> checks(spec.check_genotypes.begin(), spec.check_genotypes.end());
  std::set<std::string> geno_all, geno_obs;
  for (const auto& r : data.records) {
    geno_all.insert(r.genotype);
    if (!r.missing) geno_obs.insert(r.genotype);
  }
  check_connected("genotype", geno_all, geno_obs);

  auto factor_column = [&](const std::string& name, const TrialRecord& r) -> const std::string& {
    auto it = r.factors.find(name);
    if (it == r.factors.end())
      throw std::invalid_argument("build_system: factor '" + name + "' missing from record");
    return it->second;
  };

  // Fixed design: bilinear spatial columns first, then genotype, then extras.
  std::vector<std::pair<std::string, Eigen::VectorXd>> x_cols;
  x_cols.emplace_back("Intercept", m.design.x_fixed.col(0));
  x_cols.emplace_back("row", m.design.x_fixed.col(1));
  x_cols.emplace_back("col", m.design.x_fixed.col(2));
  x_cols.emplace_back("row:col", m.design.x_fixed.col(3));

  m.fixed_genotype_offset = static_cast<int>(x_cols.size());
  if (!spec.genotype_random) {
    auto levels = sorted_levels(geno_all);
    m.genotype_reference = levels.front();
    for (size_t l = 1; l < levels.size(); ++l) {
      Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i)
        if (data.records[m.record_index[i]].genotype == levels[l]) col[i] = 1.0;
      x_cols.emplace_back("gen:" + levels[l], std::move(col));
      m.fixed_genotype_levels.push_back(levels[l]);
    }
  } else {
    for (const auto& label : sorted_levels(checks)) {
      if (!geno_all.count(label))
        throw std::invalid_argument("build_system: check genotype '" + label + "' not in data");
      Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i)
        if (data.records[m.record_index[i]].genotype == label) col[i] = 1.0;
      x_cols.emplace_back("check:" + label, std::move(col));
      m.fixed_genotype_levels.push_back(label);
    }
  }
  m.fixed_genotype_cols = static_cast<int>(x_cols.size()) - m.fixed_genotype_offset;

  for (const auto& name : spec.fixed_covariates) {
    Eigen::VectorXd col(n);
    for (int i = 0; i < n; ++i) {
      const auto& r = data.records[m.record_index[i]];
      auto it = r.covariates.find(name);
      if (it == r.covariates.end())
        throw std::invalid_argument("build_system: covariate '" + name + "' missing from record");
      col[i] = it->second;
    }
    x_cols.emplace_back(name, std::move(col));
  }

  for (const auto& name : spec.fixed_factors) {
    std::set<std::string> all, obs;
    for (const auto& r : data.records) {
      all.insert(factor_column(name, r));
      if (!r.missing) obs.insert(r.factors.at(name));
    }
    check_connected("factor " + name, all, obs);
    auto levels = sorted_levels(all);
    for (size_t l = 1; l < levels.size(); ++l) {  // reference level dropped
      Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i)
        if (factor_column(name, data.records[m.record_index[i]]) == levels[l]) col[i] = 1.0;
      x_cols.emplace_back(name + ":" + levels[l], std::move(col));
    }
  }

  m.system.x.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  for (size_t j = 0; j < x_cols.size(); ++j) {
    m.system.x.col(j) = x_cols[j].second;
    m.system.x_names.push_back(x_cols[j].first);
  }
  m.system.y = std::move(y);

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.system.x);
    qr.setThreshold(1e-8);
    if (qr.rank() < m.system.x.cols()) {
      const int bad = qr.colsPermutation().indices()[qr.rank()];
      throw std::invalid_argument("build_system: fixed column '" + m.system.x_names[bad] +
                                  "' is collinear with the rest of the fixed design");
    }
  }

  // Random blocks: the five spatial blocks first, then user factors, then the
  // genotype block when random.
  const char* smooth_names[5] = {"f(col)", "f(row)", "f(col):row", "col:f(row)",
                                 "f(col):f(row)"};
  for (int k = 0; k < 5; ++k) {
    RandomBlock b;
    b.name = smooth_names[k];
    b.z = m.design.z_blocks[k];
    b.precision = m.design.precision[k];
    b.nominal_dim = b.size();
    b.type = BlockType::Smooth;
    m.system.blocks.push_back(std::move(b));
  }

  for (const auto& name : spec.random_factors) {
    std::set<std::string> all, obs;
    for (const auto& r : data.records) {
      all.insert(factor_column(name, r));
      if (!r.missing) obs.insert(r.factors.at(name));
    }
    check_connected("factor " + name, all, obs);
    auto levels = sorted_levels(all);
    RandomBlock b;
    b.name = name;
    b.z = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(levels.size()));
    for (int i = 0; i < n; ++i) {
      const auto& lv = factor_column(name, data.records[m.record_index[i]]);
      const auto pos = std::lower_bound(levels.begin(), levels.end(), lv) - levels.begin();
      b.z(i, pos) = 1.0;
    }
    b.precision = Eigen::VectorXd::Ones(levels.size());
    b.nominal_dim = static_cast<int>(levels.size()) - 1;
    b.type = BlockType::Factor;
    m.factor_levels[name] = std::move(levels);
    m.system.blocks.push_back(std::move(b));
  }

  if (spec.genotype_random) {
    std::set<std::string> lines;
    for (const auto& g : geno_all)
      if (!checks.count(g)) lines.insert(g);
    if (lines.empty()) throw std::invalid_argument("build_system: no random genotype lines");
    m.genotype_levels = sorted_levels(lines);
    RandomBlock b;
    b.name = "gen";
    b.z = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m.genotype_levels.size()));
    for (int i = 0; i < n; ++i) {
      const auto& g = data.records[m.record_index[i]].genotype;
      if (checks.count(g)) continue;  // check plots carry zero rows
      const auto pos =
          std::lower_bound(m.genotype_levels.begin(), m.genotype_levels.end(), g) -
          m.genotype_levels.begin();
      b.z(i, pos) = 1.0;
    }
    b.precision = Eigen::VectorXd::Ones(m.genotype_levels.size());
    b.nominal_dim = static_cast<int>(m.genotype_levels.size()) - 1;
    b.type = BlockType::Factor;
    m.genotype_block = static_cast<int>(m.system.blocks.size());
    m.system.blocks.push_back(std::move(b));
  }

  return m;
}

PredictionGrid prediction_grid(const TrialData& data, const TrialModel& model,
                               int resolution_rows, int resolution_cols) {
  if (resolution_rows < 1 || resolution_cols < 1)
    throw std::invalid_argument("prediction_grid: zero resolution");
  if (resolution_rows < model.layout_rows || resolution_cols < model.layout_cols)
    throw std::invalid_argument("prediction_grid: resolution below the layout extents");

  std::set<std::pair<int, int>> cells;
  for (const auto& r : data.records) cells.insert({r.row, r.col});

  PredictionGrid g;
  g.n_rows = resolution_rows;
  g.n_cols = resolution_cols;
  const Eigen::Index total = static_cast<Eigen::Index>(resolution_rows) * resolution_cols;
  g.row_coord.resize(total);
  g.col_coord.resize(total);
  g.u_scaled.resize(total);
  g.v_scaled.resize(total);
  g.observed_cell.resize(total);

  const double row_lo = model.row_min, row_hi = model.row_min + model.layout_rows - 1;
  const double col_lo = model.col_min, col_hi = model.col_min + model.layout_cols - 1;
  Eigen::Index idx = 0;
  for (int i = 0; i < resolution_rows; ++i) {
    const double rr = resolution_rows == 1
                          ? row_lo
                          : row_lo + (row_hi - row_lo) * i / (resolution_rows - 1);
    for (int j = 0; j < resolution_cols; ++j, ++idx) {
      const double cc = resolution_cols == 1
                            ? col_lo
                            : col_lo + (col_hi - col_lo) * j / (resolution_cols - 1);
      g.row_coord[idx] = rr;
      g.col_coord[idx] = cc;
      g.u_scaled[idx] = model.scale_u(rr);
      g.v_scaled[idx] = model.scale_v(cc);
      g.observed_cell[idx] =
          cells.count({static_cast<int>(std::lround(rr)), static_cast<int>(std::lround(cc))}) > 0;
    }
  }
  return g;
}

}  // namespace spats
