#include "spats/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spats {

namespace {

using nlohmann::json;

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

bool parse_int(const std::string& s, int& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

char detect_delimiter(const std::string& header) {
  const char candidates[] = {',', '\t', ';'};
  char best = ',';
  long best_count = -1;
  for (char c : candidates) {
    const long count = std::count(header.begin(), header.end(), c);
    if (count > best_count) {
      best = c;
      best_count = count;
    }
  }
  return best;
}

[[noreturn]] void fail_at(const std::string& path, int line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

json ed_row_json(const EdRow& r) {
  return {{"name", r.name},         {"type", std::string(1, r.type)},
          {"model_dim", r.model_dim}, {"nominal_dim", r.nominal_dim},
          {"effective_dim", r.effective_dim}, {"ratio", r.ratio}};
}

// Fixed diverging ramp, symmetric about zero: blue, white, red.
std::string ramp_color(double v, double amax) {
  const double t = amax > 0 ? std::clamp(0.5 + v / (2.0 * amax), 0.0, 1.0) : 0.5;
  const int lo[3] = {58, 76, 192}, mid[3] = {255, 255, 255}, hi[3] = {180, 4, 38};
  int rgb[3];
  for (int c = 0; c < 3; ++c) {
    if (t < 0.5)
      rgb[c] = static_cast<int>(lo[c] + (mid[c] - lo[c]) * (t / 0.5));
    else
      rgb[c] = static_cast<int>(mid[c] + (hi[c] - mid[c]) * ((t - 0.5) / 0.5));
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

}  // namespace

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, p);
}

TrialData read_trial(const std::string& path, const ColumnRoles& roles,
                     const TableOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) fail_at(path, 1, "empty file");
  line = strip(line);
  const char delim = options.delimiter ? options.delimiter : detect_delimiter(line);

  std::vector<std::string> header = split(line, delim);
  for (auto& h : header) h = strip(h);
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) fail_at(path, 1, "duplicate column '" + h + "'");
  }

  auto find_col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail_at(path, 1, "missing required column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };
  const int c_resp = find_col(roles.response);
  const int c_gen = find_col(roles.genotype);
  const int c_row = find_col(roles.row);
  const int c_col = find_col(roles.col);

  std::vector<int> extra;
  for (int j = 0; j < static_cast<int>(header.size()); ++j)
    if (j != c_resp && j != c_gen && j != c_row && j != c_col) extra.push_back(j);

  TrialData data;
  std::set<std::pair<int, int>> coords;
  std::vector<bool> numeric(header.size(), true);

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    std::vector<std::string> fields = split(line, delim);
    if (fields.size() != header.size())
      fail_at(path, lineno,
              "expected " + std::to_string(header.size()) + " fields, got " +
                  std::to_string(fields.size()));
    for (auto& f : fields) f = strip(f);

    TrialRecord rec;
    if (fields[c_resp].empty() || fields[c_resp] == options.missing_token)
      rec.missing = true;
    else if (!parse_double(fields[c_resp], rec.response))
      fail_at(path, lineno, "bad response '" + fields[c_resp] + "'");
    rec.genotype = fields[c_gen];
    if (rec.genotype.empty()) fail_at(path, lineno, "empty genotype");
    if (!parse_int(fields[c_row], rec.row)) fail_at(path, lineno, "bad row '" + fields[c_row] + "'");
    if (!parse_int(fields[c_col], rec.col)) fail_at(path, lineno, "bad col '" + fields[c_col] + "'");
    if (!coords.insert({rec.row, rec.col}).second)
      fail_at(path, lineno,
              "duplicate plot (" + fields[c_row] + ", " + fields[c_col] + ")");

    for (int j : extra) {
      rec.factors[header[j]] = fields[j];
      double v;
      if (fields[j] == options.missing_token || !parse_double(fields[j], v)) numeric[j] = false;
    }
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) fail_at(path, lineno, "no data rows");

  // Columns numeric throughout double as covariates.
  for (int j : extra)
    if (numeric[j])
      for (auto& rec : data.records) {
        double v;
        parse_double(rec.factors[header[j]], v);
        rec.covariates[header[j]] = v;
      }

  data.update_extents();
  return data;
}

void write_trial(const std::string& path, const TrialData& data, const ColumnRoles& roles,
                 const TableOptions& options) {
  const char delim = options.delimiter ? options.delimiter : ',';

  std::set<std::string> factor_cols, covariate_cols;
  for (const auto& rec : data.records) {
    for (const auto& [k, v] : rec.factors) factor_cols.insert(k);
    for (const auto& [k, v] : rec.covariates)
      if (!factor_cols.count(k)) covariate_cols.insert(k);
  }
  for (const auto& k : factor_cols) covariate_cols.erase(k);

  auto out = open_out(path);
  out << roles.response << delim << roles.genotype << delim << roles.row << delim << roles.col;
  for (const auto& k : factor_cols) out << delim << k;
  for (const auto& k : covariate_cols) out << delim << k;
  out << "\n";

  for (const auto& rec : data.records) {
    out << (rec.missing ? options.missing_token : format_number(rec.response)) << delim
        << rec.genotype << delim << rec.row << delim << rec.col;
    for (const auto& k : factor_cols) {
      auto it = rec.factors.find(k);
      out << delim << (it != rec.factors.end() ? it->second : options.missing_token);
    }
    for (const auto& k : covariate_cols) {
      auto it = rec.covariates.find(k);
      out << delim
          << (it != rec.covariates.end() ? format_number(it->second) : options.missing_token);
    }
    out << "\n";
  }
}

std::vector<std::string> write_outputs(const std::string& dir, const TrialData& data,
                                       const TrialModel& model, const FittedModel& fitted,
                                       const PredictionGrid& grid,
                                       const SurfaceDecomposition& trend,
                                       const OutputFlags& flags) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  auto path = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };

  const EdTable table = ed_table(model, fitted);

  if (flags.tables) {
    {
      auto out = open_out(path("ed_table.csv"));
      out << "name,type,model_dim,nominal_dim,effective_dim,ratio\n";
      for (const auto& r : table.rows)
        out << r.name << "," << r.type << "," << format_number(r.model_dim) << ","
            << format_number(r.nominal_dim) << "," << format_number(r.effective_dim) << ","
            << format_number(r.ratio) << "\n";
      written.push_back(path("ed_table.csv"));
    }
    {
      auto out = open_out(path("variances.csv"));
      out << "name,variance,log10_lambda\n";
      for (size_t k = 0; k < model.system.blocks.size(); ++k)
        out << model.system.blocks[k].name << "," << format_number(fitted.variances[k]) << ","
            << format_number(std::log10(fitted.sigma2 / fitted.variances[k])) << "\n";
      out << "residual," << format_number(fitted.sigma2) << ",\n";
      written.push_back(path("variances.csv"));
    }
    {
      auto out = open_out(path("blups.csv"));
      out << "genotype,value\n";
      for (const auto& g : genotype_predictions(model, fitted))
        out << g.genotype << "," << format_number(g.value) << "\n";
      written.push_back(path("blups.csv"));
    }
    {
      auto out = open_out(path("fitted.csv"));
      out << "row,col,genotype,response,fitted,residual\n";
      for (Eigen::Index i = 0; i < model.n(); ++i) {
        const auto& rec = data.records[model.record_index[i]];
        out << rec.row << "," << rec.col << "," << rec.genotype << ","
            << format_number(rec.response) << "," << format_number(fitted.solve.fitted[i]) << ","
            << format_number(fitted.solve.residuals[i]) << "\n";
      }
      written.push_back(path("fitted.csv"));
    }
    {
      auto out = open_out(path("trend_grid.csv"));
      out << "row,col,observed,trend\n";
      for (Eigen::Index i = 0; i < grid.row_coord.size(); ++i)
        out << format_number(grid.row_coord[i]) << "," << format_number(grid.col_coord[i]) << ","
            << (grid.observed_cell[i] ? 1 : 0) << "," << format_number(trend.total[i]) << "\n";
      written.push_back(path("trend_grid.csv"));
    }
  }

  if (flags.json) {
    json j;
    j["schema_version"] = 1;
    j["nobs"] = table.nobs;
    j["converged"] = fitted.converged;
    j["iterations"] = fitted.iterations;
    j["deviance"] = fitted.deviance();

    json comps = json::array();
    for (const auto& r : table.rows) {
      json c = ed_row_json(r);
      c["variance"] = nullptr;
      if (r.type != 'F')
        for (size_t k = 0; k < model.system.blocks.size(); ++k)
          if (model.system.blocks[k].name == r.name) {
            c["variance"] = fitted.variances[k];
            c["log10_lambda"] = std::log10(fitted.sigma2 / fitted.variances[k]);
          }
      comps.push_back(std::move(c));
    }
    j["components"] = std::move(comps);
    j["residual"] = {{"variance", fitted.sigma2}, {"effective_dim", table.residual_ed}};
    j["totals"] = {{"model_dim", table.total_model},
                   {"nominal_dim", table.total_nominal},
                   {"effective_dim", table.total_effective}};

    if (model.genotype_block >= 0) {
      json h;
      for (auto mode : {HeritabilityMode::Oakey, HeritabilityMode::Cullis}) {
        const auto rep = heritability(model, fitted, mode);
        h[mode == HeritabilityMode::Oakey ? "oakey" : "cullis"] = rep.value;
        h["ed_genetic"] = rep.ed_genetic;
        h["m_g"] = rep.m_g;
        h["zero_eigen_count"] = rep.zero_eigen_count;
      }
      try {
        h["standard"] = heritability(model, fitted, HeritabilityMode::Standard).value;
      } catch (const std::invalid_argument&) {
        h["standard"] = nullptr;  // unbalanced design
      }
      j["heritability"] = std::move(h);
    }

    auto out = open_out(path("summary.json"));
    out << j.dump(2) << "\n";
    written.push_back(path("summary.json"));
  }

  if (flags.svg) {
    std::vector<double> vals(trend.total.data(), trend.total.data() + trend.total.size());
    write_heatmap_svg(path("trend.svg"), vals, grid.observed_cell, grid.n_rows, grid.n_cols,
                      "fitted spatial trend");
    written.push_back(path("trend.svg"));

    std::vector<double> res(static_cast<size_t>(model.layout_rows) * model.layout_cols, 0.0);
    std::vector<bool> mask(res.size(), false);
    for (Eigen::Index i = 0; i < model.n(); ++i) {
      const auto& rec = data.records[model.record_index[i]];
      const size_t cell = static_cast<size_t>(rec.row - model.row_min) * model.layout_cols +
                          (rec.col - model.col_min);
      res[cell] = fitted.solve.residuals[i];
      mask[cell] = true;
    }
    write_heatmap_svg(path("residuals.svg"), res, mask, model.layout_rows, model.layout_cols,
                      "residuals");
    written.push_back(path("residuals.svg"));
  }

  return written;
}

void write_variogram(const std::string& path, const VariogramTable& table) {
  auto out = open_out(path);
  out << "row_displacement,col_displacement,value,pairs\n";
  for (const auto& r : table.rows)
    out << r.row_displacement << "," << r.col_displacement << "," << format_number(r.value) << ","
        << r.pairs << "\n";
}

std::vector<std::string> write_simulation_report(const std::string& dir,
                                                 const SimulationReport& report) {
  std::filesystem::create_directories(dir);
  const auto csv_path = (std::filesystem::path(dir) / "simulation.csv").string();
  const auto json_path = (std::filesystem::path(dir) / "simulation.json").string();

  {
    auto out = open_out(csv_path);
    out << "variant,runs_used,convergence_rate,mean_log10_rmse,sd_log10_rmse,"
           "bias_sigma2_g,sd_sigma2_g,bias_sigma2,sd_sigma2,mean_ed_s,sd_ed_s\n";
    for (const auto& v : report.variants)
      out << v.variant << "," << v.runs_used << "," << format_number(v.convergence_rate) << ","
          << format_number(v.mean_log10_rmse) << "," << format_number(v.sd_log10_rmse) << ","
          << format_number(v.bias_sigma2_g) << "," << format_number(v.sd_sigma2_g) << ","
          << format_number(v.bias_sigma2) << "," << format_number(v.sd_sigma2) << ","
          << format_number(v.mean_ed_s) << "," << format_number(v.sd_ed_s) << "\n";
  }

  const auto& c = report.config;
  json j;
  j["schema_version"] = 1;
  j["config"] = {{"rows", c.rows},           {"cols", c.cols},
                 {"n_genotypes", c.n_genotypes}, {"replicates", c.replicates},
                 {"block_size", c.block_size},   {"sigma2_g", c.sigma2_g},
                 {"sigma2_s", c.sigma2_s},       {"sigma2", c.sigma2},
                 {"rho_r", c.rho_r},             {"rho_c", c.rho_c},
                 {"n_runs", c.n_runs},           {"seed", c.seed}};
  j["variants"] = json::array();
  for (const auto& v : report.variants)
    j["variants"].push_back({{"variant", v.variant},
                             {"runs_used", v.runs_used},
                             {"convergence_rate", v.convergence_rate},
                             {"mean_log10_rmse", v.mean_log10_rmse},
                             {"sd_log10_rmse", v.sd_log10_rmse},
                             {"bias_sigma2_g", v.bias_sigma2_g},
                             {"sd_sigma2_g", v.sd_sigma2_g},
                             {"bias_sigma2", v.bias_sigma2},
                             {"sd_sigma2", v.sd_sigma2},
                             {"mean_ed_s", v.mean_ed_s},
                             {"sd_ed_s", v.sd_ed_s}});
  auto out = open_out(json_path);
  out << j.dump(2) << "\n";

  return {csv_path, json_path};
}

void write_heatmap_svg(const std::string& path, const std::vector<double>& values,
                       const std::vector<bool>& mask, int n_rows, int n_cols,
                       const std::string& title) {
  if (values.size() != static_cast<size_t>(n_rows) * n_cols || mask.size() != values.size())
    throw std::invalid_argument("write_heatmap_svg: size mismatch");

  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (size_t i = 0; i < values.size(); ++i)
    if (mask[i]) {
      lo = any ? std::min(lo, values[i]) : values[i];
      hi = any ? std::max(hi, values[i]) : values[i];
      any = true;
    }
  const double amax = std::max(std::abs(lo), std::abs(hi));

  const int cell = 20, margin = 30, footer = 40;
  const int width = 2 * margin + n_cols * cell;
  const int height = margin + footer + n_rows * cell;

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<text x=\"" << margin << "\" y=\"" << margin - 10 << "\" font-size=\"14\">" << title
      << "</text>\n";
  for (int i = 0; i < n_rows; ++i)
    for (int j = 0; j < n_cols; ++j) {
      const size_t idx = static_cast<size_t>(i) * n_cols + j;
      const std::string fill = mask[idx] ? ramp_color(values[idx], amax) : "#bbbbbb";
      out << "<rect x=\"" << margin + j * cell << "\" y=\"" << margin + i * cell << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
    }
  out << "<text x=\"" << margin << "\" y=\"" << margin + n_rows * cell + 20
      << "\" font-size=\"12\">min=" << format_number(lo) << " max=" << format_number(hi)
      << "</text>\n";
  out << "</svg>\n";
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec;
  spec.genotype_random = genotype_as_random;
  spec.check_genotypes = check_genotypes;
  spec.fixed_covariates = covariates;
  spec.fixed_factors = fixed;
  spec.random_factors = random_factors;
  spec.spatial.nseg_u = nseg_row;
  spec.spatial.nseg_v = nseg_col;
  spec.spatial.degree = degree;
  spec.spatial.nest_div_u = nest_div_row;
  spec.spatial.nest_div_v = nest_div_col;
  return spec;
}

TableOptions RunConfig::table_options() const {
  TableOptions opts;
  opts.missing_token = missing_token;
  if (!delimiter.empty()) {
    if (delimiter == "\\t" || delimiter == "tab")
      opts.delimiter = '\t';
    else if (delimiter.size() == 1)
      opts.delimiter = delimiter[0];
    else
      throw std::invalid_argument("delimiter must be a single character or 'tab'");
  }
  return opts;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }

  RunConfig c;
  c.input = j.value("input", c.input);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.roles.response = j.value("response", c.roles.response);
  c.roles.genotype = j.value("genotype", c.roles.genotype);
  c.roles.row = j.value("row", c.roles.row);
  c.roles.col = j.value("col", c.roles.col);
  c.missing_token = j.value("missing_token", c.missing_token);
  c.delimiter = j.value("delimiter", c.delimiter);
  c.genotype_as_random = j.value("genotype_as_random", c.genotype_as_random);
  c.check_genotypes = j.value("checks", c.check_genotypes);
  c.fixed = j.value("fixed", c.fixed);
  c.covariates = j.value("covariates", c.covariates);
  c.random_factors = j.value("random", c.random_factors);
  c.nseg_row = j.value("nseg_row", c.nseg_row);
  c.nseg_col = j.value("nseg_col", c.nseg_col);
  c.degree = j.value("degree", c.degree);
  c.nest_div_row = j.value("nest_div_row", c.nest_div_row);
  c.nest_div_col = j.value("nest_div_col", c.nest_div_col);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.max_iter = j.value("max_iter", c.max_iter);
  c.monitoring = j.value("monitoring", c.monitoring);
  c.resolution_rows = j.value("resolution_rows", c.resolution_rows);
  c.resolution_cols = j.value("resolution_cols", c.resolution_cols);
  c.emit.tables = j.value("emit_tables", c.emit.tables);
  c.emit.json = j.value("emit_json", c.emit.json);
  c.emit.svg = j.value("emit_svg", c.emit.svg);
  c.threads = j.value("threads", c.threads);
  return c;
}

}  // namespace spats
