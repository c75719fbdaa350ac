#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "spats/io.hpp"

using namespace spats;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("spats_io_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrialData small_trial(int rows, int cols) {
  TrialData d;
  for (int r = 1; r <= rows; ++r)
    for (int c = 1; c <= cols; ++c) {
      TrialRecord rec;
      rec.row = r;
      rec.col = c;
      rec.genotype = "G" + std::to_string((r * cols + c) % 7);
      rec.response = 3.0 + 0.25 * r - 0.125 * c + 0.01 * r * c;
      if (r == 2 && c == 3) rec.missing = true;
      rec.factors["rep"] = c <= cols / 2 ? "R1" : "R2";
      rec.covariates["stand"] = 12.0 + 0.5 * r;
      d.records.push_back(rec);
    }
  d.update_extents();
  return d;
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("numbers round-trip through the shortest decimal form") {
  for (double x : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-12, 6.02214076e23}) {
    CHECK(std::stod(format_number(x)) == x);
  }
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(-3.0) == "-3");
}

TEST_CASE("trial tables survive a write/read cycle") {
  TempDir tmp;
  auto data = small_trial(5, 8);
  write_trial(tmp.file("trial.csv"), data);
  auto back = read_trial(tmp.file("trial.csv"));

  REQUIRE(back.records.size() == data.records.size());
  for (size_t i = 0; i < data.records.size(); ++i) {
    const auto& a = data.records[i];
    const auto& b = back.records[i];
    CHECK(a.row == b.row);
    CHECK(a.col == b.col);
    CHECK(a.genotype == b.genotype);
    CHECK(a.missing == b.missing);
    if (!a.missing) CHECK(a.response == b.response);
    CHECK(b.factors.at("rep") == a.factors.at("rep"));
    CHECK(b.covariates.at("stand") == a.covariates.at("stand"));
  }
  CHECK(back.n_rows() == 5);
  CHECK(back.n_cols() == 8);
}

TEST_CASE("delimiters are auto-detected") {
  TempDir tmp;
  write_text(tmp.file("semi.csv"),
             "response;genotype;row;col\n1.5;A;1;1\n2.5;B;1;2\n0.5;A;2;1\n3.5;B;2;2\n");
  auto semi = read_trial(tmp.file("semi.csv"));
  REQUIRE(semi.records.size() == 4);
  CHECK(semi.records[1].response == 2.5);

  write_text(tmp.file("tabs.csv"),
             "response\tgenotype\trow\tcol\n1\tA\t1\t1\n2\tB\t1\t2\n3\tA\t2\t1\n4\tB\t2\t2\n");
  auto tabs = read_trial(tmp.file("tabs.csv"));
  REQUIRE(tabs.records.size() == 4);
  CHECK(tabs.records[3].genotype == "B");

  // Explicit delimiter wins over detection.
  TableOptions opt;
  opt.delimiter = ';';
  CHECK_THROWS(read_trial(tmp.file("tabs.csv"), {}, opt));
}

TEST_CASE("missing tokens and custom roles") {
  TempDir tmp;
  write_text(tmp.file("t.csv"),
             "yield,line,r,c\n1.25,A,1,1\n.,B,1,2\n2,A,2,1\n4,B,2,2\n");
  ColumnRoles roles{"yield", "line", "r", "c"};
  TableOptions opt;
  opt.missing_token = ".";
  auto d = read_trial(tmp.file("t.csv"), roles, opt);
  REQUIRE(d.records.size() == 4);
  CHECK(d.records[1].missing);
  CHECK_FALSE(d.records[0].missing);
  CHECK(d.records[0].response == 1.25);

  // Empty fields always count as missing.
  write_text(tmp.file("e.csv"), "response,genotype,row,col\n,A,1,1\n2,B,1,2\n1,A,2,1\n3,B,2,2\n");
  auto e = read_trial(tmp.file("e.csv"));
  CHECK(e.records[0].missing);
}

TEST_CASE("parse errors carry the file position") {
  TempDir tmp;

  write_text(tmp.file("bad_count.csv"), "response,genotype,row,col\n1,A,1\n");
  CHECK_THROWS_WITH_AS(read_trial(tmp.file("bad_count.csv")), doctest::Contains(":2:"),
                       std::runtime_error);

  write_text(tmp.file("bad_num.csv"), "response,genotype,row,col\n1,A,1,1\nx?,B,one,2\n");
  CHECK_THROWS_WITH_AS(read_trial(tmp.file("bad_num.csv")), doctest::Contains(":3:"),
                       std::runtime_error);

  write_text(tmp.file("no_col.csv"), "response,genotype,row\n1,A,1\n");
  CHECK_THROWS_WITH_AS(read_trial(tmp.file("no_col.csv")), doctest::Contains("col"),
                       std::runtime_error);

  write_text(tmp.file("dup.csv"), "response,genotype,row,col\n1,A,1,1\n2,B,1,1\n");
  CHECK_THROWS_AS(read_trial(tmp.file("dup.csv")), std::runtime_error);

  CHECK_THROWS_AS(read_trial(tmp.file("absent.csv")), std::runtime_error);
}

TEST_CASE("fit outputs are written as advertised") {
  TempDir tmp;
  auto data = small_trial(6, 9);
  ModelSpec spec;
  spec.genotype_random = true;
  auto model = build_system(data, spec);
  auto fitted = fit(model.system);
  REQUIRE(fitted.converged);
  auto grid = prediction_grid(data, model, model.layout_rows, model.layout_cols);
  auto trend = decompose_surface(model, fitted, grid.u_scaled, grid.v_scaled);

  OutputFlags flags;
  flags.svg = true;
  auto paths = write_outputs(tmp.file("out"), data, model, fitted, grid, trend, flags);
  for (const auto& p : paths) CHECK(fs::exists(p));
  for (const char* name : {"ed_table.csv", "variances.csv", "blups.csv", "fitted.csv",
                           "trend_grid.csv", "summary.json", "trend.svg", "residuals.svg"}) {
    CHECK(fs::exists(fs::path(tmp.file("out")) / name));
  }

  // The grid table round-trips the trend exactly.
  std::ifstream grid_file(tmp.file("out") + "/trend_grid.csv");
  std::string header;
  std::getline(grid_file, header);
  CHECK(header == "row,col,observed,trend");
  std::string line;
  Eigen::Index idx = 0;
  while (std::getline(grid_file, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1);
    REQUIRE(c3 != std::string::npos);
    CHECK(std::stod(line.substr(0, c1)) == grid.row_coord[idx]);
    CHECK(std::stod(line.substr(c1 + 1, c2 - c1 - 1)) == grid.col_coord[idx]);
    CHECK(std::stod(line.substr(c3 + 1)) == trend.total[idx]);
    ++idx;
  }
  CHECK(idx == grid.row_coord.size());

  // summary.json carries the headline quantities.
  const std::string json = read_text(tmp.file("out") + "/summary.json");
  for (const char* key : {"\"schema_version\"", "\"components\"", "\"residual\"",
                          "\"heritability\"", "\"nobs\"", "\"gen\""}) {
    CHECK(json.find(key) != std::string::npos);
  }

  // One rect per grid cell in the trend heatmap.
  const std::string svg = read_text(tmp.file("out") + "/trend.svg");
  size_t rects = 0;
  for (size_t pos = 0; (pos = svg.find("<rect", pos)) != std::string::npos; ++pos) ++rects;
  CHECK(rects >= static_cast<size_t>(grid.n_rows * grid.n_cols));
}

TEST_CASE("variogram and simulation tables") {
  TempDir tmp;
  VariogramTable t;
  t.rows.push_back({0, 0, 0.0, 10});
  t.rows.push_back({1, -2, 0.75, 4});
  write_variogram(tmp.file("vg.csv"), t);
  const std::string text = read_text(tmp.file("vg.csv"));
  CHECK(text.find("row_displacement") != std::string::npos);
  CHECK(text.find("1,-2,0.75,4") != std::string::npos);

  SimulationReport rep;
  rep.config.n_runs = 2;
  VariantSummary s;
  s.variant = "spats";
  s.runs_used = 2;
  s.convergence_rate = 1.0;
  s.mean_log10_rmse = -0.25;
  rep.variants.push_back(s);
  auto paths = write_simulation_report(tmp.file("sim"), rep);
  REQUIRE(paths.size() == 2);
  for (const auto& p : paths) CHECK(fs::exists(p));
  CHECK(read_text(paths[0]).find("spats") != std::string::npos);
}

TEST_CASE("run configurations load and map onto the model spec") {
  TempDir tmp;
  write_text(tmp.file("run.json"), R"({
    "input": "trial.csv",
    "output_dir": "out",
    "response": "yield",
    "genotype": "line",
    "row": "r",
    "col": "c",
    "missing_token": "*",
    "genotype_as_random": true,
    "checks": ["CHK1"],
    "fixed": ["rep"],
    "covariates": ["stand"],
    "random": ["block"],
    "nseg_row": 12,
    "nseg_col": 24,
    "nest_div_col": 2,
    "tolerance": 1e-8,
    "max_iter": 77,
    "resolution_rows": 30,
    "emit_svg": true,
    "threads": 2
  })");
  auto cfg = load_config(tmp.file("run.json"));
  CHECK(cfg.input == "trial.csv");
  CHECK(cfg.roles.response == "yield");
  CHECK(cfg.roles.col == "c");
  CHECK(cfg.missing_token == "*");
  CHECK(cfg.tolerance == 1e-8);
  CHECK(cfg.max_iter == 77);
  CHECK(cfg.resolution_rows == 30);
  CHECK(cfg.emit.svg);
  CHECK(cfg.threads == 2);

  auto spec = cfg.model_spec();
  CHECK(spec.genotype_random);
  CHECK(spec.check_genotypes == std::vector<std::string>{"CHK1"});
  CHECK(spec.fixed_factors == std::vector<std::string>{"rep"});
  CHECK(spec.fixed_covariates == std::vector<std::string>{"stand"});
  CHECK(spec.random_factors == std::vector<std::string>{"block"});
  CHECK(spec.spatial.nseg_u == 12);
  CHECK(spec.spatial.nseg_v == 24);
  CHECK(spec.spatial.nest_div_v == 2);

  write_text(tmp.file("broken.json"), "{ not json");
  CHECK_THROWS(load_config(tmp.file("broken.json")));
}

TEST_SUITE_END();
