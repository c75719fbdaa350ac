// Acceptance gate: one line per criterion, nonzero exit if any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "spats/diagnostics.hpp"
#include "spats/genetics.hpp"
#include "spats/io.hpp"
#include "spats/reml.hpp"
#include "spats/simulation.hpp"
#include "spats/splines.hpp"
#include "spats/trial.hpp"

using namespace spats;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Pass;
  std::string detail;
};

Outcome pass(std::string detail = "") { return {Outcome::Pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Outcome::Skip, std::move(detail)}; }

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

int matrix_rank(const Eigen::MatrixXd& m) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-8);
  return static_cast<int>(qr.rank());
}

// ---- shared fixtures -------------------------------------------------------

// Spatially simulated replicated trial fitted end to end.
struct TrialFixture {
  TrialData data;
  TrialModel model;
  FittedModel fitted;
};

TrialFixture simulated_trial(int rows, int cols, int m_g, int reps, std::uint64_t seed) {
  std::mt19937_64 rng(substream_seed(seed, 0));
  std::normal_distribution<double> norm;

  std::vector<double> effects(m_g);
  for (auto& e : effects) e = norm(rng);
  auto design = gen_design(m_g, reps, rows, rows, cols, rng);
  auto field = gen_ar_field(rows, cols, 1.0, 0.5, 0.5, rng);

  TrialFixture f;
  const int width = static_cast<int>(std::to_string(m_g - 1).size());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const int g = design[i * cols + j];
      TrialRecord rec;
      rec.row = i + 1;
      rec.col = j + 1;
      std::string digits = std::to_string(g);
      rec.genotype = "G" + std::string(width - digits.size(), '0') + digits;
      rec.response = 7.0 + effects[g] + field[i * cols + j] + norm(rng);
      f.data.records.push_back(std::move(rec));
    }
  f.data.update_extents();

  ModelSpec spec;
  spec.genotype_random = true;
  f.model = build_system(f.data, spec);
  f.fitted = fit(f.model.system);
  return f;
}

// Intercept plus one random grouping factor.
MixedModelSystem one_way(int groups, int per_group, double var_g, double var_e,
                         unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> norm;
  const int n = groups * per_group;

  MixedModelSystem sys;
  sys.x = Eigen::MatrixXd::Ones(n, 1);
  sys.x_names = {"Intercept"};
  RandomBlock blk;
  blk.name = "group";
  blk.z = Eigen::MatrixXd::Zero(n, groups);
  blk.precision = Eigen::VectorXd::Ones(groups);
  blk.nominal_dim = groups;
  sys.blocks.push_back(blk);

  Eigen::VectorXd effects(groups);
  for (int g = 0; g < groups; ++g) effects[g] = std::sqrt(var_g) * norm(rng);
  sys.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const int g = i / per_group;
    sys.blocks[0].z(i, g) = 1.0;
    sys.y[i] = 3.0 + effects[g] + std::sqrt(var_e) * norm(rng);
  }
  return sys;
}

// Dense multi-block fixture for the trace oracles.
MixedModelSystem dense_fixture(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif(0.3, 2.5);

  MixedModelSystem sys;
  sys.x.resize(n, 2);
  sys.x_names = {"Intercept", "slope"};
  for (int i = 0; i < n; ++i) {
    sys.x(i, 0) = 1.0;
    sys.x(i, 1) = i / double(n);
  }
  RandomBlock a;
  a.name = "factor";
  a.z = Eigen::MatrixXd::Zero(n, 5);
  for (int i = 0; i < n; ++i) a.z(i, i % 5) = 1.0;
  a.precision = Eigen::VectorXd::Ones(5);
  a.nominal_dim = 5;
  sys.blocks.push_back(a);
  RandomBlock b;
  b.name = "penalized";
  b.z.resize(n, 6);
  b.precision.resize(6);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 6; ++j) b.z(i, j) = norm(rng);
  for (int j = 0; j < 6; ++j) b.precision[j] = unif(rng);
  b.nominal_dim = 6;
  b.type = BlockType::Smooth;
  sys.blocks.push_back(b);

  sys.y.resize(n);
  for (int i = 0; i < n; ++i) sys.y[i] = norm(rng);
  return sys;
}

// ---- criteria --------------------------------------------------------------

Outcome criterion_bsplines() {
  const auto t0 = Clock::now();
  std::mt19937 rng(314);
  double worst_sum = 0.0;
  for (int degree = 0; degree <= 3; ++degree) {
    auto kv = make_knots(-3.0, 5.0, 11, degree);
    std::uniform_real_distribution<double> unif(-3.0, 5.0);
    Eigen::VectorXd pts(10000);
    for (int i = 0; i < pts.size(); ++i) pts[i] = unif(rng);
    auto basis = eval_basis(kv, pts);
    for (int i = 0; i < pts.size(); ++i) {
      worst_sum = std::max(worst_sum, std::abs(basis.values.row(i).sum() - 1.0));
      int nonzero = 0;
      for (int j = 0; j < basis.cols(); ++j) nonzero += basis.values(i, j) != 0.0;
      if (nonzero > degree + 1)
        return fail("support width " + std::to_string(nonzero) + " at degree " +
                    std::to_string(degree));
    }
  }
  const double dt = seconds_since(t0);
  if (worst_sum >= 1e-12) return fail("partition-of-unity error " + fmt(worst_sum));
  if (dt >= 5.0) return fail("runtime " + fmt(dt) + " s");
  return pass("max |row-sum - 1| = " + fmt(worst_sum) + ", " + fmt(dt) + " s");
}

Outcome criterion_reparameterization() {
  const auto t0 = Clock::now();
  std::mt19937 rng(2718);
  std::normal_distribution<double> norm;
  std::uniform_int_distribution<int> rows_d(6, 12), cols_d(8, 15);
  std::uniform_real_distribution<double> loglam(-2.0, 2.0);

  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int rows = rows_d(rng), cols = cols_d(rng);
    const int n = rows * cols;
    // centered coordinates so the linear-by-smooth blocks decouple exactly
    Eigen::VectorXd u(n), v(n), y(n);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        u[i * cols + j] = i - 0.5 * (rows - 1);
        v[i * cols + j] = j - 0.5 * (cols - 1);
      }
    for (int i = 0; i < n; ++i) y[i] = norm(rng);
    const double lambda_u = std::pow(10.0, loglam(rng));
    const double lambda_v = std::pow(10.0, loglam(rng));

    SpatialConfig cfg;
    cfg.nseg_u = 4 + rep % 3;
    cfg.nseg_v = 5 + rep % 4;
    cfg.nest_div_u = 1;
    cfg.nest_div_v = 1;
    auto d = build_psanova(u, v, cfg);

    const Eigen::MatrixXd bu = eval_basis(d.knots_u, u).values;
    const Eigen::MatrixXd bv = eval_basis(d.knots_v, v).values;
    const Eigen::MatrixXd b = row_kron(bv, bu);
    const Eigen::VectorXd alpha =
        penalized_ls_fit(b, y, lambda_u, lambda_v, difference_matrix(d.L, 2),
                         difference_matrix(d.P, 2));
    const Eigen::VectorXd yhat_raw = b * alpha;

    MixedModelSystem sys;
    sys.y = y;
    sys.x = d.x_fixed;
    sys.x_names = {"1", "u", "v", "uv"};
    // transforming the tensor penalty leaves margin-dependent scalars on the
    // first four blocks: basis dimension on the pure smooths, squared Greville
    // norm on the linear-by-smooth terms
    auto greville_sq = [](const KnotVector& kv) {
      double s = 0.0;
      for (int j = 0; j < kv.basis_dim(); ++j) {
        double g = 0.0;
        for (int t = 1; t <= kv.degree; ++t) g += kv.knots[j + t];
        g /= kv.degree;
        s += g * g;
      }
      return s;
    };
    Eigen::VectorXd variances(5);
    variances[0] = 1.0 / (lambda_v * d.L);
    variances[1] = 1.0 / (lambda_u * d.P);
    variances[2] = 1.0 / (lambda_v * greville_sq(d.knots_u));
    variances[3] = 1.0 / (lambda_u * greville_sq(d.knots_v));
    variances[4] = 1.0;
    for (int k = 0; k < 5; ++k) {
      RandomBlock blk;
      blk.name = "s" + std::to_string(k);
      blk.z = d.z_blocks[k];
      blk.precision = d.precision[k];
      blk.nominal_dim = blk.size();
      blk.type = BlockType::Smooth;
      sys.blocks.push_back(std::move(blk));
    }
    sys.blocks[4].precision = lambda_v * d.block5_ev_v + lambda_u * d.block5_ev_u;

    auto res = HendersonSolver(sys).solve(variances, 1.0);
    worst = std::max(worst, (res.fitted - yhat_raw).cwiseAbs().maxCoeff());
  }
  const double dt = seconds_since(t0);
  if (worst >= 1e-8) return fail("max fitted-value gap " + fmt(worst));
  if (dt >= 30.0) return fail("runtime " + fmt(dt) + " s");
  return pass("max fitted-value gap " + fmt(worst) + ", " + fmt(dt) + " s");
}

Outcome criterion_ed_accounting() {
  std::vector<std::pair<MixedModelSystem, FittedModel>> fixtures;
  {
    auto f = simulated_trial(8, 12, 48, 2, 60);
    if (!f.fitted.converged) return fail("spatial fixture did not converge");
    fixtures.emplace_back(f.model.system, f.fitted);
  }
  for (unsigned seed : {1u, 2u}) {
    auto sys = one_way(10, 4, 2.0, 1.0, seed);
    auto fitted = fit(sys);
    if (!fitted.converged) return fail("one-way fixture did not converge");
    fixtures.emplace_back(std::move(sys), std::move(fitted));
  }

  double worst_gap = 0.0;
  for (const auto& [sys, fitted] : fixtures) {
    const double gap = std::abs(double(sys.n()) - sys.p() - fitted.effective_dims.sum() -
                                fitted.ed_residual);
    worst_gap = std::max(worst_gap, gap);
    const int rank_x = matrix_rank(sys.x);
    for (size_t k = 0; k < sys.blocks.size(); ++k) {
      const auto& b = sys.blocks[k];
      Eigen::MatrixXd xz(sys.n(), sys.p() + b.size());
      xz << sys.x, b.z;
      const int zeta = b.size() - (matrix_rank(xz) - rank_x);
      const double ed = fitted.effective_dims[k];
      if (ed < -1e-8 || ed > b.size() - zeta + 1e-8)
        return fail("ED for '" + b.name + "' = " + fmt(ed) + " outside [0, " +
                    std::to_string(b.size() - zeta) + "]");
    }
  }
  if (worst_gap >= 1e-6) return fail("dimension accounting gap " + fmt(worst_gap));
  return pass("max accounting gap " + fmt(worst_gap));
}

Outcome criterion_trace_oracles() {
  double worst = 0.0;
  for (unsigned seed : {101u, 102u, 103u}) {
    auto sys = dense_fixture(48, seed);
    Eigen::VectorXd variances(2);
    variances << 0.8, 1.6;
    const double sigma2 = 1.2;
    auto res = HendersonSolver(sys).solve(variances, sigma2);
    auto ed = component_traces(sys, res, variances, sigma2);
    oracle::Dense dense(sys, variances, sigma2);
    for (size_t k = 0; k < sys.blocks.size(); ++k) {
      worst = std::max(worst, std::abs(ed[k] - dense.ed_brute(k, sigma2)));
      worst = std::max(worst, std::abs(ed[k] - dense.ed_pinv(k, sigma2)));
    }
  }
  if (worst >= 1e-8) return fail("max trace gap " + fmt(worst));
  return pass("max trace gap " + fmt(worst));
}

Outcome criterion_reml_oracle() {
  const auto t0 = Clock::now();
  double worst_rel = 0.0;
  for (unsigned seed = 1; seed <= 10; ++seed) {
    auto sys = one_way(8 + seed % 4, 4 + seed % 3, 1.0 + 0.2 * seed, 1.0, seed);
    HendersonSolver solver(sys);
    auto model = fit(solver, {.tolerance = 1e-10});
    if (!model.converged) return fail("fixture " + std::to_string(seed) + " did not converge");

    auto dev_at = [&](double log_ratio) {
      const double ratio = std::exp(log_ratio);
      auto inner = [&](double log_s2) {
        const double s2 = std::exp(log_s2);
        Eigen::VectorXd v(1);
        v << ratio * s2;
        oracle::Dense dense(sys, v, s2);
        return dense.reml(s2);
      };
      return inner(oracle::golden_section(inner, -8.0, 8.0, 1e-10));
    };
    const double best_log_ratio = oracle::golden_section(dev_at, -8.0, 8.0, 1e-8);
    // Recover sigma2 at the oracle ratio, then the variance itself.
    const double ratio = std::exp(best_log_ratio);
    auto inner = [&](double log_s2) {
      const double s2 = std::exp(log_s2);
      Eigen::VectorXd v(1);
      v << ratio * s2;
      oracle::Dense dense(sys, v, s2);
      return dense.reml(s2);
    };
    const double oracle_var = ratio * std::exp(oracle::golden_section(inner, -8.0, 8.0, 1e-10));

    const double rel = std::abs(model.variances[0] - oracle_var) / oracle_var;
    worst_rel = std::max(worst_rel, rel);
  }
  const double dt = seconds_since(t0);
  if (worst_rel >= 1e-3) return fail("max relative variance gap " + fmt(worst_rel));
  if (dt >= 60.0) return fail("runtime " + fmt(dt) + " s");
  return pass("max relative variance gap " + fmt(worst_rel) + ", " + fmt(dt) + " s");
}

Outcome criterion_heritability() {
  double worst = 0.0;
  for (int m_g : {5, 20}) {
    for (int r : {2, 4}) {
      auto sys = one_way(m_g, r, 2.0, 1.0, 500 + m_g + r);
      auto fitted = fit(sys, {.tolerance = 1e-12});
      if (!fitted.converged) return fail("balanced fixture did not converge");
      const double ed_g = fitted.effective_dims[0];
      const double sg2 = fitted.variances[0];
      const double lhs = ed_g / (m_g - 1);
      const double rhs = sg2 / (sg2 + fitted.sigma2 / r);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  if (worst >= 1e-6) return fail("identity gap " + fmt(worst));

  // Oakey >= Cullis on spatial fixtures with the full genetics path.
  for (std::uint64_t seed : {61ull, 62ull}) {
    auto f = simulated_trial(8, 12, 48, 2, seed);
    if (!f.fitted.converged) return fail("spatial fixture did not converge");
    const auto oakey = heritability(f.model, f.fitted, HeritabilityMode::Oakey);
    const auto cullis = heritability(f.model, f.fitted, HeritabilityMode::Cullis);
    if (oakey.value < cullis.value - 1e-12)
      return fail("Oakey " + fmt(oakey.value) + " < Cullis " + fmt(cullis.value));
  }
  return pass("identity gap " + fmt(worst) + ", Oakey >= Cullis");
}

Outcome criterion_simulation() {
  const auto t0 = Clock::now();
  SimulationConfig cfg;  // defaults are exactly the target scenario
  cfg.seed = 1;
  auto report = run_study(cfg);
  const auto& s = report.variants.at(0);
  const double dt = seconds_since(t0);

  std::string detail = "mean log10 RMSE " + fmt(s.mean_log10_rmse) + " (target -0.18+-0.03), " +
                       "sigma2 bias " + fmt(s.bias_sigma2) + " (target 0.327+-0.10), " +
                       fmt(dt) + " s, " + std::to_string(s.runs_used) + "/50 converged";
  if (dt >= 300.0) return fail("runtime " + fmt(dt) + " s; " + detail);
  const bool rmse_ok = std::abs(s.mean_log10_rmse - (-0.180)) < 0.03;
  const bool bias_ok = std::abs(s.bias_sigma2 - 0.327) < 0.10;
  if (!rmse_ok || !bias_ok)
    return fail(detail +
                (bias_ok ? "" : "; exact-REML noise recovery sits above the published bias "
                                "for fields drawn from the stated covariance"));
  return pass(detail);
}

Outcome criterion_paper_fixtures() {
  const std::filesystem::path dir = SPATS_DATA_DIR;
  const auto wheat = dir / "wheat.csv";
  const auto barley = dir / "barley_uniformity.csv";
  if (!std::filesystem::exists(wheat) && !std::filesystem::exists(barley))
    return skip("public datasets not vendored (expected " + wheat.string() + ", " +
                barley.string() + ")");

  std::string detail;
  if (std::filesystem::exists(wheat)) {
    auto data = read_trial(wheat.string(), {"yield", "gen", "row", "col"});
    ModelSpec spec;
    spec.genotype_random = true;
    spec.spatial.nseg_u = 20;
    spec.spatial.nseg_v = 16;
    spec.spatial.nest_div_u = 2;
    spec.spatial.nest_div_v = 2;
    auto model = build_system(data, spec);
    auto fitted = fit(model.system, {.tolerance = 1e-8});
    if (!fitted.converged) return fail("wheat fit did not converge");
    const auto table = ed_table(model, fitted);
    if (table.nobs != 330) return fail("wheat nobs " + std::to_string(table.nobs));
    if (std::abs(table.total_effective - 146.3) > 0.3)
      return fail("wheat total ED " + fmt(table.total_effective) + " vs 146.3");
    detail += "wheat total ED " + fmt(table.total_effective);
  }
  if (std::filesystem::exists(barley)) {
    auto data = read_trial(barley.string(), {"yield", "gen", "row", "col"});
    ModelSpec spec;  // single-variety uniformity trial: genotype fixed, one level
    spec.spatial.nseg_u = 15;
    spec.spatial.nseg_v = 48;
    spec.spatial.nest_div_u = 1;
    spec.spatial.nest_div_v = 2;
    auto model = build_system(data, spec);
    auto fitted = fit(model.system, {.tolerance = 1e-8});
    if (!fitted.converged) return fail("barley fit did not converge");
    if (std::abs(fitted.sigma2 - 238.94) / 238.94 > 0.02)
      return fail("barley sigma2 " + fmt(fitted.sigma2) + " vs 238.94");
    if (!detail.empty()) detail += ", ";
    detail += "barley sigma2 " + fmt(fitted.sigma2);
  }
  return pass(detail);
}

Outcome criterion_performance() {
  // Sugar-beet-shaped synthetic trial: 2,411 plots, ~1,789 coefficients.
  const int rows = 52, cols = 47, m_g = 287;
  std::mt19937_64 rng(substream_seed(90, 0));
  std::normal_distribution<double> norm;
  std::vector<double> effects(m_g);
  for (auto& e : effects) e = norm(rng);
  auto field = gen_ar_field(rows, cols, 1.0, 0.6, 0.6, rng);

  TrialData data;
  int dropped = 0;
  const int target = rows * cols - 2411;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      if (dropped < target && (i * cols + j) % 73 == 5) {
        ++dropped;  // thin the grid down to the target observation count
        continue;
      }
      const int g = (i * cols + j) % m_g;
      TrialRecord rec;
      rec.row = i + 1;
      rec.col = j + 1;
      std::string digits = std::to_string(g);
      rec.genotype = "G" + std::string(3 - digits.size(), '0') + digits;
      rec.response = 50.0 + effects[g] + field[i * cols + j] + norm(rng);
      data.records.push_back(std::move(rec));
    }
  data.update_extents();
  if (static_cast<int>(data.records.size()) != 2411)
    return fail("fixture has " + std::to_string(data.records.size()) + " plots");

  ModelSpec spec;
  spec.genotype_random = true;
  const auto t0 = Clock::now();
  auto model = build_system(data, spec);
  int coeffs = model.system.p();
  for (const auto& b : model.system.blocks) coeffs += b.size();
  auto fitted = fit(model.system);
  const double dt = seconds_since(t0);
  if (!fitted.converged) return fail("fit did not converge");
  if (coeffs < 1600 || coeffs > 2000)
    return fail("coefficient count " + std::to_string(coeffs) + " off the ~1789 target");
  if (dt >= 60.0) return fail("fit took " + fmt(dt) + " s");
  return pass(std::to_string(coeffs) + " coefficients, 2411 observations, " + fmt(dt) + " s");
}

Outcome criterion_robustness() {
  std::mt19937 rng(777);
  std::uniform_real_distribution<double> loginit(-2.0, 2.0);

  auto spread_over_inits = [&](const MixedModelSystem& sys) -> double {
    HendersonSolver solver(sys);
    double lo = 0.0, hi = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      FitOptions opt;
      opt.tolerance = 1e-9;
      opt.init_variances = Eigen::VectorXd::Constant(
          static_cast<Eigen::Index>(sys.blocks.size()), std::pow(10.0, loginit(rng)));
      opt.init_sigma2 = std::pow(10.0, loginit(rng));
      auto model = fit(solver, opt);
      if (!model.converged) return std::numeric_limits<double>::infinity();
      const double dev = model.deviance();
      lo = trial ? std::min(lo, dev) : dev;
      hi = trial ? std::max(hi, dev) : dev;
    }
    return hi - lo;
  };

  double worst = 0.0;
  worst = std::max(worst, spread_over_inits(one_way(12, 5, 2.0, 1.0, 42)));
  worst = std::max(worst, spread_over_inits(dense_fixture(50, 43)));
  {
    auto f = simulated_trial(8, 12, 48, 2, 44);
    worst = std::max(worst, spread_over_inits(f.model.system));
  }
  if (!(worst < 1e-6)) return fail("deviance spread over inits " + fmt(worst));
  return pass("max deviance spread " + fmt(worst));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"B-spline partition of unity and local support", criterion_bsplines},
      {"reparameterization matches the penalized-LS oracle", criterion_reparameterization},
      {"effective-dimension accounting closes", criterion_ed_accounting},
      {"component traces match dense oracles", criterion_trace_oracles},
      {"variance fixed point matches the numeric REML oracle", criterion_reml_oracle},
      {"heritability identities on balanced designs", criterion_heritability},
      {"simulation study reproduces the published scenario", criterion_simulation},
      {"published data fixtures", criterion_paper_fixtures},
      {"large-trial fit under the time budget", criterion_performance},
      {"convergence is insensitive to starting values", criterion_robustness},
  };

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = fail(std::string("exception: ") + e.what());
    }
    const char* tag = out.kind == Outcome::Pass ? "PASS"
                      : out.kind == Outcome::Fail ? "FAIL"
                                                  : "SKIP";
    std::printf("[%s] criterion %zu: %s%s%s\n", tag, i + 1, criteria[i].first.c_str(),
                out.detail.empty() ? "" : " -- ", out.detail.c_str());
    std::fflush(stdout);
    failures += out.kind == Outcome::Fail;
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
