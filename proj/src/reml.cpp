#include "spats/reml.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace spats {

namespace {

double sample_variance(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / (y.size() - 1);
}

void trace_line(int it, double dev, const Eigen::VectorXd& ed, double ed_resid, bool damped) {
  std::cerr << "iter " << it << "  deviance " << dev << "  ED [";
  for (Eigen::Index k = 0; k < ed.size(); ++k) std::cerr << (k ? " " : "") << ed[k];
  std::cerr << "]  ED_resid " << ed_resid << (damped ? "  (damped)" : "") << "\n";
}

}  // namespace

FittedModel fit(const HendersonSolver& solver, const FitOptions& options) {
  const MixedModelSystem& system = solver.system();
  const Eigen::Index n = system.n();
  const int p = system.p();
  const int q = static_cast<int>(system.blocks.size());
  if (n <= p) throw std::invalid_argument("fit: need more observations than fixed-effect rank");
  if (!(options.tolerance > 0)) throw std::invalid_argument("fit: tolerance must be positive");

  const double var_y = std::max(sample_variance(system.y), 1e-300);
  const double floor = options.variance_floor_scale * var_y;

  FittedModel model;
  model.options = options;
  model.rank_x = p;

  double sigma2 = options.init_sigma2.value_or(var_y);
  Eigen::VectorXd variances =
      options.init_variances.value_or(Eigen::VectorXd::Constant(q, var_y));
  if (variances.size() != q) throw std::invalid_argument("fit: init_variances size mismatch");
  sigma2 = std::max(sigma2, floor);
  variances = variances.cwiseMax(floor);

  double dev_prev = std::numeric_limits<double>::infinity();
  int rising = 0;

  const int max_iter = options.fix_variances ? 1 : options.max_iter;
  for (int it = 1; it <= max_iter; ++it) {
    SolveResult res = solver.solve(variances, sigma2);
    Eigen::VectorXd ed = component_traces(system, res, variances, sigma2);
    const double ed_resid = n - p - ed.sum();
    if (ed_resid <= 1e-8)
      throw std::runtime_error("fit: residual effective dimension vanished (saturated model)");
    const double dev = reml_deviance(system, res, variances, sigma2);
    model.deviance_path.push_back(dev);

    const bool done = options.fix_variances || std::abs(dev - dev_prev) < options.tolerance;
    if (options.trace_level >= 1) trace_line(it, dev, ed, ed_resid, false);
    if (done || it == max_iter) {
      model.solve = std::move(res);
      model.effective_dims = std::move(ed);
      model.ed_residual = ed_resid;
      model.variances = variances;
      model.sigma2 = sigma2;
      model.converged = done;
      model.iterations = options.fix_variances ? 0 : it;
      return model;
    }

    // Schall updates; components with vanishing ED are pinned to the floor.
    Eigen::VectorXd next(q);
    for (int k = 0; k < q; ++k) {
      if (ed[k] < 1e-10) {
        next[k] = floor;
      } else {
        const auto& b = system.blocks[k];
        next[k] = std::max(b.precision.dot(res.c_hat[k].cwiseAbs2()) / ed[k], floor);
      }
    }
    double next_sigma2 = std::max(res.residuals.squaredNorm() / ed_resid, floor);

    rising = (dev > dev_prev) ? rising + 1 : 0;
    if (rising >= 2) {
      // Damp the step toward the previous iterate.
      next = 0.5 * (variances + next);
      next_sigma2 = 0.5 * (sigma2 + next_sigma2);
      rising = 0;
      if (options.trace_level >= 1) std::cerr << "iter " << it << "  step damped\n";
    }

    variances = std::move(next);
    sigma2 = next_sigma2;
    dev_prev = dev;
  }
  throw std::logic_error("fit: unreachable");
}

FittedModel fit(const MixedModelSystem& system, const FitOptions& options) {
  return fit(HendersonSolver(system), options);
}

FittedModel refit_with(const HendersonSolver& solver, const FittedModel& previous,
                       FitOptions overrides) {
  if (previous.variances.size() != static_cast<Eigen::Index>(solver.system().blocks.size()))
    throw std::invalid_argument("refit_with: previous fit does not match this system");
  if (!overrides.init_variances) overrides.init_variances = previous.variances;
  if (!overrides.init_sigma2) overrides.init_sigma2 = previous.sigma2;
  return fit(solver, overrides);
}

}  // namespace spats
