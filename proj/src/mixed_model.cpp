#include "spats/mixed_model.hpp"

#include <cmath>
#include <stdexcept>

namespace spats {

namespace {

void check_variances(const MixedModelSystem& system, const Eigen::VectorXd& variances,
                     double sigma2) {
  if (static_cast<size_t>(variances.size()) != system.blocks.size())
    throw std::invalid_argument("henderson: variance count does not match block count");
  if (!(sigma2 > 0)) throw std::invalid_argument("henderson: non-positive residual variance");
  for (Eigen::Index k = 0; k < variances.size(); ++k)
    if (!(variances[k] > 0))
      throw std::invalid_argument("henderson: non-positive variance for block " +
                                  system.blocks[k].name);
}

}  // namespace

HendersonSolver::HendersonSolver(const MixedModelSystem& system) : system_(&system) {
  const Eigen::Index n = system.n();
  if (system.x.rows() != n)
    throw std::invalid_argument("henderson: X row count does not match y");
  for (const auto& b : system.blocks) {
    if (b.z.rows() != n)
      throw std::invalid_argument("henderson: block " + b.name + " row count does not match y");
    if (b.precision.size() != b.z.cols())
      throw std::invalid_argument("henderson: block " + b.name + " precision size mismatch");
    if (b.precision.size() > 0 && b.precision.minCoeff() <= 0)
      throw std::invalid_argument("henderson: block " + b.name + " precision not positive");
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system.x);
  qr.setThreshold(1e-8);
  if (qr.rank() < system.p()) {
    const auto& perm = qr.colsPermutation().indices();
    const int bad = perm[qr.rank()];
    const std::string name = bad < static_cast<int>(system.x_names.size())
                                 ? system.x_names[bad]
                                 : ("column " + std::to_string(bad));
    throw std::invalid_argument("henderson: fixed design is rank deficient at " + name);
  }

  const int p = system.p();
  const int m = system.total_random();
  Eigen::MatrixXd design(n, p + m);
  design.leftCols(p) = system.x;
  int off = p;
  for (const auto& b : system.blocks) {
    design.middleCols(off, b.size()) = b.z;
    off += b.size();
  }
  mtm_.noalias() = design.transpose() * design;
  mty_.noalias() = design.transpose() * system.y;
  yty_ = system.y.squaredNorm();
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> HendersonSolver::assemble(
    const Eigen::VectorXd& variances, double sigma2) const {
  check_variances(*system_, variances, sigma2);
  Eigen::MatrixXd c = mtm_ / sigma2;
  int off = system_->p();
  for (size_t k = 0; k < system_->blocks.size(); ++k) {
    const auto& b = system_->blocks[k];
    c.diagonal().segment(off, b.size()) += b.precision / variances[k];
    off += b.size();
  }
  return {std::move(c), mty_ / sigma2};
}

SolveResult HendersonSolver::solve(const Eigen::VectorXd& variances, double sigma2) const {
  auto [c, rhs] = assemble(variances, sigma2);
  const int p = system_->p();
  const int dim = static_cast<int>(c.rows());

  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) {
    // Locate the offending pivot for the error message.
    Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
    int bad = -1;
    for (int i = 0; i < dim; ++i)
      if (!(ldlt.vectorD()[i] > 0)) { bad = static_cast<int>(ldlt.transpositionsP().indices()[i]); break; }
    std::string where = "unknown block";
    if (bad >= 0 && bad < p) where = "fixed block";
    else if (bad >= p) {
      int off = p;
      for (const auto& b : system_->blocks) {
        if (bad < off + b.size()) { where = "block " + b.name; break; }
        off += b.size();
      }
    }
    throw std::runtime_error("henderson: factorization failed at " + where);
  }

  SolveResult r;
  const Eigen::VectorXd sol = llt.solve(rhs);
  r.logdet_c = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  r.yqy = (yty_ - mty_.dot(sol)) / sigma2;

  r.beta_hat = sol.head(p);
  int off = p;
  for (const auto& b : system_->blocks) {
    r.c_hat.push_back(sol.segment(off, b.size()));
    off += b.size();
  }

  // diag(C^{-1}) via squared column norms of L^{-1}.
  Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(dim, dim);
  llt.matrixL().solveInPlace(linv);
  const Eigen::VectorXd cinv_diag = linv.cwiseAbs2().colwise().sum();
  off = p;
  for (const auto& b : system_->blocks) {
    r.cinv_diag.push_back(cinv_diag.segment(off, b.size()));
    off += b.size();
  }

  r.fitted = system_->x * r.beta_hat;
  for (size_t k = 0; k < system_->blocks.size(); ++k)
    r.fitted.noalias() += system_->blocks[k].z * r.c_hat[k];
  r.residuals = system_->y - r.fitted;
  return r;
}

Eigen::VectorXd component_traces(const MixedModelSystem& system, const SolveResult& result,
                                 const Eigen::VectorXd& variances, double sigma2) {
  check_variances(system, variances, sigma2);
  Eigen::VectorXd ed(system.blocks.size());
  for (size_t k = 0; k < system.blocks.size(); ++k) {
    const auto& b = system.blocks[k];
    const double tr = b.precision.dot(result.cinv_diag[k]) / variances[k];
    ed[k] = b.size() - tr;
    if (ed[k] < -1e-8)
      throw std::runtime_error("component_traces: negative effective dimension for block " +
                               b.name);
    if (ed[k] < 0) ed[k] = 0.0;
  }
  return ed;
}

double reml_deviance(const MixedModelSystem& system, const SolveResult& result,
                     const Eigen::VectorXd& variances, double sigma2) {
  check_variances(system, variances, sigma2);
  double dev = system.n() * std::log(sigma2) + result.logdet_c + result.yqy;
  for (size_t k = 0; k < system.blocks.size(); ++k) {
    const auto& b = system.blocks[k];
    dev += b.size() * std::log(variances[k]) - b.precision.array().log().sum();
  }
  if (!std::isfinite(dev))
    throw std::runtime_error("reml_deviance: non-finite determinant terms");
  return dev;
}

}  // namespace spats
