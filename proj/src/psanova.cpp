#include "spats/psanova.hpp"

#include <stdexcept>

namespace spats {

Eigen::MatrixXd row_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("row_kron: row-count mismatch");
  const Eigen::Index n = a.rows(), p = a.cols(), q = b.cols();
  Eigen::MatrixXd out(n, p * q);
  for (Eigen::Index j = 0; j < p; ++j)
    out.middleCols(j * q, q) = b.array().colwise() * a.col(j).array();
  return out;
}

EvdPenalty evd_penalty(const DifferenceOperator& d) {
  const Eigen::MatrixXd dtd = d.matrix.transpose() * d.matrix;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dtd);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("evd_penalty: eigen decomposition failed");

  const int m = d.dim();
  const int nullity = d.order;
  const double floor = 1e-10 * es.eigenvalues().maxCoeff();
  for (int i = nullity; i < m; ++i)
    if (es.eigenvalues()[i] <= floor)
      throw std::runtime_error("evd_penalty: numerically indefinite penalty");

  EvdPenalty out;
  out.nullity = nullity;
  out.eigenvalues_nonzero = es.eigenvalues().tail(m - nullity);
  out.vectors_nonzero = es.eigenvectors().rightCols(m - nullity);
  // Sign convention: largest-magnitude component positive.
  for (int j = 0; j < out.vectors_nonzero.cols(); ++j) {
    Eigen::Index imax;
    out.vectors_nonzero.col(j).cwiseAbs().maxCoeff(&imax);
    if (out.vectors_nonzero(imax, j) < 0) out.vectors_nonzero.col(j) *= -1.0;
  }
  return out;
}

namespace {

void check_coords(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("build_psanova: u and v length mismatch");
  if (u.size() == 0) throw std::invalid_argument("build_psanova: empty coordinates");
  if (u.maxCoeff() == u.minCoeff() || v.maxCoeff() == v.minCoeff())
    throw std::invalid_argument("build_psanova: degenerate coordinates");
}

}  // namespace

PsAnovaDesign build_psanova(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                            const SpatialConfig& config) {
  check_coords(u, v);
  if (config.nseg_u < 1 || config.nseg_v < 1)
    throw std::invalid_argument("build_psanova: segment counts must be resolved and positive");
  if (config.penalty_order != 2)
    throw std::invalid_argument("build_psanova: only second-order penalties are supported");

  PsAnovaDesign d;
  d.config = config;
  d.knots_u = make_knots(u.minCoeff(), u.maxCoeff(), config.nseg_u, config.degree);
  d.knots_v = make_knots(v.minCoeff(), v.maxCoeff(), config.nseg_v, config.degree);
  d.knots_u_nested = nested_knots(d.knots_u, config.nest_div_u);
  d.knots_v_nested = nested_knots(d.knots_v, config.nest_div_v);
  d.L = d.knots_u.basis_dim();
  d.P = d.knots_v.basis_dim();
  d.L_nested = d.knots_u_nested.basis_dim();
  d.P_nested = d.knots_v_nested.basis_dim();
  if (d.L < 4 || d.P < 4 || d.L_nested < 4 || d.P_nested < 4)
    throw std::invalid_argument("build_psanova: basis dimension below 4 on some margin");

  d.evd_u = evd_penalty(difference_matrix(d.L, config.penalty_order));
  d.evd_v = evd_penalty(difference_matrix(d.P, config.penalty_order));
  d.evd_u_nested = evd_penalty(difference_matrix(d.L_nested, config.penalty_order));
  d.evd_v_nested = evd_penalty(difference_matrix(d.P_nested, config.penalty_order));

  const auto eval = eval_psanova(d, u, v);
  d.x_fixed = eval.x_fixed;
  d.z_blocks = eval.z_blocks;

  d.precision[0] = d.evd_v.eigenvalues_nonzero;
  d.precision[1] = d.evd_u.eigenvalues_nonzero;
  d.precision[2] = d.evd_v.eigenvalues_nonzero;
  d.precision[3] = d.evd_u.eigenvalues_nonzero;

  // Block 5 precision is the Kronecker-sum diagonal over the nested margins,
  // ordered v-major to match the row_kron column layout.
  const int mu = d.L_nested - 2, mv = d.P_nested - 2;
  d.block5_ev_v.resize(mu * mv);
  d.block5_ev_u.resize(mu * mv);
  for (int jv = 0; jv < mv; ++jv)
    for (int ju = 0; ju < mu; ++ju) {
      d.block5_ev_v[jv * mu + ju] = d.evd_v_nested.eigenvalues_nonzero[jv];
      d.block5_ev_u[jv * mu + ju] = d.evd_u_nested.eigenvalues_nonzero[ju];
    }
  d.precision[4] = d.block5_ev_v + d.block5_ev_u;
  return d;
}

SpatialEval eval_psanova(const PsAnovaDesign& d, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("eval_psanova: u and v length mismatch");
  const Eigen::Index n = u.size();

  SpatialEval out;
  out.x_fixed.resize(n, 4);
  out.x_fixed.col(0).setOnes();
  out.x_fixed.col(1) = u;
  out.x_fixed.col(2) = v;
  out.x_fixed.col(3) = u.cwiseProduct(v);

  const Eigen::MatrixXd bu = eval_basis(d.knots_u, u).values;
  const Eigen::MatrixXd bv = eval_basis(d.knots_v, v).values;
  const Eigen::MatrixXd z_u = bu * d.evd_u.vectors_nonzero;
  const Eigen::MatrixXd z_v = bv * d.evd_v.vectors_nonzero;

  out.z_blocks[0] = z_v;
  out.z_blocks[1] = z_u;
  out.z_blocks[2] = z_v.array().colwise() * u.array();
  out.z_blocks[3] = z_u.array().colwise() * v.array();

  const Eigen::MatrixXd bun = eval_basis(d.knots_u_nested, u).values;
  const Eigen::MatrixXd bvn = eval_basis(d.knots_v_nested, v).values;
  out.z_blocks[4] = row_kron(bvn * d.evd_v_nested.vectors_nonzero,
                             bun * d.evd_u_nested.vectors_nonzero);
  return out;
}

Eigen::VectorXd penalized_ls_fit(const Eigen::MatrixXd& b, const Eigen::VectorXd& y,
                                 double lambda_u, double lambda_v,
                                 const DifferenceOperator& d_u,
                                 const DifferenceOperator& d_v) {
  if (lambda_u <= 0 || lambda_v <= 0)
    throw std::invalid_argument("penalized_ls_fit: smoothing parameters must be positive");
  const int l = d_u.dim(), p = d_v.dim();
  if (b.cols() != static_cast<Eigen::Index>(l) * p)
    throw std::invalid_argument("penalized_ls_fit: basis/penalty dimension mismatch");

  const Eigen::MatrixXd pu = d_u.matrix.transpose() * d_u.matrix;
  const Eigen::MatrixXd pv = d_v.matrix.transpose() * d_v.matrix;
  Eigen::MatrixXd c = b.transpose() * b;
  for (int jv = 0; jv < p; ++jv)
    c.block(jv * l, jv * l, l, l) += lambda_u * pu;
  for (int jv = 0; jv < p; ++jv)
    for (int kv = 0; kv < p; ++kv)
      if (pv(jv, kv) != 0.0)
        c.block(jv * l, kv * l, l, l).diagonal().array() += lambda_v * pv(jv, kv);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(c);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw std::runtime_error("penalized_ls_fit: singular penalized normal matrix");
  return ldlt.solve(b.transpose() * y);
}

}  // namespace spats
