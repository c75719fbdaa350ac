#pragma once

#include <array>
#include <Eigen/Dense>

#include "spats/splines.hpp"

namespace spats {

// Row-wise Kronecker product: row i of the result is kron(row i of a, row i of b),
// so column (j_a, j_b) sits at index j_a * b.cols() + j_b.
Eigen::MatrixXd row_kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Eigen decomposition of D'D with the `order`-dimensional null space removed.
// Eigenvalues ascending and strictly positive; eigenvector signs fixed so the
// largest-magnitude component of each vector is positive.
struct EvdPenalty {
  Eigen::MatrixXd vectors_nonzero;    // m x (m - order)
  Eigen::VectorXd eigenvalues_nonzero;
  int nullity = 0;
};

EvdPenalty evd_penalty(const DifferenceOperator& d);

struct SpatialConfig {
  int nseg_u = -1;  // -1: resolved by the caller from the layout
  int nseg_v = -1;
  int degree = 3;
  int nest_div_u = -1;  // -1: resolved by the caller (2 when it divides nseg, else 1)
  int nest_div_v = -1;
  int penalty_order = 2;
};

// Mixed-model reparameterization of the anisotropic tensor-product P-spline.
// Fixed part is the bilinear polynomial [1, u, v, u.v]; the five random blocks
// carry the smooth decomposition f_v, f_u, u.h_v, v.h_u, f_{u,v}, each with a
// diagonal precision. Nested margins are used only in block 5.
struct PsAnovaDesign {
  Eigen::MatrixXd x_fixed;                      // n x 4
  std::array<Eigen::MatrixXd, 5> z_blocks;
  std::array<Eigen::VectorXd, 5> precision;     // Lambda_k^{-1} diagonals
  // Per-column margin eigenvalues of block 5: precision[4] = block5_ev_v + block5_ev_u.
  Eigen::VectorXd block5_ev_v, block5_ev_u;
  KnotVector knots_u, knots_v;
  KnotVector knots_u_nested, knots_v_nested;
  EvdPenalty evd_u, evd_v, evd_u_nested, evd_v_nested;
  int L = 0, P = 0, L_nested = 0, P_nested = 0;
  SpatialConfig config;

  int smooth_coefficient_count() const {
    int total = 0;
    for (const auto& z : z_blocks) total += static_cast<int>(z.cols());
    return total;
  }
};

// u, v are centered and scaled coordinates (see build_system); nseg_u/nseg_v
// must be set in the config.
PsAnovaDesign build_psanova(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                            const SpatialConfig& config);

// Evaluate the design at new (scaled) coordinates using the training knots.
struct SpatialEval {
  Eigen::MatrixXd x_fixed;
  std::array<Eigen::MatrixXd, 5> z_blocks;
};

SpatialEval eval_psanova(const PsAnovaDesign& design, const Eigen::VectorXd& u,
                         const Eigen::VectorXd& v);

// Closed-form minimizer of the anisotropic penalized least squares objective in
// the raw tensor basis: alpha = (B'B + P)^{-1} B'y with
// P = lambda_u (I kron Du'Du) + lambda_v (Dv'Dv kron I). Columns of B are
// ordered v-major (the u index varies fastest).
Eigen::VectorXd penalized_ls_fit(const Eigen::MatrixXd& b, const Eigen::VectorXd& y,
                                 double lambda_u, double lambda_v,
                                 const DifferenceOperator& d_u,
                                 const DifferenceOperator& d_v);

}  // namespace spats
