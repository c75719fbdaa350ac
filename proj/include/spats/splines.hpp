#pragma once

#include <Eigen/Dense>

namespace spats {

// Equally spaced knot sequence over [min, max] with `degree` replicated-spacing
// exterior knots beyond each end. Basis dimension = interior_segments + degree.
struct KnotVector {
  int degree = 3;
  int interior_segments = 1;
  double min = 0.0;
  double max = 1.0;
  Eigen::VectorXd knots;  // interior_segments + 1 + 2*degree entries, nondecreasing

  int basis_dim() const { return interior_segments + degree; }
};

KnotVector make_knots(double min, double max, int nseg, int degree);

// Dense B-spline design matrix: one row per evaluation point, one column per
// basis function. Rows sum to one; at most degree+1 consecutive nonzeros per row.
struct BasisMatrix {
  Eigen::MatrixXd values;
  int degree = 0;
  double min = 0.0;
  double max = 1.0;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Cox-de Boor evaluation. Points must lie in [min, max]; the right boundary is
// handled with the right-closed convention so partition of unity holds there.
BasisMatrix eval_basis(const KnotVector& kv, const Eigen::VectorXd& points);

// Integer-valued finite difference operator of the given order, built by
// composing first differences. Annihilates polynomials of degree < order.
struct DifferenceOperator {
  int order = 1;
  Eigen::MatrixXd matrix;  // (dim - order) x dim

  int dim() const { return static_cast<int>(matrix.cols()); }
};

DifferenceOperator difference_matrix(int dim, int order);

// Reduced basis over the same domain with interior_segments/divisor segments.
// Its column space is contained in that of the full basis.
KnotVector nested_knots(const KnotVector& full, int divisor);
BasisMatrix nested_basis(const KnotVector& full, int divisor, const Eigen::VectorXd& points);

}  // namespace spats
