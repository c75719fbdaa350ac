#include "spats/splines.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace spats {

KnotVector make_knots(double min, double max, int nseg, int degree) {
  if (!std::isfinite(min) || !std::isfinite(max))
    throw std::invalid_argument("make_knots: non-finite domain bounds");
  if (max <= min) throw std::invalid_argument("make_knots: max must exceed min");
  if (nseg < 1) throw std::invalid_argument("make_knots: nseg must be positive");
  if (degree < 0) throw std::invalid_argument("make_knots: degree must be non-negative");

  KnotVector kv;
  kv.degree = degree;
  kv.interior_segments = nseg;
  kv.min = min;
  kv.max = max;
  const double h = (max - min) / nseg;
  kv.knots.resize(nseg + 1 + 2 * degree);
  for (int i = 0; i < kv.knots.size(); ++i)
    kv.knots[i] = min + (i - degree) * h;
  return kv;
}

namespace {

// De Boor local recursion: values of the degree+1 B-splines that are nonzero
// on the span [knots[span], knots[span+1]).
void basis_funs(const Eigen::VectorXd& knots, int span, int degree, double x,
                Eigen::VectorXd& out) {
  out.setZero(degree + 1);
  out[0] = 1.0;
  Eigen::VectorXd left(degree + 1), right(degree + 1);
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

}  // namespace

BasisMatrix eval_basis(const KnotVector& kv, const Eigen::VectorXd& points) {
  const int degree = kv.degree;
  const int nseg = kv.interior_segments;
  const int dim = kv.basis_dim();
  const double span_tol = 1e-12 * (kv.max - kv.min);

  BasisMatrix out;
  out.degree = degree;
  out.min = kv.min;
  out.max = kv.max;
  out.values.setZero(points.size(), dim);

  Eigen::VectorXd local(degree + 1);
  const double h = (kv.max - kv.min) / nseg;
  for (Eigen::Index i = 0; i < points.size(); ++i) {
    const double x = points[i];
    if (!(x >= kv.min - span_tol && x <= kv.max + span_tol))
      throw std::invalid_argument("eval_basis: point " + std::to_string(x) +
                                  " outside domain [" + std::to_string(kv.min) + ", " +
                                  std::to_string(kv.max) + "]");
    // span index into the knot vector; x == max falls in the last interior span
    int seg = static_cast<int>(std::floor((x - kv.min) / h));
    if (seg < 0) seg = 0;
    if (seg > nseg - 1) seg = nseg - 1;
    const int span = seg + degree;
    basis_funs(kv.knots, span, degree, x, local);
    out.values.block(i, span - degree, 1, degree + 1) = local.transpose();
  }
  return out;
}

DifferenceOperator difference_matrix(int dim, int order) {
  if (order < 1) throw std::invalid_argument("difference_matrix: order must be positive");
  if (dim <= order) throw std::invalid_argument("difference_matrix: dim must exceed order");

  auto first_diff = [](int m) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m - 1, m);
    for (int i = 0; i < m - 1; ++i) {
      d(i, i) = -1.0;
      d(i, i + 1) = 1.0;
    }
    return d;
  };

  Eigen::MatrixXd m = first_diff(dim);
  for (int k = 1; k < order; ++k) m = first_diff(dim - k) * m;

  DifferenceOperator op;
  op.order = order;
  op.matrix = std::move(m);
  return op;
}

KnotVector nested_knots(const KnotVector& full, int divisor) {
  if (divisor < 1) throw std::invalid_argument("nested_knots: divisor must be positive");
  if (full.interior_segments % divisor != 0)
    throw std::invalid_argument("nested_knots: divisor " + std::to_string(divisor) +
                                " does not divide " + std::to_string(full.interior_segments) +
                                " segments");
  return make_knots(full.min, full.max, full.interior_segments / divisor, full.degree);
}

BasisMatrix nested_basis(const KnotVector& full, int divisor, const Eigen::VectorXd& points) {
  return eval_basis(nested_knots(full, divisor), points);
}

}  // namespace spats
