#pragma once

#include <string>
#include <vector>
#include <Eigen/Dense>

namespace spats {

enum class BlockType { Smooth, Factor };

// One random block Z_k with diagonal precision Lambda_k^{-1} and its own
// variance component.
struct RandomBlock {
  std::string name;
  Eigen::MatrixXd z;
  Eigen::VectorXd precision;  // Lambda_k^{-1} diagonal, strictly positive
  int nominal_dim = 0;
  BlockType type = BlockType::Factor;

  int size() const { return static_cast<int>(z.cols()); }
};

struct MixedModelSystem {
  Eigen::MatrixXd x;  // full column rank fixed design
  std::vector<std::string> x_names;
  std::vector<RandomBlock> blocks;
  Eigen::VectorXd y;

  Eigen::Index n() const { return y.size(); }
  int p() const { return static_cast<int>(x.cols()); }
  int total_random() const {
    int m = 0;
    for (const auto& b : blocks) m += b.size();
    return m;
  }
};

struct SolveResult {
  Eigen::VectorXd beta_hat;
  std::vector<Eigen::VectorXd> c_hat;
  std::vector<Eigen::VectorXd> cinv_diag;  // diagonal of C^{-1}_{kk} per block
  double logdet_c = 0.0;                   // log|C| from the factorization
  double yqy = 0.0;                        // y'Qy = y'R^{-1} residual
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
};

// Henderson mixed-model equations with the cross-product matrix cached across
// solves at different variances. Construction validates rank(X) and reports
// collinear columns by name.
class HendersonSolver {
 public:
  explicit HendersonSolver(const MixedModelSystem& system);

  const MixedModelSystem& system() const { return *system_; }

  SolveResult solve(const Eigen::VectorXd& variances, double sigma2) const;

  // Dense coefficient matrix and right-hand side, mainly for oracle checks.
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> assemble(const Eigen::VectorXd& variances,
                                                       double sigma2) const;

  double rank_x() const { return static_cast<double>(system_->p()); }

 private:
  const MixedModelSystem* system_;
  Eigen::MatrixXd mtm_;  // [X Z]'[X Z]
  Eigen::VectorXd mty_;  // [X Z]'y
  double yty_ = 0.0;
};

// ED_k = m_k - (1/sigma_k^2) trace(Lambda_k^{-1} C^{-1}_{kk}) per random block.
Eigen::VectorXd component_traces(const MixedModelSystem& system, const SolveResult& result,
                                 const Eigen::VectorXd& variances, double sigma2);

// -2 x restricted log-likelihood up to an additive constant:
// n log sigma^2 + sum_k (m_k log sigma_k^2 + log|Lambda_k|) + log|C| + y'Qy.
double reml_deviance(const MixedModelSystem& system, const SolveResult& result,
                     const Eigen::VectorXd& variances, double sigma2);

}  // namespace spats
