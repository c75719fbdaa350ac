#include "spats/genetics.hpp"

#include <algorithm>
#include <stdexcept>

namespace spats {

namespace {

int matrix_rank(const Eigen::MatrixXd& m) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-8);
  return static_cast<int>(qr.rank());
}

}  // namespace

HeritabilityReport heritability(const TrialModel& model, const FittedModel& fitted,
                                HeritabilityMode mode) {
  if (model.genotype_block < 0)
    throw std::invalid_argument("heritability: genotype is fixed; heritability is undefined");
  const int k = model.genotype_block;
  const auto& zg = model.system.blocks[k].z;
  const int m_g = static_cast<int>(zg.cols());

  HeritabilityReport rep;
  rep.mode = mode;
  rep.m_g = m_g;
  rep.ed_genetic = fitted.effective_dims[k];

  const int rank_x = matrix_rank(model.system.x);
  Eigen::MatrixXd xz(model.system.x.rows(), model.system.x.cols() + zg.cols());
  xz << model.system.x, zg;
  rep.zero_eigen_count = m_g - (matrix_rank(xz) - rank_x);

  switch (mode) {
    case HeritabilityMode::Oakey:
      rep.value = rep.ed_genetic / (m_g - rep.zero_eigen_count);
      break;
    case HeritabilityMode::Cullis:
      rep.value = rep.ed_genetic / m_g;
      break;
    case HeritabilityMode::Standard: {
      const Eigen::VectorXd counts = zg.colwise().sum();
      const double r = counts[0];
      if ((counts.array() != r).any())
        throw std::invalid_argument("heritability: standard mode needs a balanced design");
      rep.replicates = static_cast<int>(r);
      const double sg2 = fitted.variances[k];
      rep.value = sg2 / (sg2 + fitted.sigma2 / r);
      break;
    }
  }
  rep.value = std::clamp(rep.value, 0.0, 1.0);
  return rep;
}

std::vector<GenotypeEffect> genotype_predictions(const TrialModel& model,
                                                 const FittedModel& fitted) {
  std::vector<GenotypeEffect> out;
  if (model.genotype_block >= 0) {
    const auto& c = fitted.solve.c_hat[model.genotype_block];
    for (size_t i = 0; i < model.genotype_levels.size(); ++i)
      out.push_back({model.genotype_levels[i], c[static_cast<Eigen::Index>(i)]});
  } else {
    for (int j = 0; j < model.fixed_genotype_cols; ++j)
      out.push_back({model.fixed_genotype_levels[j],
                     fitted.solve.beta_hat[model.fixed_genotype_offset + j]});
  }
  return out;
}

}  // namespace spats
