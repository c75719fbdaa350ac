#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spats/reml.hpp"
#include "spats/trial.hpp"

namespace spats {

enum class HeritabilityMode { Standard, Cullis, Oakey };

struct HeritabilityReport {
  HeritabilityMode mode = HeritabilityMode::Oakey;
  double value = 0.0;  // in [0, 1]
  double ed_genetic = 0.0;
  int m_g = 0;
  int zero_eigen_count = 0;           // zeta_g, by the rank characterization
  std::optional<int> replicates;      // standard mode only
};

// Oakey: ED_g / (m_g - zeta_g); Cullis: ED_g / m_g; standard requires a
// balanced design and returns sigma_g^2 / (sigma_g^2 + sigma^2 / r).
HeritabilityReport heritability(const TrialModel& model, const FittedModel& fitted,
                                HeritabilityMode mode);

struct GenotypeEffect {
  std::string genotype;
  double value = 0.0;
};

// BLUPs when the genotype is random (zero mean over connected sets), BLUEs
// relative to the reference level when fixed.
std::vector<GenotypeEffect> genotype_predictions(const TrialModel& model,
                                                 const FittedModel& fitted);

}  // namespace spats
