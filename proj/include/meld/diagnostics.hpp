#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meld/sampler.hpp"
#include "meld/types.hpp"

namespace meld {

// Initial monotone sequence estimator; 1 for a constant chain.
double effective_sample_size(const Vector& x);

// ESS of a stage >= 2 column through its stage-one ancestry: draws that share
// a stage-one row, or sit on nearby autocorrelated rows, carry one piece of
// information between them.
double ancestral_ess(const Vector& x, const std::vector<std::size_t>& root_index, std::size_t root_rows);

// Fraction of consecutive draws that differ.
double move_rate(const Vector& x);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double ess = 0.0;   // the smaller of the chain ESS and the ancestral ESS at stage >= 2
  double mcse = 0.0;  // sd / sqrt(ess)
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double move_rate = 0.0;
};

ParameterSummary summarize(const std::string& name, const Vector& x);

struct ChainDiagnostics {
  int stage = 1;
  std::size_t rows = 0;
  std::vector<ParameterSummary> parameters;
  std::vector<BlockStats> acceptance;
  double floor_hit_fraction = 0.0;
  double unique_proposal_fraction = 1.0;
  std::optional<double> weight_ess;
  std::vector<std::string> warnings;

  const ParameterSummary& parameter(const std::string& name) const;
};

ChainDiagnostics diagnostics(const ChainStore& chain);

// |a - b| <= z * sqrt(se_a^2 + se_b^2).
bool within_combined_se(double a, double se_a, double b, double se_b, double z = 3.0);

}  // namespace meld
