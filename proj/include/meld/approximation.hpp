#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meld/marginal.hpp"
#include "meld/model.hpp"
#include "meld/sampler.hpp"

namespace meld {

enum class ApproxVariant { poe, dictatorial };

std::string to_string(ApproxVariant v);
ApproxVariant parse_approx_variant(const std::string& name);

struct NormalApproxSpec {
  MomentSummary posterior;             // stage-1 posterior of phi
  std::optional<MomentSummary> prior;  // stage-1 prior marginal of phi (dictatorial only)
  ApproxVariant variant = ApproxVariant::poe;
};

struct AdjustedNormal {
  Vector mean;
  Matrix cov;
};

// Sigma_c = (Sigma^-1 - Sigma0^-1)^-1, mu_c = Sigma_c (Sigma^-1 mu - Sigma0^-1 mu0).
// Throws ConfigError when Sigma_c is not positive definite.
AdjustedNormal prior_adjust(const Vector& mu, const Matrix& sigma, const Vector& mu0, const Matrix& sigma0);

// PoE: log N(mu_hat | phi, Sigma_hat) + log p2. Dictatorial: log N(phi | mu_c, Sigma_c) + log p2.
double approx_target_log_density(const NormalApproxSpec& spec, const SubmodelSpec& submodel2, const Vector& phi,
                                 const Vector& psi2);

SamplingTarget approx_target(const NormalApproxSpec& spec, const SubmodelSpec& submodel2);

// Posterior of a single submodel given its own data.
SamplingTarget submodel_posterior_target(const SubmodelSpec& sub);

// Kolmogorov-Smirnov distance between draws and N(mean, sd^2).
double ks_distance_normal(const Vector& draws, double mean, double sd);

struct TwoStageApproxResult {
  ChainStore stage1;
  NormalApproxSpec spec;
  ChainStore stage2;
  std::vector<double> ks_distance;  // per link coordinate, stage-1 draws vs summary
  std::vector<std::string> warnings;
};

inline constexpr double kKsWarnThreshold = 0.05;

TwoStageApproxResult normal_two_stage(const SubmodelSpec& submodel1, const SubmodelSpec& submodel2,
                                      ApproxVariant variant, const SamplerConfig& stage1,
                                      const SamplerConfig& stage2, std::size_t n_prior_draws = 100000);

}  // namespace meld
