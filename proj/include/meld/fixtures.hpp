#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meld/marginal.hpp"
#include "meld/model.hpp"
#include "meld/pooling.hpp"
#include "meld/splitting.hpp"

namespace meld::fixtures {

// Two scalar-phi submodels phi ~ N(0, v_m), y_m | phi ~ N(phi, obs_var). The
// latent variant routes the likelihood through psi_m | phi ~ N(phi, obs_var/2),
// y_m | psi_m ~ N(psi_m, obs_var/2), which leaves p(y_m | phi) unchanged.
struct GaussianPairOptions {
  double prior_mean1 = 0.0;
  double prior_var1 = 1.0;
  double prior_mean2 = 0.0;
  double prior_var2 = 4.0;
  double y1 = 1.0;
  double y2 = -1.0;
  double obs_var = 1.0;
  bool with_data = true;
  bool latent = false;
};

struct NormalMoments {
  double mean = 0.0;
  double var = 0.0;
};

struct GaussianPair {
  GaussianPairOptions options;
  std::vector<SubmodelSpec> submodels;
  std::vector<Density> priors;  // analytic prior marginals p_m(phi)

  // Conjugate posterior of phi under a Gaussian pooled prior.
  NormalMoments posterior(const PooledPrior& pooled) const;
};

SubmodelSpec gaussian_submodel(const std::string& id, double prior_mean, double prior_var,
                               std::optional<double> y, double obs_var, bool latent);

GaussianPair gaussian_pair(const GaussianPairOptions& options = {});

PooledPrior gaussian_pair_pool(const GaussianPair& fx, PoolingMode mode, std::vector<double> weights = {},
                               std::size_t dictator = 0);

MeldedModel gaussian_pair_model(const GaussianPair& fx, PoolingMode mode, std::vector<double> weights = {},
                                std::size_t dictator = 0, bool poe_shortcut = false);

// phi in {0, 1} with uniform priors; y_m | phi Bernoulli(0.8 if phi = 1 else 0.2); y1 = y2 = 1.
struct DiscreteToy {
  std::vector<SubmodelSpec> submodels;
  std::vector<Density> priors;
  double posterior_phi1 = 0.0;  // enumeration oracle
};

DiscreteToy discrete_toy();
MeldedModel discrete_toy_model(const DiscreteToy& fx);
Density uniform_lattice_density(double lo, double hi);

// Influenza-like evidence synthesis with a deterministic link.
//
// Submodel A: theta = log lambda_{1..5} with a random-walk prior, Poisson counts
// y_t | lambda_t ~ Poisson(mu lambda_t), and phi = sum_t pi_t lambda_t.
// Submodel B: psi = (log chi, logit pi) with chi lognormal and pi ~ Beta(6, 4);
// phi | chi, pi is the normal approximation to Binomial(chi, pi). Truth and
// data are synthetic constants.
struct FluOptions {
  bool with_data = true;
  std::size_t n_forward = 100000;
  std::uint64_t seed = 2009;
  std::size_t table_knots = 2048;
  double dof = 4.0;  // KDE kernel degrees of freedom
  BandwidthRule bandwidth = BandwidthRule::robust;
};

struct FluLike {
  SubmodelSpec icu;       // submodel A (deterministic link)
  SubmodelSpec severity;  // submodel B
  Matrix icu_prior_draws;
  Matrix severity_prior_draws;
  Density icu_marginal;       // tabulated KDE of A's prior on phi
  Density severity_marginal;  // tabulated KDE of B's prior on phi
  LinkSpace space;
};

inline constexpr int kFluWeeks = 5;
extern const double kFluDetection[kFluWeeks];   // pi_t
extern const double kFluTruthLambda[kFluWeeks];  // synthetic truth
// Synthetic weekly counts drawn from the truth.
std::vector<int> flu_counts(std::uint64_t seed);

FluLike flu_like(const FluOptions& options = {});
PooledPrior flu_pool(const FluLike& fx, PoolingMode mode, std::vector<double> weights = {});
MeldedModel flu_model(const FluLike& fx, PoolingMode mode, std::vector<double> weights = {},
                      bool poe_shortcut = false);

// Ecology-like joint model with T = 8 years, link phi = (alpha_C, alpha_A,
// beta_C, beta_A) of logistic survival regressions on a frost covariate.
// Recovery block psi_1 = (alpha_lambda, beta_lambda): multinomial recoveries
// of ringed birds. Census block psi_2 = log rho (fecundity): adult counts
// from a deterministic population recursion with Gaussian observation error.
struct EcologyLike {
  SplitPlan plan;
  std::vector<Density> joint_priors;  // N(0, 10^2) on each coordinate of phi, as one density
  JointLogDensity joint;
  SubmodelSpec monolithic;  // the whole joint as one submodel over phi
};

inline constexpr int kEcoYears = 8;
EcologyLike ecology_like();
MeldedModel ecology_monolithic_model(const EcologyLike& fx);

// Split motifs on a scalar link.
struct MotifFixture {
  SplitPlan plan;
};

// psi_1 -> phi -> psi_2; dictatorial pooling on the first factor with an
// arbitrary second factor N(aux_mean, aux_var).
MotifFixture chain_motif(double aux_mean = 0.0, double aux_var = 1.0);
// phi -> psi_1, phi -> psi_2 with PoE of p(phi)^(1/2) factors.
MotifFixture tail_to_tail_motif();
// psi_1 -> phi <- psi_2 on binary variables; not splittable.
MotifFixture head_to_head_motif();

// y_1..y_20 Bernoulli(phi), phi ~ Beta(2, 2), split into `batches` batches.
struct TallBernoulli {
  SplitPlan plan;
  std::vector<int> data;
  double alpha_post = 0.0;
  double beta_post = 0.0;
};

TallBernoulli tall_bernoulli(std::size_t batches = 4);
Density beta_density(double a, double b);

}  // namespace meld::fixtures
