#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "meld/density.hpp"
#include "meld/model.hpp"
#include "meld/pooling.hpp"

namespace meld {

using JointLogDensity = std::function<double(const Vector& phi, const std::vector<Vector>& psi)>;

struct SplitBlock {
  std::string id;
  int latent_dim = 0;
  SubmodelSpec::LogJoint conditional;  // log p(psi_m, y_m | phi)
  Vector initial_latent;
};

struct SplitPlan {
  LinkSpace link;
  JointLogDensity joint;  // log p(phi, psi_1..psi_M, y), normalized in phi
  Density joint_marginal;  // p(phi)
  std::vector<SplitBlock> blocks;
  std::vector<Density> prior_factors;  // p_m(phi), normalized
  PoolingMode pooling = PoolingMode::poe;
  std::vector<double> weights;
  std::size_t dictator = 0;
  bool declared_ci = false;
  // Draw representative values for the conditional-independence tripwire and
  // the join-back check.
  std::function<Vector(Rng&)> link_probe;
  std::function<Vector(Rng&, std::size_t m)> latent_probe;
};

// p_m proportional to p^(1/M); closed form for Gaussian p, numeric otherwise.
std::vector<Density> default_prior_factorization(const Density& joint_marginal, std::size_t M,
                                                 const LinkSpace& space);

struct CiCheck {
  bool passed = true;
  double max_violation = 0.0;  // largest |log-density additivity defect|
  std::size_t checks = 0;
};

// Four-point additivity test at `n_phi` probe values of phi for every pair of
// blocks, with `pairs` random latent pairs each.
CiCheck check_conditional_independence(const SplitPlan& plan, Rng& rng, std::size_t n_phi = 5,
                                       std::size_t pairs = 8);

struct PoolGridCheck {
  double max_abs_log_gap = 0.0;
  std::size_t points = 0;
};

// Compares log pool(prior_factors) to log p(phi) on a tensor grid.
PoolGridCheck check_pool_recovers_marginal(const SplitPlan& plan, const PooledPrior& pooled);

struct SplitResult {
  std::vector<SubmodelSpec> submodels;
  std::vector<Density> marginals;  // analytic: the prior factors
  PooledPrior pooled;

  MeldedModel joined(bool poe_shortcut = false) const;
};

inline constexpr double kPoolGridTolerance = 1e-6;
inline constexpr double kCiTolerance = 1e-8;

// Throws SplitError when CI is not declared, the tripwire fires, or the pooled
// factors do not reproduce p(phi).
SplitResult split(const SplitPlan& plan, std::uint64_t check_seed = 11);

struct SplitPoint {
  Vector phi;
  std::vector<Vector> psi;
};

std::vector<SplitPoint> probe_points(const SplitPlan& plan, std::size_t n, Rng& rng);

struct JoinBackReport {
  double max_abs_gap = 0.0;
  bool degenerate = false;  // no points
  std::size_t points = 0;
};

JoinBackReport verify_join_back(const JointLogDensity& joint, const MeldedModel& model,
                                const std::vector<SplitPoint>& points);

}  // namespace meld
