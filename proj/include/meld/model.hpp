#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "meld/density.hpp"
#include "meld/link_space.hpp"
#include "meld/pooling.hpp"
#include "meld/types.hpp"

namespace meld {

// phi is a deterministic function of the first theta_dim latent coordinates.
struct DeterministicLink {
  int theta_dim = 0;
  std::function<Vector(const Vector& theta)> phi_of_theta;
};

// One submodel p_m(phi, psi_m, y_m) with its data already bound.
//
// log_joint is defined up to an additive constant and must return -inf outside
// its support. For a deterministic link, the latent vector is (theta, psi) and
// log_joint(phi, latent) is log p(theta, psi, y) with phi = phi(theta) passed
// for convenience; prior_sampler must emit phi(theta) for prior draws of theta.
struct SubmodelSpec {
  using LogJoint = std::function<double(const Vector& phi, const Vector& psi)>;
  using PriorSampler = std::function<Matrix(Rng& rng, std::size_t n)>;

  std::string id;
  LinkSpace link;
  int latent_dim = 0;
  LogJoint log_joint;
  PriorSampler prior_sampler;
  std::optional<DeterministicLink> deterministic;
  Vector initial_latent;  // starting point for samplers; zeros when empty

  int link_dim() const { return link.dim(); }
  bool is_deterministic() const { return deterministic.has_value(); }
  Vector start_latent() const;
  Vector phi_of(const Vector& latent) const;  // deterministic links only
};

// Checks internal consistency of a submodel definition; throws ConfigError.
void validate(const SubmodelSpec& sub);

// log_joint with NaN and exceptions turned into EvaluationError naming the submodel.
double eval_log_joint(const SubmodelSpec& sub, const Vector& phi, const Vector& psi);

// -log p_hat(phi) with the marginal floor applied. Returns nullopt (and counts a
// floor hit) when the estimate is below the floor or zero.
std::optional<double> neg_log_marginal(const Density& marginal, const Vector& phi, EvalStats* stats);

// Submodel with its prior marginal on phi swapped for `pooled`.
class ReplacedModel {
 public:
  ReplacedModel(SubmodelSpec base, Density base_marginal, Density pooled);

  const SubmodelSpec& base() const { return base_; }
  const Density& base_marginal() const { return base_marginal_; }
  const Density& pooled() const { return pooled_; }

  // Stochastic link: density at (phi, psi). Deterministic link: psi is the full
  // latent (theta, rest) and phi is ignored in favour of phi(theta).
  double log_density(const Vector& phi, const Vector& psi, EvalStats* stats = nullptr) const;

 private:
  SubmodelSpec base_;
  Density base_marginal_;
  Density pooled_;
};

ReplacedModel marginal_replace(SubmodelSpec base, Density base_marginal, Density pooled);

// log p(theta, psi, y) + log pooled(phi(theta)) - log base_marginal(phi(theta)).
double deterministic_replaced_log_density(const SubmodelSpec& base, const Density& base_marginal,
                                          const Density& pooled, const Vector& theta, const Vector& psi,
                                          EvalStats* stats = nullptr);

class MeldedModel {
 public:
  const std::vector<SubmodelSpec>& submodels() const { return submodels_; }
  const SubmodelSpec& submodel(std::size_t m) const { return submodels_[m]; }
  const std::vector<Density>& marginals() const { return marginals_; }
  const PooledPrior& pooled() const { return pooled_; }
  PoolingMode pooling_mode() const { return pooled_.mode(); }
  bool poe_shortcut() const { return poe_shortcut_; }
  const LinkSpace& space() const { return space_; }
  std::size_t size() const { return submodels_.size(); }
  std::vector<int> latent_dims() const;
  std::optional<std::size_t> deterministic_index() const { return deterministic_; }
  std::size_t index_of(const std::string& id) const;

  // Model with the submodels reordered; the pooled prior is unchanged.
  MeldedModel permuted(const std::vector<std::size_t>& order) const;

 private:
  friend MeldedModel meld(std::vector<SubmodelSpec>, std::vector<Density>, PooledPrior, bool);

  std::vector<SubmodelSpec> submodels_;
  std::vector<Density> marginals_;
  PooledPrior pooled_;
  bool poe_shortcut_ = false;
  LinkSpace space_;
  std::optional<std::size_t> deterministic_;
};

// With poe_shortcut the pooled prior must be the PoE of the marginals; an empty
// marginal list then defaults to the pooled components.
MeldedModel meld(std::vector<SubmodelSpec> submodels, std::vector<Density> marginals, PooledPrior pooled,
                 bool poe_shortcut = false);

// log p_pool(phi) + sum_m [log p_m(phi, psi_m, y_m) - log p_hat_m(phi)].
double meld_log_density(const MeldedModel& model, const Vector& phi, std::span<const Vector> psi_all,
                        EvalStats* stats = nullptr);

}  // namespace meld
