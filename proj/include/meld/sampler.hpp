#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "meld/model.hpp"
#include "meld/types.hpp"

namespace meld {

struct SamplerConfig {
  std::size_t n_iter = 10000;
  std::size_t burn_in = 1000;
  std::size_t thin = 1;
  // Block 0 is the link block, then one entry per latent block in target
  // order. Each entry is one isotropic scale or one scale per coordinate;
  // missing entries fall back to defaults.
  std::vector<std::vector<double>> proposal_scales;
  std::vector<std::string> stage_order;  // submodel ids; registration order when empty
  std::uint64_t rng_seed = 1;
  bool adapt = true;              // Robbins-Monro scale tuning during burn-in
  bool adapt_covariance = false;  // also learn each block's proposal shape during burn-in
  std::optional<Vector> initial_link;

  void validate() const;
  std::size_t retained() const { return n_iter > burn_in ? (n_iter - burn_in) / thin : 0; }
};

struct BlockStats {
  std::string name;
  std::uint64_t proposals = 0;
  std::uint64_t accepts = 0;
  std::uint64_t burn_in_proposals = 0;
  std::uint64_t burn_in_accepts = 0;
  double final_scale = 1.0;

  double rate() const { return proposals == 0 ? 0.0 : static_cast<double>(accepts) / proposals; }
};

struct ColumnBlock {
  std::string name;  // "phi" or a submodel id
  int offset = 0;
  int size = 0;
};

class ChainStore {
 public:
  int stage = 1;
  std::vector<std::string> columns;
  std::vector<ColumnBlock> blocks;
  Matrix draws;                            // one row per retained draw
  std::vector<std::size_t> source_index;   // previous-stage row behind each draw (stage >= 2)
  std::vector<std::size_t> root_index;     // stage-one row behind each draw (stage >= 2)
  std::size_t root_rows = 0;               // rows of the stage-one chain
  std::vector<BlockStats> acceptance;
  double unique_proposal_fraction = 1.0;
  std::uint64_t seed = 0;
  EvalStats eval_stats;
  std::vector<std::string> warnings;
  std::optional<double> weight_ess;  // importance-resampling stages only
  int link_dim = 0;

  std::size_t rows() const { return static_cast<std::size_t>(draws.rows()); }
  const ColumnBlock& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
  Matrix block_draws(const std::string& name) const;
  Matrix phi() const { return draws.leftCols(link_dim); }
  Vector column(const std::string& name) const;
};

// Log target of the form link_term(phi) + sum_m log p_m(phi, psi_m, y_m).
class SamplingTarget {
 public:
  using LinkTerm = std::function<double(const Vector& phi, EvalStats* stats)>;

  SamplingTarget(LinkSpace space, std::vector<SubmodelSpec> submodels, LinkTerm link_term,
                 std::string label = "target");

  const LinkSpace& space() const { return space_; }
  const std::vector<SubmodelSpec>& submodels() const { return submodels_; }
  const std::string& label() const { return label_; }
  std::optional<std::size_t> deterministic_index() const { return deterministic_; }

  // -inf outside the link space.
  double link_term(const Vector& phi, EvalStats* stats) const;
  double log_density(const Vector& phi, const std::vector<Vector>& psi_all, EvalStats* stats = nullptr) const;

 private:
  LinkSpace space_;
  std::vector<SubmodelSpec> submodels_;
  LinkTerm link_term_;
  std::string label_;
  std::optional<std::size_t> deterministic_;
};

// Full melded posterior; the link term is log p_pool - sum log p_hat_m, or the
// constant -log K under the PoE shortcut.
SamplingTarget melded_target(const MeldedModel& model);

// Factorization p_pool = prod_m p_pool,m used by the multi-stage sampler.
struct StageFactorization {
  enum class Kind { root, poe_self, custom };
  Kind kind = Kind::root;
  std::vector<Density::LogPdf> factors;  // custom: log p_pool,m in model order

  static StageFactorization root() { return {}; }
  static StageFactorization poe_self() { return {Kind::poe_self, {}}; }
  static StageFactorization custom(std::vector<Density::LogPdf> f) { return {Kind::custom, std::move(f)}; }
};

std::string to_string(StageFactorization::Kind kind);

// log p_pool,m(phi) - log p_hat_m(phi); zero for poe_self. -inf outside the
// link space or on a marginal-floor hit.
double stage_link_term(const MeldedModel& model, const StageFactorization& fact, std::size_t m,
                       const Vector& phi, EvalStats* stats = nullptr);

// log p_m(phi*, psi_m, y_m) + stage_link_term(m, phi*).
double stage_log_ratio(const MeldedModel& model, const StageFactorization& fact, std::size_t m,
                       const Vector& phi, const Vector& psi_m, EvalStats* stats = nullptr);

// Target of stage `stage` (1-based) under `order` (model indices).
SamplingTarget stage_target(const MeldedModel& model, const StageFactorization& fact,
                            const std::vector<std::size_t>& order, std::size_t stage);

std::vector<std::size_t> resolve_stage_order(const MeldedModel& model, const std::vector<std::string>& ids);

ChainStore mwg_sample(const SamplingTarget& target, const SamplerConfig& config);
ChainStore mwg_sample(const MeldedModel& model, const SamplerConfig& config);

// One ChainStore per stage; the last targets the full melded posterior. A
// single config is reused for every stage. Stage order comes from the first
// config.
std::vector<ChainStore> multistage_sample(const MeldedModel& model, const StageFactorization& fact,
                                          const std::vector<SamplerConfig>& configs);

// Resamples `prev` (a stage-(l-1) chain under `order`) with weights proportional
// to exp(stage_log_ratio) for submodel order[stage-1], which must have no latents.
ChainStore sir_stage_update(const ChainStore& prev, const MeldedModel& model, const StageFactorization& fact,
                            const std::vector<std::size_t>& order, std::size_t stage, std::size_t n_out, Rng& rng);

// (sum w)^2 / sum w^2 from log weights.
double weight_ess(const std::vector<double>& log_weights);

}  // namespace meld
