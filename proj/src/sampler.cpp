#include "meld/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "meld/errors.hpp"
#include "meld/marginal.hpp"

namespace meld {

void SamplerConfig::validate() const {
  if (burn_in > n_iter) throw ConfigError("sampler: burn_in must not exceed n_iter");
  if (thin < 1) throw ConfigError("sampler: thin must be >= 1");
  for (const auto& block : proposal_scales) {
    for (double s : block) {
      if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("sampler: proposal scales must be positive");
    }
  }
}

const ColumnBlock& ChainStore::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ConfigError("chain has no block '" + name + "'");
}

bool ChainStore::has_block(const std::string& name) const {
  return std::any_of(blocks.begin(), blocks.end(), [&](const ColumnBlock& b) { return b.name == name; });
}

Matrix ChainStore::block_draws(const std::string& name) const {
  const auto& b = block(name);
  return draws.middleCols(b.offset, b.size);
}

Vector ChainStore::column(const std::string& name) const {
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] == name) return draws.col(static_cast<Eigen::Index>(j));
  }
  throw ConfigError("chain has no column '" + name + "'");
}

SamplingTarget::SamplingTarget(LinkSpace space, std::vector<SubmodelSpec> submodels, LinkTerm link_term,
                               std::string label)
    : space_(std::move(space)),
      submodels_(std::move(submodels)),
      link_term_(std::move(link_term)),
      label_(std::move(label)) {
  if (!link_term_) throw ConfigError("sampling target needs a link term");
  for (std::size_t m = 0; m < submodels_.size(); ++m) {
    validate(submodels_[m]);
    if (submodels_[m].link.dim() != space_.dim()) {
      throw ConfigError("sampling target: submodel '" + submodels_[m].id + "' link dimension mismatch");
    }
    if (submodels_[m].is_deterministic()) {
      if (deterministic_) throw ConfigError("sampling target: at most one deterministic submodel");
      deterministic_ = m;
    }
  }
}

double SamplingTarget::link_term(const Vector& phi, EvalStats* stats) const {
  if (!space_.contains(phi)) return kNegInf;
  const double v = link_term_(phi, stats);
  if (std::isnan(v)) throw EvaluationError(label_, "link term is NaN");
  return v;
}

double SamplingTarget::log_density(const Vector& phi, const std::vector<Vector>& psi_all, EvalStats* stats) const {
  if (psi_all.size() != submodels_.size()) throw ConfigError("sampling target: latent count mismatch");
  double total = link_term(phi, stats);
  if (total == kNegInf) return kNegInf;
  for (std::size_t m = 0; m < submodels_.size(); ++m) {
    const double v = eval_log_joint(submodels_[m], phi, psi_all[m]);
    if (v == kNegInf) return kNegInf;
    total += v;
  }
  return total;
}

SamplingTarget melded_target(const MeldedModel& model) {
  auto shared = std::make_shared<const MeldedModel>(model);
  SamplingTarget::LinkTerm term;
  if (model.poe_shortcut()) {
    term = [shared](const Vector&, EvalStats*) { return -shared->pooled().log_norm(); };
  } else {
    term = [shared](const Vector& phi, EvalStats* stats) {
      double t = shared->pooled().log_density(phi);
      if (t == kNegInf) return kNegInf;
      for (const auto& marg : shared->marginals()) {
        const auto nlm = neg_log_marginal(marg, phi, stats);
        if (!nlm) return kNegInf;
        t += *nlm;
      }
      return t;
    };
  }
  return SamplingTarget(model.space(), model.submodels(), std::move(term), "melded");
}

std::string to_string(StageFactorization::Kind kind) {
  switch (kind) {
    case StageFactorization::Kind::root:
      return "root";
    case StageFactorization::Kind::poe_self:
      return "poe-self";
    case StageFactorization::Kind::custom:
      return "custom";
  }
  return "?";
}

namespace {

void check_factorization(const MeldedModel& model, const StageFactorization& fact) {
  if (fact.kind == StageFactorization::Kind::poe_self && model.pooling_mode() != PoolingMode::poe) {
    throw ConfigError("poe-self stage factorization requires PoE pooling");
  }
  if (fact.kind == StageFactorization::Kind::custom && fact.factors.size() != model.size()) {
    throw ConfigError("custom stage factorization needs one factor per submodel");
  }
}

}  // namespace

double stage_link_term(const MeldedModel& model, const StageFactorization& fact, std::size_t m,
                       const Vector& phi, EvalStats* stats) {
  if (!model.space().contains(phi)) return kNegInf;
  switch (fact.kind) {
    case StageFactorization::Kind::poe_self:
      return 0.0;
    case StageFactorization::Kind::root: {
      const double lp = model.pooled().log_density(phi);
      if (lp == kNegInf) return kNegInf;
      const auto nlm = neg_log_marginal(model.marginals()[m], phi, stats);
      if (!nlm) return kNegInf;
      return lp / static_cast<double>(model.size()) + *nlm;
    }
    case StageFactorization::Kind::custom: {
      const double lp = fact.factors[m](phi);
      if (std::isnan(lp)) throw EvaluationError("pool factor #" + std::to_string(m), "log density is NaN");
      if (lp == kNegInf) return kNegInf;
      const auto nlm = neg_log_marginal(model.marginals()[m], phi, stats);
      if (!nlm) return kNegInf;
      return lp + *nlm;
    }
  }
  return kNegInf;
}

double stage_log_ratio(const MeldedModel& model, const StageFactorization& fact, std::size_t m,
                       const Vector& phi, const Vector& psi_m, EvalStats* stats) {
  check_factorization(model, fact);
  const double c = stage_link_term(model, fact, m, phi, stats);
  if (c == kNegInf) return kNegInf;
  const double v = eval_log_joint(model.submodel(m), phi, psi_m);
  if (v == kNegInf) return kNegInf;
  return v + c;
}

SamplingTarget stage_target(const MeldedModel& model, const StageFactorization& fact,
                            const std::vector<std::size_t>& order, std::size_t stage) {
  check_factorization(model, fact);
  if (stage < 1 || stage > order.size()) throw ConfigError("stage index out of range");
  std::vector<std::size_t> used(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(stage));
  std::vector<SubmodelSpec> subs;
  for (std::size_t m : used) subs.push_back(model.submodel(m));
  auto shared = std::make_shared<const MeldedModel>(model);
  auto term = [shared, fact, used](const Vector& phi, EvalStats* stats) {
    double t = 0.0;
    for (std::size_t m : used) {
      const double c = stage_link_term(*shared, fact, m, phi, stats);
      if (c == kNegInf) return kNegInf;
      t += c;
    }
    return t;
  };
  return SamplingTarget(model.space(), std::move(subs), std::move(term), "stage-" + std::to_string(stage));
}

std::vector<std::size_t> resolve_stage_order(const MeldedModel& model, const std::vector<std::string>& ids) {
  std::vector<std::size_t> order;
  if (ids.empty()) {
    order.resize(model.size());
    std::iota(order.begin(), order.end(), 0);
    return order;
  }
  if (ids.size() != model.size()) throw ConfigError("stage order must list every submodel exactly once");
  std::set<std::size_t> seen;
  for (const auto& id : ids) {
    const std::size_t m = model.index_of(id);
    if (!seen.insert(m).second) throw ConfigError("stage order lists '" + id + "' twice");
    order.push_back(m);
  }
  return order;
}

namespace {

std::string phi_column(int k, int j) { return k == 1 ? "phi" : "phi[" + std::to_string(j) + "]"; }

void add_latent_columns(ChainStore& chain, const SubmodelSpec& sub, int& offset) {
  chain.blocks.push_back({sub.id, offset, sub.latent_dim});
  const int t = sub.is_deterministic() ? sub.deterministic->theta_dim : 0;
  for (int j = 0; j < sub.latent_dim; ++j) {
    chain.columns.push_back(j < t ? sub.id + ".theta[" + std::to_string(j) + "]"
                                  : sub.id + ".psi[" + std::to_string(j - t) + "]");
  }
  offset += sub.latent_dim;
}

ChainStore empty_chain(const LinkSpace& space, const std::vector<const SubmodelSpec*>& subs) {
  ChainStore chain;
  const int k = space.dim();
  chain.link_dim = k;
  chain.blocks.push_back({"phi", 0, k});
  for (int j = 0; j < k; ++j) chain.columns.push_back(phi_column(k, j));
  int offset = k;
  for (const auto* s : subs) add_latent_columns(chain, *s, offset);
  return chain;
}

struct Block {
  enum class Kind { link, latent, det };
  Kind kind = Kind::link;
  std::size_t sub = 0;
  int dim = 0;
  Vector scale;
  Matrix shape;  // lower-triangular proposal shape, identity until learned
  double log_mult = 0.0;
  std::vector<bool> lattice;
  BlockStats stats;
  std::vector<Vector> history;  // burn-in states for shape learning

  double target_rate() const { return dim == 1 ? 0.44 : 0.234; }
};

Vector propose(const Block& b, const Vector& x, Rng& rng) {
  std::normal_distribution<double> n01;
  Vector z(b.dim);
  for (int j = 0; j < b.dim; ++j) z[j] = n01(rng);
  const Vector step = std::exp(b.log_mult) * (b.shape * z.cwiseProduct(b.scale));
  Vector out = x + step;
  for (int j = 0; j < b.dim; ++j) {
    if (b.lattice[static_cast<std::size_t>(j)]) {
      const double s = step[j];
      const double r = std::max(1.0, std::round(std::abs(s)));
      out[j] = x[j] + (s < 0.0 ? -r : r);
    }
  }
  return out;
}

void adapt_block(Block& b, double log_alpha, const SamplerConfig& cfg) {
  if (!cfg.adapt) return;
  const double acc = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
  const double gamma = 1.0 / std::pow(static_cast<double>(b.stats.burn_in_proposals) + 1.0, 0.6);
  b.log_mult = std::clamp(b.log_mult + gamma * (acc - b.target_rate()), -30.0, 30.0);
}

void learn_shape(Block& b) {
  if (b.history.size() < 20 || b.dim < 2) {
    b.history.clear();
    return;
  }
  Matrix x(static_cast<Eigen::Index>(b.history.size()), b.dim);
  for (std::size_t i = 0; i < b.history.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = b.history[i].transpose();
  b.history.clear();
  const Vector mean = x.colwise().mean().transpose();
  const Matrix c = x.rowwise() - mean.transpose();
  Matrix cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  const double tr = cov.trace();
  if (!(tr > 0.0)) return;
  cov += Matrix::Identity(b.dim, b.dim) * 1e-8 * tr;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) return;
  b.shape = llt.matrixL();
  b.scale = Vector::Ones(b.dim);
  b.log_mult = std::log(2.38 / std::sqrt(static_cast<double>(b.dim)));
}

Vector block_scale(const SamplerConfig& cfg, std::size_t index, int dim, const Vector& fallback) {
  if (index < cfg.proposal_scales.size() && !cfg.proposal_scales[index].empty()) {
    const auto& s = cfg.proposal_scales[index];
    if (s.size() == 1) return Vector::Constant(dim, s[0]);
    if (static_cast<int>(s.size()) != dim) {
      throw ConfigError("proposal_scales entry " + std::to_string(index) + " has wrong length");
    }
    return Eigen::Map<const Vector>(s.data(), dim);
  }
  return fallback;
}

// Coordinate-wise median and sd of prior draws from the first submodel with a sampler.
std::pair<Vector, Vector> prior_location(const SamplingTarget& target, std::uint64_t seed) {
  const int k = target.space().dim();
  for (const auto& s : target.submodels()) {
    if (!s.prior_sampler) continue;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    const Matrix d = forward_sample_marginal(s, 1001, rng);
    Vector med(k), sd(k);
    for (int j = 0; j < k; ++j) {
      std::vector<double> col(d.col(j).data(), d.col(j).data() + d.rows());
      std::nth_element(col.begin(), col.begin() + 500, col.end());
      med[j] = col[500];
      const double mu = d.col(j).mean();
      sd[j] = std::sqrt((d.col(j).array() - mu).square().sum() / (d.rows() - 1.0));
      if (!(sd[j] > 0.0)) sd[j] = 1.0;
    }
    return {med, sd};
  }
  // No forward sampler: start inside the support.
  Vector start = Vector::Zero(k);
  for (int j = 0; j < k; ++j) {
    const auto& b = target.space()[j];
    if (std::isfinite(b.lo) && std::isfinite(b.hi)) {
      start[j] = b.is_lattice() ? std::floor(0.5 * (b.lo + b.hi)) : 0.5 * (b.lo + b.hi);
    } else if (std::isfinite(b.lo) && b.lo >= 0.0) {
      start[j] = b.is_lattice() ? b.lo : b.lo + 1.0;
    }
  }
  return {start, Vector::Ones(k)};
}

void record_block_stats(ChainStore& chain, std::vector<Block>& blocks) {
  for (auto& b : blocks) {
    b.stats.final_scale = std::exp(b.log_mult) * b.scale.maxCoeff();
    chain.acceptance.push_back(b.stats);
  }
}

void check_link_burn_in(const Block& b) {
  if (b.stats.burn_in_proposals >= 100 &&
      static_cast<double>(b.stats.burn_in_accepts) < 1e-4 * static_cast<double>(b.stats.burn_in_proposals)) {
    std::ostringstream os;
    os << "block '" << b.stats.name << "' accepted " << b.stats.burn_in_accepts << " of "
       << b.stats.burn_in_proposals << " proposals during burn-in; change its proposal scale";
    throw SamplerError(os.str());
  }
}

}  // namespace

ChainStore mwg_sample(const SamplingTarget& target, const SamplerConfig& config) {
  config.validate();
  const auto& subs = target.submodels();
  const std::size_t M = subs.size();
  const int k = target.space().dim();
  std::vector<const SubmodelSpec*> sub_ptrs;
  for (const auto& s : subs) sub_ptrs.push_back(&s);
  ChainStore chain = empty_chain(target.space(), sub_ptrs);
  chain.seed = config.rng_seed;
  const auto det = target.deterministic_index();

  // Initial state.
  std::vector<Vector> psi(M);
  for (std::size_t m = 0; m < M; ++m) psi[m] = subs[m].start_latent();
  const auto [prior_med, prior_sd] = prior_location(target, config.rng_seed);
  Vector phi;
  if (det) {
    phi = subs[*det].phi_of(psi[*det]);
  } else if (config.initial_link) {
    phi = *config.initial_link;
    if (phi.size() != k) throw ConfigError("initial_link has wrong dimension");
  } else {
    phi = prior_med;
  }
  EvalStats stats;
  double lt = target.link_term(phi, &stats);
  std::vector<double> lj(M);
  auto total_of = [&]() {
    double t = lt;
    for (double v : lj) t += v;
    return t;
  };
  for (std::size_t m = 0; m < M; ++m) lj[m] = eval_log_joint(subs[m], phi, psi[m]);
  if (!std::isfinite(total_of())) {
    std::ostringstream os;
    os << "initial state of " << target.label() << " has zero density (phi = " << phi.transpose()
       << "); supply initial_link or initial latents inside the support";
    throw SamplerError(os.str());
  }

  // Blocks.
  std::vector<Block> blocks;
  std::size_t scale_index = 0;
  if (!det) {
    Block b;
    b.kind = Block::Kind::link;
    b.dim = k;
    Vector fallback = 0.25 * prior_sd;
    for (int j = 0; j < k; ++j) {
      b.lattice.push_back(target.space()[j].is_lattice());
      if (b.lattice.back()) fallback[j] = 1.0;
    }
    b.scale = block_scale(config, scale_index, k, fallback);
    b.stats.name = "phi";
    blocks.push_back(std::move(b));
  }
  ++scale_index;
  for (std::size_t m = 0; m < M; ++m) {
    if (subs[m].latent_dim == 0) continue;
    Block b;
    b.kind = (det && *det == m) ? Block::Kind::det : Block::Kind::latent;
    b.sub = m;
    b.dim = subs[m].latent_dim;
    b.lattice.assign(static_cast<std::size_t>(b.dim), false);
    b.scale = block_scale(config, scale_index++, b.dim, Vector::Constant(b.dim, 0.5));
    b.stats.name = subs[m].id;
    blocks.push_back(std::move(b));
  }
  for (auto& b : blocks) b.shape = Matrix::Identity(b.dim, b.dim);

  Rng rng(config.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t retained = config.retained();
  chain.draws.resize(static_cast<Eigen::Index>(retained), static_cast<Eigen::Index>(chain.columns.size()));
  const std::size_t learn_from = config.burn_in / 4;
  const std::size_t learn_at = config.burn_in / 2;
  std::vector<double> lj_new(M);
  std::size_t row = 0;

  for (std::size_t it = 0; it < config.n_iter; ++it) {
    const bool burning = it < config.burn_in;
    for (auto& b : blocks) {
      double log_alpha = kNegInf;
      bool accepted = false;
      if (b.kind == Block::Kind::latent) {
        const SubmodelSpec& s = subs[b.sub];
        const Vector prop = propose(b, psi[b.sub], rng);
        const double v = eval_log_joint(s, phi, prop);
        log_alpha = v - lj[b.sub];
        if (v != kNegInf && std::log(unif(rng)) < log_alpha) {
          psi[b.sub] = prop;
          lj[b.sub] = v;
          accepted = true;
        }
      } else {
        Vector phi_new;
        Vector latent_new;
        if (b.kind == Block::Kind::det) {
          latent_new = propose(b, psi[b.sub], rng);
          phi_new = subs[b.sub].phi_of(latent_new);
        } else {
          phi_new = propose(b, phi, rng);
        }
        const double lt_new = target.link_term(phi_new, &stats);
        double t_new = lt_new;
        if (lt_new != kNegInf) {
          for (std::size_t m = 0; m < M && t_new != kNegInf; ++m) {
            const Vector& pm = (b.kind == Block::Kind::det && m == b.sub) ? latent_new : psi[m];
            lj_new[m] = eval_log_joint(subs[m], phi_new, pm);
            t_new += lj_new[m];
          }
        }
        if (std::isnan(t_new)) t_new = kNegInf;
        log_alpha = t_new - total_of();
        if (t_new != kNegInf && std::log(unif(rng)) < log_alpha) {
          phi = phi_new;
          lt = lt_new;
          lj = lj_new;
          if (b.kind == Block::Kind::det) psi[b.sub] = latent_new;
          accepted = true;
        }
      }
      if (burning) {
        ++b.stats.burn_in_proposals;
        b.stats.burn_in_accepts += accepted;
        adapt_block(b, log_alpha, config);
        if (config.adapt_covariance && it >= learn_from && it < learn_at) {
          b.history.push_back(b.kind == Block::Kind::link ? phi : psi[b.sub]);
        }
      } else {
        ++b.stats.proposals;
        b.stats.accepts += accepted;
      }
    }
    if (config.adapt_covariance && it + 1 == learn_at) {
      for (auto& b : blocks) learn_shape(b);
    }
    if (it + 1 == config.burn_in) {
      for (const auto& b : blocks) {
        if (b.kind != Block::Kind::latent) check_link_burn_in(b);
      }
    }
    if (!burning && (it - config.burn_in + 1) % config.thin == 0 && row < retained) {
      auto r = chain.draws.row(static_cast<Eigen::Index>(row++));
      r.head(k) = phi.transpose();
      int off = k;
      for (std::size_t m = 0; m < M; ++m) {
        r.segment(off, subs[m].latent_dim) = psi[m].transpose();
        off += subs[m].latent_dim;
      }
    }
  }
  record_block_stats(chain, blocks);
  chain.eval_stats = stats;
  return chain;
}

ChainStore mwg_sample(const MeldedModel& model, const SamplerConfig& config) {
  return mwg_sample(melded_target(model), config);
}

namespace {

// Stage l >= 2: independence proposals drawn uniformly from the previous stage.
ChainStore stage_update(const ChainStore& prev, const MeldedModel& model, const StageFactorization& fact,
                        const std::vector<std::size_t>& order, std::size_t stage, const SamplerConfig& config) {
  config.validate();
  const std::size_t m = order[stage - 1];
  const SubmodelSpec& sub = model.submodel(m);
  if (sub.is_deterministic()) {
    throw ConfigError("submodel '" + sub.id + "' has a deterministic link and must be sampled at stage 1");
  }
  if (prev.rows() == 0) throw DepletionError("stage " + std::to_string(stage) + ": previous stage has no draws");
  std::vector<const SubmodelSpec*> subs;
  for (std::size_t s = 0; s < stage; ++s) subs.push_back(&model.submodel(order[s]));
  ChainStore chain = empty_chain(model.space(), subs);
  chain.stage = static_cast<int>(stage);
  chain.seed = config.rng_seed;
  const int k = model.space().dim();
  const int prev_cols = static_cast<int>(prev.columns.size());
  const int d = sub.latent_dim;

  Rng rng(config.rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, prev.rows() - 1);
  EvalStats stats;

  auto phi_at = [&](std::size_t i) -> Vector { return prev.draws.row(static_cast<Eigen::Index>(i)).head(k).transpose(); };

  Vector psi = sub.start_latent();
  std::size_t cur = pick(rng);
  double c_cur = stage_link_term(model, fact, m, phi_at(cur), &stats);
  double lj_cur = c_cur == kNegInf ? kNegInf : eval_log_joint(sub, phi_at(cur), psi);
  for (std::size_t tries = 0; !std::isfinite(c_cur + lj_cur) && tries < std::min<std::size_t>(prev.rows(), 1000);
       ++tries) {
    cur = tries;
    c_cur = stage_link_term(model, fact, m, phi_at(cur), &stats);
    lj_cur = c_cur == kNegInf ? kNegInf : eval_log_joint(sub, phi_at(cur), psi);
  }
  if (!std::isfinite(c_cur + lj_cur)) {
    throw SamplerError("stage " + std::to_string(stage) + ": no previous-stage draw gives a finite density for '" +
                       sub.id + "' at its initial latent values");
  }

  Block lat;
  lat.dim = d;
  lat.lattice.assign(static_cast<std::size_t>(d), false);
  if (d > 0) {
    lat.scale = block_scale(config, 1, d, Vector::Constant(d, 0.5));
    lat.shape = Matrix::Identity(d, d);
  }
  lat.stats.name = sub.id;
  BlockStats prop_stats;
  prop_stats.name = "stage-proposal";

  const std::size_t retained = config.retained();
  chain.draws.resize(static_cast<Eigen::Index>(retained), static_cast<Eigen::Index>(chain.columns.size()));
  chain.source_index.reserve(retained);
  chain.root_rows = prev.root_index.empty() ? prev.rows() : prev.root_rows;
  const std::size_t learn_from = config.burn_in / 4;
  const std::size_t learn_at = config.burn_in / 2;
  std::size_t row = 0;

  for (std::size_t it = 0; it < config.n_iter; ++it) {
    const bool burning = it < config.burn_in;
    // Link and carried latents from the previous stage.
    {
      const std::size_t cand = pick(rng);
      const Vector phi_c = phi_at(cand);
      const double c_new = stage_link_term(model, fact, m, phi_c, &stats);
      const double lj_new = c_new == kNegInf ? kNegInf : eval_log_joint(sub, phi_c, psi);
      const double log_alpha = (c_new + lj_new) - (c_cur + lj_cur);
      bool accepted = false;
      if (lj_new != kNegInf && std::log(unif(rng)) < log_alpha) {
        cur = cand;
        c_cur = c_new;
        lj_cur = lj_new;
        accepted = true;
      }
      if (burning) {
        ++prop_stats.burn_in_proposals;
        prop_stats.burn_in_accepts += accepted;
      } else {
        ++prop_stats.proposals;
        prop_stats.accepts += accepted;
      }
    }
    // Latents of the new submodel; marginal terms cancel.
    if (d > 0) {
      const Vector phi = phi_at(cur);
      const Vector prop = propose(lat, psi, rng);
      const double v = eval_log_joint(sub, phi, prop);
      const double log_alpha = v - lj_cur;
      bool accepted = false;
      if (v != kNegInf && std::log(unif(rng)) < log_alpha) {
        psi = prop;
        lj_cur = v;
        accepted = true;
      }
      if (burning) {
        ++lat.stats.burn_in_proposals;
        lat.stats.burn_in_accepts += accepted;
        adapt_block(lat, log_alpha, config);
        if (config.adapt_covariance && it >= learn_from && it < learn_at) lat.history.push_back(psi);
      } else {
        ++lat.stats.proposals;
        lat.stats.accepts += accepted;
      }
      if (config.adapt_covariance && it + 1 == learn_at) learn_shape(lat);
    }
    if (!burning && (it - config.burn_in + 1) % config.thin == 0 && row < retained) {
      auto r = chain.draws.row(static_cast<Eigen::Index>(row++));
      r.head(prev_cols) = prev.draws.row(static_cast<Eigen::Index>(cur));
      r.tail(d) = psi.transpose();
      chain.source_index.push_back(cur);
      chain.root_index.push_back(prev.root_index.empty() ? cur : prev.root_index[cur]);
    }
  }
  prop_stats.final_scale = 0.0;
  chain.acceptance.push_back(prop_stats);
  if (d > 0) {
    lat.stats.final_scale = std::exp(lat.log_mult) * lat.scale.maxCoeff();
    chain.acceptance.push_back(lat.stats);
  }
  chain.eval_stats = stats;
  if (retained > 0) {
    std::unordered_set<std::size_t> distinct(chain.source_index.begin(), chain.source_index.end());
    chain.unique_proposal_fraction =
        static_cast<double>(distinct.size()) / static_cast<double>(std::min(retained, prev.rows()));
    if (chain.unique_proposal_fraction < 0.01) {
      std::ostringstream os;
      os << "stage " << stage << " ('" << sub.id << "') drew its retained states from only " << distinct.size()
         << " distinct previous-stage draws (" << 100.0 * chain.unique_proposal_fraction
         << "%); enlarge the stage " << stage - 1 << " sample or reorder the stages";
      throw DepletionError(os.str());
    }
  }
  return chain;
}

}  // namespace

std::vector<ChainStore> multistage_sample(const MeldedModel& model, const StageFactorization& fact,
                                          const std::vector<SamplerConfig>& configs) {
  check_factorization(model, fact);
  if (configs.empty()) throw ConfigError("multistage_sample: need at least one sampler config");
  if (configs.size() != 1 && configs.size() != model.size()) {
    throw ConfigError("multistage_sample: need one config or one per stage");
  }
  const auto order = resolve_stage_order(model, configs.front().stage_order);
  for (std::size_t s = 1; s < order.size(); ++s) {
    if (model.submodel(order[s]).is_deterministic()) {
      throw ConfigError("submodel '" + model.submodel(order[s]).id +
                        "' has a deterministic link and must be sampled at stage 1");
    }
  }
  std::vector<ChainStore> out;
  for (std::size_t stage = 1; stage <= order.size(); ++stage) {
    const SamplerConfig& cfg = configs.size() == 1 ? configs.front() : configs[stage - 1];
    if (stage == 1) {
      out.push_back(mwg_sample(stage_target(model, fact, order, 1), cfg));
      out.back().stage = 1;
    } else {
      out.push_back(stage_update(out.back(), model, fact, order, stage, cfg));
    }
  }
  return out;
}

double weight_ess(const std::vector<double>& log_weights) {
  double mx = kNegInf;
  for (double v : log_weights) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return 0.0;
  double s = 0.0, s2 = 0.0;
  for (double v : log_weights) {
    const double w = std::exp(v - mx);
    s += w;
    s2 += w * w;
  }
  return s * s / s2;
}

ChainStore sir_stage_update(const ChainStore& prev, const MeldedModel& model, const StageFactorization& fact,
                            const std::vector<std::size_t>& order, std::size_t stage, std::size_t n_out, Rng& rng) {
  check_factorization(model, fact);
  if (stage < 2 || stage > order.size()) throw ConfigError("sir_stage_update: stage must be in [2, M]");
  const std::size_t m = order[stage - 1];
  const SubmodelSpec& sub = model.submodel(m);
  if (sub.latent_dim != 0) {
    throw ConfigError("sir_stage_update: submodel '" + sub.id + "' has latent parameters; use multistage_sample");
  }
  if (prev.rows() == 0) throw DepletionError("sir_stage_update: previous stage has no draws");
  const int k = model.space().dim();
  EvalStats stats;
  std::vector<double> lw(prev.rows());
  const Vector empty;
  for (std::size_t i = 0; i < prev.rows(); ++i) {
    lw[i] = stage_log_ratio(model, fact, m, prev.draws.row(static_cast<Eigen::Index>(i)).head(k).transpose(), empty,
                            &stats);
  }
  const double ess = weight_ess(lw);
  if (!(ess > 0.0)) throw DepletionError("sir_stage_update: every importance weight is zero");
  double mx = *std::max_element(lw.begin(), lw.end());
  std::vector<double> w(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::exp(lw[i] - mx);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());

  std::vector<const SubmodelSpec*> subs;
  for (std::size_t s = 0; s < stage; ++s) subs.push_back(&model.submodel(order[s]));
  ChainStore chain = empty_chain(model.space(), subs);
  chain.stage = static_cast<int>(stage);
  chain.root_rows = prev.root_index.empty() ? prev.rows() : prev.root_rows;
  chain.draws.resize(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(chain.columns.size()));
  for (std::size_t r = 0; r < n_out; ++r) {
    const std::size_t i = pick(rng);
    chain.draws.row(static_cast<Eigen::Index>(r)) = prev.draws.row(static_cast<Eigen::Index>(i));
    chain.source_index.push_back(i);
    chain.root_index.push_back(prev.root_index.empty() ? i : prev.root_index[i]);
  }
  std::unordered_set<std::size_t> distinct(chain.source_index.begin(), chain.source_index.end());
  chain.unique_proposal_fraction =
      n_out == 0 ? 1.0 : static_cast<double>(distinct.size()) / static_cast<double>(std::min(n_out, prev.rows()));
  chain.weight_ess = ess;
  chain.eval_stats = stats;
  if (ess < 50.0) {
    std::ostringstream os;
    os << "importance weights at stage " << stage << " have effective sample size " << ess
       << " (< 50); the resampled set is depleted";
    chain.warnings.push_back(os.str());
  }
  return chain;
}

}  // namespace meld
