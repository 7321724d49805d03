#include "meld/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "meld/errors.hpp"

namespace meld {

Vector SubmodelSpec::start_latent() const {
  if (initial_latent.size() == latent_dim) return initial_latent;
  return Vector::Zero(latent_dim);
}

Vector SubmodelSpec::phi_of(const Vector& latent) const {
  if (!deterministic) throw ConfigError("submodel '" + id + "' has a stochastic link");
  const Vector phi = deterministic->phi_of_theta(latent.head(deterministic->theta_dim));
  if (phi.size() != link.dim()) throw ConfigError("submodel '" + id + "': phi(theta) has wrong dimension");
  return phi;
}

void validate(const SubmodelSpec& sub) {
  if (sub.id.empty()) throw ConfigError("submodel needs an id");
  if (sub.link.dim() < 1) throw ConfigError("submodel '" + sub.id + "' has no link space");
  if (sub.latent_dim < 0) throw ConfigError("submodel '" + sub.id + "': latent_dim < 0");
  if (!sub.log_joint) throw ConfigError("submodel '" + sub.id + "' has no log_joint");
  if (sub.initial_latent.size() != 0 && sub.initial_latent.size() != sub.latent_dim) {
    throw ConfigError("submodel '" + sub.id + "': initial_latent has wrong length");
  }
  if (sub.deterministic) {
    const auto& d = *sub.deterministic;
    if (d.theta_dim < 1 || d.theta_dim > sub.latent_dim) {
      throw ConfigError("submodel '" + sub.id + "': theta_dim must lie in [1, latent_dim]");
    }
    if (!d.phi_of_theta) throw ConfigError("submodel '" + sub.id + "': missing phi_of_theta");
  }
}

double eval_log_joint(const SubmodelSpec& sub, const Vector& phi, const Vector& psi) {
  double v;
  try {
    v = sub.log_joint(phi, psi);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw EvaluationError("submodel '" + sub.id + "'", e.what());
  }
  if (std::isnan(v)) throw EvaluationError("submodel '" + sub.id + "'", "log_joint returned NaN");
  return v;
}

std::optional<double> neg_log_marginal(const Density& marginal, const Vector& phi, EvalStats* stats) {
  const double v = marginal.log_pdf(phi);
  if (std::isnan(v)) throw EvaluationError("marginal '" + marginal.label() + "'", "log density is NaN");
  if (stats) ++stats->evaluations;
  if (v < kLogDensityFloor) {
    if (stats) ++stats->floor_hits;
    return std::nullopt;
  }
  return -v;
}

ReplacedModel::ReplacedModel(SubmodelSpec base, Density base_marginal, Density pooled)
    : base_(std::move(base)), base_marginal_(std::move(base_marginal)), pooled_(std::move(pooled)) {
  validate(base_);
  if (base_marginal_.dim() != base_.link_dim() || pooled_.dim() != base_.link_dim()) {
    throw ConfigError("marginal_replace: density dimension does not match the link space of '" + base_.id + "'");
  }
}

double ReplacedModel::log_density(const Vector& phi, const Vector& psi, EvalStats* stats) const {
  if (base_.is_deterministic()) {
    const int t = base_.deterministic->theta_dim;
    return deterministic_replaced_log_density(base_, base_marginal_, pooled_, psi.head(t),
                                              psi.tail(psi.size() - t), stats);
  }
  if (!base_.link.contains(phi)) return kNegInf;
  const double lp = pooled_.log_pdf(phi);
  if (lp == kNegInf) return kNegInf;
  const auto nlm = neg_log_marginal(base_marginal_, phi, stats);
  if (!nlm) return kNegInf;
  return eval_log_joint(base_, phi, psi) + *nlm + lp;
}

ReplacedModel marginal_replace(SubmodelSpec base, Density base_marginal, Density pooled) {
  return ReplacedModel(std::move(base), std::move(base_marginal), std::move(pooled));
}

double deterministic_replaced_log_density(const SubmodelSpec& base, const Density& base_marginal,
                                          const Density& pooled, const Vector& theta, const Vector& psi,
                                          EvalStats* stats) {
  if (!base.is_deterministic()) throw ConfigError("submodel '" + base.id + "' has a stochastic link");
  Vector latent(theta.size() + psi.size());
  latent << theta, psi;
  if (latent.size() != base.latent_dim) throw ConfigError("submodel '" + base.id + "': latent length mismatch");
  const Vector phi = base.phi_of(latent);
  if (!base.link.contains(phi)) return kNegInf;
  const double lp = pooled.log_pdf(phi);
  if (lp == kNegInf) return kNegInf;
  const auto nlm = neg_log_marginal(base_marginal, phi, stats);
  if (!nlm) return kNegInf;
  return eval_log_joint(base, phi, latent) + *nlm + lp;
}

std::vector<int> MeldedModel::latent_dims() const {
  std::vector<int> d;
  for (const auto& s : submodels_) d.push_back(s.latent_dim);
  return d;
}

std::size_t MeldedModel::index_of(const std::string& id) const {
  for (std::size_t m = 0; m < submodels_.size(); ++m) {
    if (submodels_[m].id == id) return m;
  }
  throw ConfigError("no submodel with id '" + id + "'");
}

MeldedModel MeldedModel::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != size()) throw ConfigError("permutation has wrong length");
  std::vector<bool> seen(size(), false);
  std::vector<SubmodelSpec> subs;
  std::vector<Density> margs;
  for (std::size_t i : order) {
    if (i >= size() || seen[i]) throw ConfigError("stage order is not a permutation");
    seen[i] = true;
    subs.push_back(submodels_[i]);
    margs.push_back(marginals_[i]);
  }
  MeldedModel out = *this;
  out.submodels_ = std::move(subs);
  out.marginals_ = std::move(margs);
  if (deterministic_) {
    out.deterministic_ = static_cast<std::size_t>(
        std::find(order.begin(), order.end(), *deterministic_) - order.begin());
  }
  return out;
}

MeldedModel meld(std::vector<SubmodelSpec> submodels, std::vector<Density> marginals, PooledPrior pooled,
                 bool poe_shortcut) {
  const std::size_t M = submodels.size();
  if (M == 0) throw ConfigError("meld: need at least one submodel");
  for (const auto& s : submodels) validate(s);
  const LinkSpace& space = submodels.front().link;
  for (const auto& s : submodels) {
    if (s.link != space) throw ConfigError("meld: submodel '" + s.id + "' has a different link space");
  }
  if (pooled.dim() != space.dim()) throw ConfigError("meld: pooled prior dimension mismatch");
  if (poe_shortcut) {
    if (pooled.mode() != PoolingMode::poe) throw ConfigError("meld: poe_shortcut requires PoE pooling");
    if (pooled.components().size() != M) {
      throw ConfigError("meld: poe_shortcut requires one pooled component per submodel");
    }
    if (marginals.empty()) marginals = pooled.components();
  }
  if (marginals.size() != M) throw ConfigError("meld: need one marginal per submodel");
  for (const auto& d : marginals) {
    if (d.dim() != space.dim()) throw ConfigError("meld: marginal '" + d.label() + "' dimension mismatch");
  }
  MeldedModel out;
  for (std::size_t m = 0; m < M; ++m) {
    if (submodels[m].is_deterministic()) {
      if (out.deterministic_) throw ConfigError("meld: at most one submodel may have a deterministic link");
      out.deterministic_ = m;
    }
  }
  out.space_ = space;
  out.submodels_ = std::move(submodels);
  out.marginals_ = std::move(marginals);
  out.pooled_ = std::move(pooled);
  out.poe_shortcut_ = poe_shortcut;
  return out;
}

double meld_log_density(const MeldedModel& model, const Vector& phi, std::span<const Vector> psi_all,
                        EvalStats* stats) {
  const std::size_t M = model.size();
  if (psi_all.size() != M) throw ConfigError("meld_log_density: need one latent vector per submodel");
  for (std::size_t m = 0; m < M; ++m) {
    if (psi_all[m].size() != model.submodel(m).latent_dim) {
      throw ConfigError("meld_log_density: latent length mismatch for '" + model.submodel(m).id + "'");
    }
  }
  if (phi.size() != model.space().dim()) throw ConfigError("meld_log_density: phi dimension mismatch");
  if (auto d = model.deterministic_index()) {
    const Vector implied = model.submodel(*d).phi_of(psi_all[*d]);
    if ((implied - phi).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + phi.cwiseAbs().maxCoeff())) {
      throw ConfigError("meld_log_density: phi differs from phi(theta) of the deterministic submodel");
    }
  }
  if (!model.space().contains(phi)) return kNegInf;

  double total = 0.0;
  if (model.poe_shortcut()) {
    for (std::size_t m = 0; m < M; ++m) {
      const double v = eval_log_joint(model.submodel(m), phi, psi_all[m]);
      if (v == kNegInf) return kNegInf;
      total += v;
    }
    return total - model.pooled().log_norm();
  }
  const double lp = model.pooled().log_density(phi);
  if (lp == kNegInf) return kNegInf;
  total = lp;
  for (std::size_t m = 0; m < M; ++m) {
    const auto nlm = neg_log_marginal(model.marginals()[m], phi, stats);
    if (!nlm) return kNegInf;
    const double v = eval_log_joint(model.submodel(m), phi, psi_all[m]);
    if (v == kNegInf) return kNegInf;
    total += v + *nlm;
  }
  return total;
}

}  // namespace meld
