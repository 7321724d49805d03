#include "meld/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "meld/errors.hpp"

namespace meld {

std::vector<Density> default_prior_factorization(const Density& joint_marginal, std::size_t M,
                                                 const LinkSpace& space) {
  if (M < 1) throw ConfigError("default_prior_factorization: M must be >= 1");
  if (joint_marginal.dim() != space.dim()) throw ConfigError("default_prior_factorization: dimension mismatch");
  const double md = static_cast<double>(M);
  std::vector<Density> out;
  bool unbounded = true;
  for (const auto& b : space.bounds()) unbounded = unbounded && b.kind == CoordinateBound::Kind::unbounded;
  if (M == 1) return {joint_marginal};
  if (const auto& g = joint_marginal.gaussian(); g && unbounded) {
    for (std::size_t m = 0; m < M; ++m) {
      out.push_back(gaussian_density(g->mean, g->cov * md, "p^(1/" + std::to_string(M) + ")"));
    }
    return out;
  }
  if (!joint_marginal.has_scale_hint()) {
    throw ConfigError("default_prior_factorization: p(phi) needs location/scale hints for normalization");
  }
  const auto base = joint_marginal.evaluator();
  auto frac = [base, md](const Vector& x) { return base(x) / md; };
  // Exponential tails spread by a factor M under the 1/M power, Gaussian ones by sqrt(M).
  const Box box = covering_box({joint_marginal}, space, 10.0 * md);
  Normalization nz;
  try {
    nz = normalize(frac, space, box);
  } catch (const NormalizationError& e) {
    throw NormalizationError("p(phi)^(1/" + std::to_string(M) + ") is not numerically integrable: " + e.what());
  }
  Density::Info info;
  info.label = joint_marginal.label() + "^(1/" + std::to_string(M) + ")";
  info.normalized = true;
  info.center = joint_marginal.center();
  info.scale = joint_marginal.scale() * std::sqrt(md);
  const double log_k = nz.log_norm;
  for (std::size_t m = 0; m < M; ++m) {
    out.emplace_back(
        space.dim(),
        [frac, log_k, space](const Vector& x) { return space.contains(x) ? frac(x) - log_k : kNegInf; }, info);
  }
  return out;
}

namespace {

std::vector<Vector> reference_latents(const SplitPlan& plan, Rng& rng) {
  std::vector<Vector> psi;
  for (std::size_t m = 0; m < plan.blocks.size(); ++m) psi.push_back(plan.latent_probe(rng, m));
  return psi;
}

double finite_or_floor(double v) { return std::max(v, -1e300); }

}  // namespace

CiCheck check_conditional_independence(const SplitPlan& plan, Rng& rng, std::size_t n_phi, std::size_t pairs) {
  CiCheck r;
  if (!plan.link_probe || !plan.latent_probe || !plan.joint || plan.blocks.size() < 2) return r;
  for (std::size_t t = 0; t < n_phi; ++t) {
    const Vector phi = plan.link_probe(rng);
    for (std::size_t a = 0; a < plan.blocks.size(); ++a) {
      for (std::size_t b = a + 1; b < plan.blocks.size(); ++b) {
        for (std::size_t rep = 0; rep < pairs; ++rep) {
          const auto base = reference_latents(plan, rng);
          auto alt = reference_latents(plan, rng);
          auto with = [&](const Vector& va, const Vector& vb) {
            auto psi = base;
            psi[a] = va;
            psi[b] = vb;
            return plan.joint(phi, psi);
          };
          const double l11 = with(base[a], base[b]);
          const double l22 = with(alt[a], alt[b]);
          const double l12 = with(base[a], alt[b]);
          const double l21 = with(alt[a], base[b]);
          ++r.checks;
          const bool all_inf = std::isinf(l11) && std::isinf(l22) && std::isinf(l12) && std::isinf(l21);
          if (all_inf) continue;
          const double lhs = l11 + l22;
          const double rhs = l12 + l21;
          double defect;
          if (std::isinf(lhs) || std::isinf(rhs)) {
            defect = (std::isinf(lhs) && std::isinf(rhs)) ? 0.0 : kInf;
          } else {
            defect = std::abs(lhs - rhs);
          }
          const double scale = 1.0 + std::abs(finite_or_floor(lhs)) + std::abs(finite_or_floor(rhs));
          r.max_violation = std::max(r.max_violation, defect);
          if (defect > kCiTolerance * scale) r.passed = false;
        }
      }
    }
  }
  return r;
}

PoolGridCheck check_pool_recovers_marginal(const SplitPlan& plan, const PooledPrior& pooled) {
  const int k = plan.link.dim();
  if (!plan.joint_marginal.has_scale_hint()) {
    throw ConfigError("split: p(phi) needs location/scale hints for the grid check");
  }
  const Box box = covering_box({plan.joint_marginal}, plan.link, 6.0);
  const int per_dim = std::max(3, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / k))));
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const auto& b = plan.link[j];
    auto& ax = axes[static_cast<std::size_t>(j)];
    if (b.is_lattice()) {
      for (double x = box.lo[j]; x <= box.hi[j] && ax.size() < 4096; x += 1.0) ax.push_back(x);
    } else {
      for (int i = 0; i < per_dim; ++i) ax.push_back(box.lo[j] + (box.hi[j] - box.lo[j]) * i / (per_dim - 1));
    }
  }
  PoolGridCheck r;
  std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
  Vector x(k);
  while (true) {
    for (int j = 0; j < k; ++j) x[j] = axes[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
    const double a = pooled.log_density(x);
    const double b = plan.joint_marginal.log_pdf(x);
    ++r.points;
    if (!(a == kNegInf && b == kNegInf)) {
      // Points where both densities are negligible carry no information.
      if (!(a < kLogDensityFloor && b < kLogDensityFloor)) {
        r.max_abs_log_gap = std::max(r.max_abs_log_gap, std::abs(a - b));
      }
    }
    int j = 0;
    while (j < k && ++idx[static_cast<std::size_t>(j)] == axes[static_cast<std::size_t>(j)].size()) {
      idx[static_cast<std::size_t>(j)] = 0;
      ++j;
    }
    if (j == k) break;
  }
  return r;
}

MeldedModel SplitResult::joined(bool poe_shortcut) const {
  return meld(submodels, marginals, pooled, poe_shortcut);
}

SplitResult split(const SplitPlan& plan, std::uint64_t check_seed) {
  const std::size_t M = plan.blocks.size();
  if (M == 0) throw ConfigError("split: plan has no blocks");
  if (plan.prior_factors.size() != M) throw ConfigError("split: need one prior factor per block");
  if (!plan.declared_ci) {
    throw SplitError("split: blocks are not declared conditionally independent given phi");
  }
  Rng rng(check_seed);
  const CiCheck ci = check_conditional_independence(plan, rng);
  if (!ci.passed) {
    std::ostringstream os;
    os << "split: blocks are not conditionally independent given phi (log-density additivity defect "
       << ci.max_violation << " over " << ci.checks << " checks); this structure cannot be split";
    throw SplitError(os.str());
  }
  PoolOptions opt;
  opt.space = plan.link;
  opt.dictator = plan.dictator;
  PooledPrior pooled = pool(plan.pooling, plan.prior_factors, plan.weights, opt);
  const PoolGridCheck grid = check_pool_recovers_marginal(plan, pooled);
  if (grid.max_abs_log_gap > kPoolGridTolerance) {
    std::ostringstream os;
    os << "split: pooled prior factors do not reproduce p(phi); max pointwise log-density discrepancy " << grid.max_abs_log_gap
       << " over " << grid.points << " grid points";
    throw SplitError(os.str());
  }
  SplitResult out;
  for (std::size_t m = 0; m < M; ++m) {
    const auto& blk = plan.blocks[m];
    const Density factor = plan.prior_factors[m];
    auto cond = blk.conditional;
    SubmodelSpec s;
    s.id = blk.id;
    s.link = plan.link;
    s.latent_dim = blk.latent_dim;
    s.initial_latent = blk.initial_latent;
    s.log_joint = [cond, factor](const Vector& phi, const Vector& psi) {
      const double lf = factor.log_pdf(phi);
      if (lf == kNegInf) return kNegInf;
      return cond(phi, psi) + lf;
    };
    if (factor.has_sampler()) {
      s.prior_sampler = [factor](Rng& r, std::size_t n) { return factor.sample(r, n); };
    }
    out.submodels.push_back(std::move(s));
    out.marginals.push_back(factor);
  }
  out.pooled = std::move(pooled);
  return out;
}

std::vector<SplitPoint> probe_points(const SplitPlan& plan, std::size_t n, Rng& rng) {
  if (!plan.link_probe || !plan.latent_probe) throw ConfigError("probe_points: plan has no probes");
  std::vector<SplitPoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    SplitPoint p;
    p.phi = plan.link_probe(rng);
    p.psi = reference_latents(plan, rng);
    pts.push_back(std::move(p));
  }
  return pts;
}

JoinBackReport verify_join_back(const JointLogDensity& joint, const MeldedModel& model,
                                const std::vector<SplitPoint>& points) {
  JoinBackReport r;
  r.points = points.size();
  if (points.empty()) {
    r.degenerate = true;
    return r;
  }
  for (const auto& p : points) {
    const double a = joint(p.phi, p.psi);
    const double b = meld_log_density(model, p.phi, p.psi);
    if (a == kNegInf && b == kNegInf) continue;
    r.max_abs_gap = std::max(r.max_abs_gap, std::abs(a - b));
  }
  return r;
}

}  // namespace meld
