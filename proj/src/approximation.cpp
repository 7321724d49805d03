#include "meld/approximation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "meld/errors.hpp"

namespace meld {

std::string to_string(ApproxVariant v) { return v == ApproxVariant::poe ? "poe" : "dictatorial"; }

ApproxVariant parse_approx_variant(const std::string& name) {
  if (name == "poe") return ApproxVariant::poe;
  if (name == "dictatorial") return ApproxVariant::dictatorial;
  throw ConfigError("unknown approximation variant '" + name + "' (expected poe|dictatorial)");
}

namespace {

Matrix pd_inverse(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw ConfigError(std::string(what) + " is not positive definite");
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace

AdjustedNormal prior_adjust(const Vector& mu, const Matrix& sigma, const Vector& mu0, const Matrix& sigma0) {
  const auto k = mu.size();
  if (sigma.rows() != k || sigma.cols() != k || mu0.size() != k || sigma0.rows() != k || sigma0.cols() != k) {
    throw ConfigError("prior_adjust: dimension mismatch");
  }
  const Matrix p = pd_inverse(sigma, "posterior covariance");
  const Matrix p0 = pd_inverse(sigma0, "prior covariance");
  const Matrix diff = p - p0;
  Eigen::LLT<Matrix> llt(diff);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const double tr = diff.cwiseAbs().trace();
    ok = Matrix(llt.matrixL()).diagonal().minCoeff() > 1e-12 * std::sqrt(std::max(tr, 1e-300));
  }
  if (!ok) {
    throw ConfigError(
        "prior_adjust: posterior precision minus prior precision is not positive definite; the stage-1 "
        "posterior is no more precise than its prior, so the adjusted normal approximation is invalid here");
  }
  AdjustedNormal out;
  out.cov = llt.solve(Matrix::Identity(k, k));
  out.mean = out.cov * (p * mu - p0 * mu0);
  return out;
}

namespace {

struct ApproxTerm {
  Vector mean;
  Matrix chol;  // lower Cholesky of the covariance
  double log_const = 0.0;

  ApproxTerm(Vector m, const Matrix& cov) : mean(std::move(m)) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("normal approximation covariance is not PD");
    chol = llt.matrixL();
    log_const = -0.5 * (static_cast<double>(mean.size()) * std::log(2.0 * M_PI)) -
                chol.diagonal().array().log().sum();
  }
  double operator()(const Vector& x) const {
    const Vector z = chol.triangularView<Eigen::Lower>().solve(x - mean);
    return log_const - 0.5 * z.squaredNorm();
  }
};

std::shared_ptr<const ApproxTerm> make_term(const NormalApproxSpec& spec) {
  if (spec.variant == ApproxVariant::poe) {
    return std::make_shared<ApproxTerm>(spec.posterior.mean, spec.posterior.cov);
  }
  if (!spec.prior) throw ConfigError("dictatorial approximation needs a prior summary");
  const auto adj = prior_adjust(spec.posterior.mean, spec.posterior.cov, spec.prior->mean, spec.prior->cov);
  return std::make_shared<ApproxTerm>(adj.mean, adj.cov);
}

}  // namespace

double approx_target_log_density(const NormalApproxSpec& spec, const SubmodelSpec& submodel2, const Vector& phi,
                                 const Vector& psi2) {
  if (!submodel2.link.contains(phi)) return kNegInf;
  const auto term = make_term(spec);
  // The Gaussian factor is symmetric in its mean and argument.
  const double t = (*term)(phi);
  const double v = eval_log_joint(submodel2, phi, psi2);
  return v == kNegInf ? kNegInf : t + v;
}

SamplingTarget approx_target(const NormalApproxSpec& spec, const SubmodelSpec& submodel2) {
  auto term = make_term(spec);
  if (term->mean.size() != submodel2.link_dim()) throw ConfigError("approx_target: dimension mismatch");
  return SamplingTarget(
      submodel2.link, {submodel2}, [term](const Vector& phi, EvalStats*) { return (*term)(phi); },
      "normal-approx-" + to_string(spec.variant));
}

SamplingTarget submodel_posterior_target(const SubmodelSpec& sub) {
  return SamplingTarget(sub.link, {sub}, [](const Vector&, EvalStats*) { return 0.0; }, sub.id + "-posterior");
}

double ks_distance_normal(const Vector& draws, double mean, double sd) {
  if (draws.size() == 0) return 0.0;
  std::vector<double> s(draws.data(), draws.data() + draws.size());
  std::sort(s.begin(), s.end());
  boost::math::normal_distribution<double> nd(mean, sd);
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = boost::math::cdf(nd, s[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  return d;
}

TwoStageApproxResult normal_two_stage(const SubmodelSpec& submodel1, const SubmodelSpec& submodel2,
                                      ApproxVariant variant, const SamplerConfig& stage1,
                                      const SamplerConfig& stage2, std::size_t n_prior_draws) {
  if (submodel1.link != submodel2.link) throw ConfigError("normal_two_stage: link spaces differ");
  TwoStageApproxResult r;
  r.stage1 = mwg_sample(submodel_posterior_target(submodel1), stage1);
  const Matrix phi = r.stage1.phi();
  r.spec.variant = variant;
  r.spec.posterior = moment_summary(phi);
  if (variant == ApproxVariant::dictatorial) {
    Rng rng(stage1.rng_seed + 1);
    r.spec.prior = moment_summary(forward_sample_marginal(submodel1, n_prior_draws, rng));
  }
  for (Eigen::Index j = 0; j < phi.cols(); ++j) {
    const double ks = ks_distance_normal(phi.col(j), r.spec.posterior.mean[j], std::sqrt(r.spec.posterior.cov(j, j)));
    r.ks_distance.push_back(ks);
    if (ks > kKsWarnThreshold) {
      std::ostringstream os;
      os << "stage-1 posterior of phi[" << j << "] departs from its normal summary (KS distance " << ks
         << "); it may be skewed or multimodal";
      r.warnings.push_back(os.str());
    }
  }
  r.stage2 = mwg_sample(approx_target(r.spec, submodel2), stage2);
  r.stage2.stage = 2;
  return r;
}

}  // namespace meld
