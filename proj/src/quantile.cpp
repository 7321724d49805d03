#include "meld/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "meld/errors.hpp"

namespace meld {

namespace {

class NormalDist final : public ScalarDistribution {
 public:
  NormalDist(double mean, double sd) : mean_(mean), sd_(sd), dist_(mean, sd) {}
  double log_pdf(double x) const override {
    const double z = (x - mean_) / sd_;
    return -0.5 * z * z - std::log(sd_) - 0.5 * std::log(2.0 * M_PI);
  }
  double cdf(double x) const override {
    if (x == kInf) return 1.0;
    if (x == kNegInf) return 0.0;
    return boost::math::cdf(dist_, x);
  }
  double quantile(double u) const override {
    if (u <= 0.0) return kNegInf;
    if (u >= 1.0) return kInf;
    return boost::math::quantile(dist_, u);
  }
  std::string label() const override {
    std::ostringstream os;
    os << "N(" << mean_ << "," << sd_ * sd_ << ")";
    return os.str();
  }

 private:
  double mean_, sd_;
  boost::math::normal_distribution<double> dist_;
};

class EmpiricalDist final : public ScalarDistribution {
 public:
  EmpiricalDist(std::vector<double> draws, std::size_t knots) {
    if (draws.size() < 2) throw ConfigError("empirical CDF needs at least 2 draws");
    if (knots < 2) throw ConfigError("empirical CDF needs at least 2 knots");
    std::sort(draws.begin(), draws.end());
    const double n = static_cast<double>(draws.size());
    x_.resize(knots);
    p_.resize(knots);
    for (std::size_t j = 0; j < knots; ++j) {
      const double p = (static_cast<double>(j) + 1.0) / (static_cast<double>(knots) + 1.0);
      const double h = (n - 1.0) * p;
      const auto lo = static_cast<std::size_t>(std::floor(h));
      const auto hi = std::min(lo + 1, draws.size() - 1);
      x_[j] = draws[lo] + (h - static_cast<double>(lo)) * (draws[hi] - draws[lo]);
      p_[j] = p;
    }
    for (std::size_t j = 1; j < knots; ++j) {
      if (!(x_[j] > x_[j - 1])) {
        std::ostringstream os;
        os << "empirical CDF is not strictly increasing near x = " << x_[j] << " (" << draws.size()
           << " draws for " << knots << " knots); increase the forward-sample size";
        throw NormalizationError(os.str());
      }
    }
    lam_lo_ = p_.front() * (x_[1] - x_[0]) / (p_[1] - p_[0]);
    const std::size_t K = knots - 1;
    lam_hi_ = (1.0 - p_[K]) * (x_[K] - x_[K - 1]) / (p_[K] - p_[K - 1]);
  }

  double cdf(double x) const override {
    if (x <= x_.front()) return p_.front() * std::exp((x - x_.front()) / lam_lo_);
    if (x >= x_.back()) return 1.0 - (1.0 - p_.back()) * std::exp(-(x - x_.back()) / lam_hi_);
    const auto j = segment(x);
    const double f = (x - x_[j]) / (x_[j + 1] - x_[j]);
    return p_[j] + f * (p_[j + 1] - p_[j]);
  }

  double log_pdf(double x) const override {
    if (x <= x_.front()) return std::log(p_.front() / lam_lo_) + (x - x_.front()) / lam_lo_;
    if (x >= x_.back()) return std::log((1.0 - p_.back()) / lam_hi_) - (x - x_.back()) / lam_hi_;
    const auto j = segment(x);
    return std::log((p_[j + 1] - p_[j]) / (x_[j + 1] - x_[j]));
  }

  double quantile(double u) const override {
    if (u <= 0.0) return kNegInf;
    if (u >= 1.0) return kInf;
    if (u <= p_.front()) return x_.front() + lam_lo_ * std::log(u / p_.front());
    if (u >= p_.back()) return x_.back() - lam_hi_ * std::log((1.0 - u) / (1.0 - p_.back()));
    const auto it = std::upper_bound(p_.begin(), p_.end(), u);
    const auto j = static_cast<std::size_t>(it - p_.begin()) - 1;
    const double f = (u - p_[j]) / (p_[j + 1] - p_[j]);
    return x_[j] + f * (x_[j + 1] - x_[j]);
  }

  std::string label() const override { return "empirical"; }

 private:
  std::size_t segment(double x) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    return std::min(static_cast<std::size_t>(it - x_.begin()) - 1, x_.size() - 2);
  }

  std::vector<double> x_, p_;
  double lam_lo_ = 1.0, lam_hi_ = 1.0;
};

}  // namespace

std::shared_ptr<const ScalarDistribution> normal_distribution(double mean, double sd) {
  if (!(sd > 0.0)) throw ConfigError("normal_distribution: sd must be positive");
  return std::make_shared<NormalDist>(mean, sd);
}

std::shared_ptr<const ScalarDistribution> empirical_distribution(std::vector<double> draws, std::size_t knots) {
  return std::make_shared<EmpiricalDist>(std::move(draws), knots);
}

QuantileTransform::QuantileTransform(std::shared_ptr<const ScalarDistribution> source,
                                     std::shared_ptr<const ScalarDistribution> target, std::vector<double> grid)
    : source_(std::move(source)), target_(std::move(target)), grid_(std::move(grid)) {
  if (!source_ || !target_) throw ConfigError("quantile transform needs both distributions");
  for (std::size_t i = 1; i < grid_.size(); ++i) {
    if (!(grid_[i] > grid_[i - 1])) throw ConfigError("quantile transform grid must be strictly increasing");
  }
  double prev_u = -1.0;
  double prev_q = -kInf;
  for (double g : grid_) {
    const double u = target_->cdf(g);
    if (u < prev_u) {
      throw NormalizationError("target CDF decreases on the grid near " + std::to_string(g) +
                               "; increase the forward-sample size");
    }
    const double q = source_->quantile(u);
    if (q < prev_q) {
      throw NormalizationError("source quantile function decreases near " + std::to_string(g) +
                               "; increase the forward-sample size");
    }
    prev_u = u;
    prev_q = q;
  }
}

double QuantileTransform::operator()(double phi) const { return source_->quantile(target_->cdf(phi)); }

TransformedLogDensity quantile_transform_meld(std::vector<SubmodelSpec> submodels,
                                              std::vector<std::shared_ptr<const ScalarDistribution>> marginals,
                                              std::shared_ptr<const ScalarDistribution> pool,
                                              std::vector<double> grid) {
  if (submodels.empty()) throw ConfigError("quantile_transform_meld: no submodels");
  if (marginals.size() != submodels.size()) {
    throw ConfigError("quantile_transform_meld: need one marginal CDF per submodel");
  }
  for (const auto& s : submodels) {
    validate(s);
    if (s.link_dim() != 1) throw ConfigError("quantile_transform_meld: scalar links only");
    if (s.is_deterministic()) throw ConfigError("quantile_transform_meld: stochastic links only");
  }
  std::vector<QuantileTransform> transforms;
  for (const auto& m : marginals) transforms.emplace_back(m, pool, grid);
  return [submodels = std::move(submodels), marginals = std::move(marginals), pool = std::move(pool),
          transforms = std::move(transforms)](double phi, const std::vector<Vector>& psi_all) {
    if (psi_all.size() != submodels.size()) throw ConfigError("quantile_transform_meld: latent count mismatch");
    double total = pool->log_pdf(phi);
    if (total == kNegInf) return kNegInf;
    Vector q(1);
    for (std::size_t m = 0; m < submodels.size(); ++m) {
      q[0] = transforms[m](phi);
      if (!std::isfinite(q[0]) || !submodels[m].link.contains(q)) return kNegInf;
      const double lj = eval_log_joint(submodels[m], q, psi_all[m]);
      if (lj == kNegInf) return kNegInf;
      total += lj - marginals[m]->log_pdf(q[0]);
    }
    return total;
  };
}

}  // namespace meld
