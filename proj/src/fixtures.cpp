#include "meld/fixtures.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "meld/errors.hpp"

namespace meld::fixtures {

namespace {

Vector scalar(double x) {
  Vector v(1);
  v[0] = x;
  return v;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_beta_pdf(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0)) return kNegInf;
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

double draw_beta(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  return x / (x + gb(rng));
}

}  // namespace

// ---------------------------------------------------------------- gaussian pair

SubmodelSpec gaussian_submodel(const std::string& id, double prior_mean, double prior_var,
                               std::optional<double> y, double obs_var, bool latent) {
  SubmodelSpec s;
  s.id = id;
  s.link = LinkSpace::real_line(1);
  s.latent_dim = latent ? 1 : 0;
  if (latent) {
    const double half = obs_var / 2.0;
    s.log_joint = [=](const Vector& phi, const Vector& psi) {
      double v = log_normal_pdf(phi[0], prior_mean, prior_var) + log_normal_pdf(psi[0], phi[0], half);
      if (y) v += log_normal_pdf(*y, psi[0], half);
      return v;
    };
  } else {
    s.log_joint = [=](const Vector& phi, const Vector&) {
      double v = log_normal_pdf(phi[0], prior_mean, prior_var);
      if (y) v += log_normal_pdf(*y, phi[0], obs_var);
      return v;
    };
  }
  const double sd = std::sqrt(prior_var);
  s.prior_sampler = [=](Rng& rng, std::size_t n) {
    std::normal_distribution<double> z(prior_mean, sd);
    Matrix out(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i), 0) = z(rng);
    return out;
  };
  return s;
}

GaussianPair gaussian_pair(const GaussianPairOptions& o) {
  GaussianPair fx;
  fx.options = o;
  const auto y1 = o.with_data ? std::optional<double>(o.y1) : std::nullopt;
  const auto y2 = o.with_data ? std::optional<double>(o.y2) : std::nullopt;
  fx.submodels.push_back(gaussian_submodel("gauss1", o.prior_mean1, o.prior_var1, y1, o.obs_var, o.latent));
  fx.submodels.push_back(gaussian_submodel("gauss2", o.prior_mean2, o.prior_var2, y2, o.obs_var, o.latent));
  fx.priors.push_back(normal_density(o.prior_mean1, o.prior_var1, "p1"));
  fx.priors.push_back(normal_density(o.prior_mean2, o.prior_var2, "p2"));
  return fx;
}

NormalMoments GaussianPair::posterior(const PooledPrior& pooled) const {
  const auto& g = pooled.gaussian();
  if (!g) throw ConfigError("gaussian pair oracle needs a Gaussian pooled prior");
  double prec = 1.0 / g->cov(0, 0);
  double num = g->mean[0] * prec;
  if (options.with_data) {
    prec += 2.0 / options.obs_var;
    num += (options.y1 + options.y2) / options.obs_var;
  }
  return {num / prec, 1.0 / prec};
}

PooledPrior gaussian_pair_pool(const GaussianPair& fx, PoolingMode mode, std::vector<double> weights,
                               std::size_t dictator) {
  PoolOptions opt;
  opt.dictator = dictator;
  if (weights.empty() && (mode == PoolingMode::linear || mode == PoolingMode::log)) weights = {0.5, 0.5};
  return pool(mode, fx.priors, std::move(weights), opt);
}

MeldedModel gaussian_pair_model(const GaussianPair& fx, PoolingMode mode, std::vector<double> weights,
                                std::size_t dictator, bool poe_shortcut) {
  return meld(fx.submodels, fx.priors, gaussian_pair_pool(fx, mode, std::move(weights), dictator), poe_shortcut);
}

// ---------------------------------------------------------------- discrete toy

Density uniform_lattice_density(double lo, double hi) {
  const double count = hi - lo + 1.0;
  const double lp = -std::log(count);
  Density::Info info;
  info.label = "U{" + std::to_string(static_cast<long>(lo)) + ".." + std::to_string(static_cast<long>(hi)) + "}";
  info.normalized = true;
  info.center = scalar(0.5 * (lo + hi));
  info.scale = scalar(0.5 * count);
  info.sampler = [lo, hi](Rng& rng, std::size_t n) {
    std::uniform_int_distribution<long> u(static_cast<long>(lo), static_cast<long>(hi));
    Matrix out(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i), 0) = static_cast<double>(u(rng));
    return out;
  };
  auto eval = [lo, hi, lp](const Vector& x) {
    const double v = x[0];
    return (v >= lo && v <= hi && v == std::round(v)) ? lp : kNegInf;
  };
  return Density(1, std::move(eval), std::move(info));
}

DiscreteToy discrete_toy() {
  DiscreteToy fx;
  const LinkSpace space({CoordinateBound::integer(0.0, 1.0)});
  const Density prior = uniform_lattice_density(0.0, 1.0);
  for (int m = 0; m < 2; ++m) {
    SubmodelSpec s;
    s.id = "coin" + std::to_string(m + 1);
    s.link = space;
    s.log_joint = [](const Vector& phi, const Vector&) {
      if (phi[0] == 1.0) return std::log(0.5) + std::log(0.8);
      if (phi[0] == 0.0) return std::log(0.5) + std::log(0.2);
      return kNegInf;
    };
    s.prior_sampler = [prior](Rng& rng, std::size_t n) { return prior.sample(rng, n); };
    fx.submodels.push_back(std::move(s));
    fx.priors.push_back(prior);
  }
  fx.posterior_phi1 = (0.8 * 0.8) / (0.8 * 0.8 + 0.2 * 0.2);
  return fx;
}

MeldedModel discrete_toy_model(const DiscreteToy& fx) {
  PoolOptions opt;
  opt.space = fx.submodels.front().link;
  return meld(fx.submodels, fx.priors, pool(PoolingMode::poe, fx.priors, {}, opt));
}

// ---------------------------------------------------------------- flu-like

const double kFluDetection[kFluWeeks] = {0.60, 0.65, 0.70, 0.70, 0.65};
const double kFluTruthLambda[kFluWeeks] = {20.0, 25.0, 30.0, 28.0, 24.0};

namespace {

constexpr double kFluExposure = 0.3;
constexpr double kFluLogLambda1Mean = 3.2188758248682006;  // log 25
constexpr double kFluLogLambda1Sd = 1.0;
constexpr double kFluWalkSd = 0.3;
constexpr double kChiLogMean = 4.93;
constexpr double kChiLogSd = 0.17;
constexpr double kDetA = 6.0;
constexpr double kDetB = 4.0;
constexpr double kFluBoxWidth = 40.0;

double flu_phi(const Vector& theta) {
  double phi = 0.0;
  for (int t = 0; t < kFluWeeks; ++t) phi += kFluDetection[t] * std::exp(theta[t]);
  return phi;
}

double icu_log_prior(const Vector& theta) {
  double v = log_normal_pdf(theta[0], kFluLogLambda1Mean, kFluLogLambda1Sd * kFluLogLambda1Sd);
  for (int t = 1; t < kFluWeeks; ++t) v += log_normal_pdf(theta[t], theta[t - 1], kFluWalkSd * kFluWalkSd);
  return v;
}

Density flu_marginal(const Matrix& draws, const FluOptions& o, const std::string& label) {
  KdeOptions ko;
  ko.rule = o.bandwidth;
  ko.dof = o.dof;
  const Density kde = kde_fit(draws, ko).as_density(label);
  // Cover the pooling box so normalization never falls back to exact evaluation.
  const double hi = std::max(draws.col(0).maxCoeff(), kde.center()[0] + kFluBoxWidth * kde.scale()[0]);
  return tabulated_density(kde, 0.0, hi, o.table_knots);
}

}  // namespace

std::vector<int> flu_counts(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y;
  for (double lam : kFluTruthLambda) {
    std::poisson_distribution<int> p(kFluExposure * lam);
    y.push_back(p(rng));
  }
  return y;
}

FluLike flu_like(const FluOptions& o) {
  FluLike fx;
  fx.space = LinkSpace({CoordinateBound::lower(0.0)});
  const std::vector<int> y = flu_counts(o.seed);

  SubmodelSpec a;
  a.id = "icu";
  a.link = fx.space;
  a.latent_dim = kFluWeeks;
  a.deterministic = DeterministicLink{kFluWeeks, [](const Vector& theta) { return scalar(flu_phi(theta)); }};
  const bool data = o.with_data;
  a.log_joint = [y, data](const Vector&, const Vector& theta) {
    double v = icu_log_prior(theta);
    if (data) {
      for (int t = 0; t < kFluWeeks; ++t) {
        const double rate = kFluExposure * std::exp(theta[t]);
        v += y[static_cast<std::size_t>(t)] * std::log(rate) - rate - std::lgamma(y[static_cast<std::size_t>(t)] + 1.0);
      }
    }
    return v;
  };
  a.prior_sampler = [](Rng& rng, std::size_t n) {
    std::normal_distribution<double> z;
    Matrix out(static_cast<Eigen::Index>(n), 1);
    Vector theta(kFluWeeks);
    for (std::size_t i = 0; i < n; ++i) {
      theta[0] = kFluLogLambda1Mean + kFluLogLambda1Sd * z(rng);
      for (int t = 1; t < kFluWeeks; ++t) theta[t] = theta[t - 1] + kFluWalkSd * z(rng);
      out(static_cast<Eigen::Index>(i), 0) = flu_phi(theta);
    }
    return out;
  };
  a.initial_latent = Vector::Constant(kFluWeeks, kFluLogLambda1Mean);

  SubmodelSpec b;
  b.id = "severity";
  b.link = fx.space;
  b.latent_dim = 2;
  b.log_joint = [](const Vector& phi, const Vector& psi) {
    if (!(phi[0] >= 0.0)) return kNegInf;
    const double chi = std::exp(psi[0]);
    const double p = logistic(psi[1]);
    const double mean = chi * p;
    const double var = chi * p * (1.0 - p);
    const double trunc = std::log(boost::math::cdf(boost::math::normal_distribution<double>(), mean / std::sqrt(var)));
    return log_normal_pdf(psi[0], kChiLogMean, kChiLogSd * kChiLogSd) + log_beta_pdf(p, kDetA, kDetB) +
           std::log(p) + std::log1p(-p) + log_normal_pdf(phi[0], mean, var) - trunc;
  };
  b.prior_sampler = [](Rng& rng, std::size_t n) {
    std::normal_distribution<double> z;
    Matrix out(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double chi = std::exp(kChiLogMean + kChiLogSd * z(rng));
      const double p = draw_beta(rng, kDetA, kDetB);
      const double mean = chi * p;
      const double sd = std::sqrt(chi * p * (1.0 - p));
      double phi;
      do {
        phi = mean + sd * z(rng);
      } while (phi < 0.0);
      out(static_cast<Eigen::Index>(i), 0) = phi;
    }
    return out;
  };
  b.initial_latent = Vector(2);
  b.initial_latent << kChiLogMean, std::log(kDetA / kDetB);

  Rng rng(o.seed + 1);
  fx.icu_prior_draws = a.prior_sampler(rng, o.n_forward);
  fx.severity_prior_draws = b.prior_sampler(rng, o.n_forward);
  fx.icu_marginal = flu_marginal(fx.icu_prior_draws, o, "kde-icu");
  fx.severity_marginal = flu_marginal(fx.severity_prior_draws, o, "kde-severity");
  fx.icu = std::move(a);
  fx.severity = std::move(b);
  return fx;
}

PooledPrior flu_pool(const FluLike& fx, PoolingMode mode, std::vector<double> weights) {
  PoolOptions opt;
  opt.space = fx.space;
  opt.box_width = kFluBoxWidth;
  if (weights.empty() && (mode == PoolingMode::linear || mode == PoolingMode::log)) weights = {0.5, 0.5};
  return pool(mode, {fx.icu_marginal, fx.severity_marginal}, std::move(weights), opt);
}

MeldedModel flu_model(const FluLike& fx, PoolingMode mode, std::vector<double> weights, bool poe_shortcut) {
  return meld({fx.icu, fx.severity}, {fx.icu_marginal, fx.severity_marginal}, flu_pool(fx, mode, std::move(weights)),
              poe_shortcut);
}

// ---------------------------------------------------------------- ecology-like

namespace {

constexpr int T = kEcoYears;
constexpr double kFrostDays[T] = {12.0, 5.0, 20.0, 8.0, 15.0, 3.0, 25.0, 10.0};
constexpr int kReleases = 800;
constexpr double kCensusSd = 50.0;
constexpr double kChicks0 = 200.0;
constexpr double kAdults0 = 1000.0;
constexpr double kPhiPriorVar = 100.0;
constexpr double kPhiFactorVar = 200.0;
constexpr double kRecoveryPriorVar = 4.0;
constexpr double kLogRhoPriorVar = 1.0;
// Truth: (alpha_C, alpha_A, beta_C, beta_A), (alpha_lambda, beta_lambda), log rho.
constexpr double kTruthPhi[4] = {0.5, 1.5, -0.4, -0.2};
constexpr double kTruthRecovery[2] = {-2.5, 0.2};
constexpr double kTruthLogRho = -0.9162907318741551;  // log 0.4
constexpr std::uint64_t kEcoSeed = 1999;

struct Covariates {
  double frost[T];
  double time[T];
};

Covariates covariates() {
  Covariates c{};
  double m = 0.0, s = 0.0;
  for (double f : kFrostDays) m += f / T;
  for (double f : kFrostDays) s += (f - m) * (f - m) / (T - 1);
  s = std::sqrt(s);
  const double tm = (T - 1) / 2.0;
  double ts = 0.0;
  for (int t = 0; t < T; ++t) ts += (t - tm) * (t - tm) / (T - 1);
  ts = std::sqrt(ts);
  for (int t = 0; t < T; ++t) {
    c.frost[t] = (kFrostDays[t] - m) / s;
    c.time[t] = (t - tm) / ts;
  }
  return c;
}

// Recovery cell probabilities: cohort t ringed as chicks, recovered dead in year s.
void recovery_cells(const Vector& phi, const Vector& rec, const Covariates& cv, double cells[T][T + 1]) {
  double sc[T], sa[T], lam[T];
  for (int t = 0; t < T; ++t) {
    sc[t] = logistic(phi[0] + phi[2] * cv.frost[t]);
    sa[t] = logistic(phi[1] + phi[3] * cv.frost[t]);
    lam[t] = logistic(rec[0] + rec[1] * cv.time[t]);
  }
  for (int t = 0; t < T; ++t) {
    double recovered = 0.0;
    for (int s = 0; s < T; ++s) {
      double p = 0.0;
      if (s == t) {
        p = (1.0 - sc[t]) * lam[t];
      } else if (s > t) {
        double alive = sc[t];
        for (int u = t + 1; u < s; ++u) alive *= sa[u];
        p = alive * (1.0 - sa[s]) * lam[s];
      }
      cells[t][s] = p;
      recovered += p;
    }
    cells[t][T] = 1.0 - recovered;
  }
}

void census_means(const Vector& phi, double log_rho, const Covariates& cv, double adults[T]) {
  const double rho = std::exp(log_rho);
  double chicks = kChicks0;
  double a = kAdults0;
  for (int t = 0; t < T; ++t) {
    adults[t] = a;
    const double sc = logistic(phi[0] + phi[2] * cv.frost[t]);
    const double sa = logistic(phi[1] + phi[3] * cv.frost[t]);
    const double next = sc * chicks + sa * a;
    chicks = rho * next;
    a = next;
  }
}

struct EcoData {
  int recoveries[T][T + 1];
  double census[T];
};

EcoData ecology_data() {
  EcoData d{};
  const Covariates cv = covariates();
  Vector phi(4), rec(2);
  phi << kTruthPhi[0], kTruthPhi[1], kTruthPhi[2], kTruthPhi[3];
  rec << kTruthRecovery[0], kTruthRecovery[1];
  double cells[T][T + 1];
  recovery_cells(phi, rec, cv, cells);
  Rng rng(kEcoSeed);
  for (int t = 0; t < T; ++t) {
    int left = kReleases;
    double mass = 1.0;
    for (int s = 0; s < T; ++s) {
      int k = 0;
      if (cells[t][s] > 0.0 && left > 0) {
        std::binomial_distribution<int> bin(left, std::min(1.0, cells[t][s] / mass));
        k = bin(rng);
      }
      d.recoveries[t][s] = k;
      left -= k;
      mass -= cells[t][s];
    }
    d.recoveries[t][T] = left;
  }
  double adults[T];
  census_means(phi, kTruthLogRho, cv, adults);
  std::normal_distribution<double> noise(0.0, kCensusSd);
  for (int t = 0; t < T; ++t) d.census[t] = std::round(adults[t] + noise(rng));
  return d;
}

double recovery_loglik(const Vector& phi, const Vector& rec, const Covariates& cv, const EcoData& d) {
  double cells[T][T + 1];
  recovery_cells(phi, rec, cv, cells);
  double v = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s <= T; ++s) {
      const int k = d.recoveries[t][s];
      if (k == 0) continue;
      if (!(cells[t][s] > 0.0)) return kNegInf;
      v += k * std::log(cells[t][s]);
    }
  }
  return v;
}

double census_loglik(const Vector& phi, double log_rho, const Covariates& cv, const EcoData& d) {
  double adults[T];
  census_means(phi, log_rho, cv, adults);
  double v = 0.0;
  for (int t = 0; t < T; ++t) v += log_normal_pdf(d.census[t], adults[t], kCensusSd * kCensusSd);
  return v;
}

}  // namespace

EcologyLike ecology_like() {
  EcologyLike fx;
  const auto cv = std::make_shared<const Covariates>(covariates());
  const auto data = std::make_shared<const EcoData>(ecology_data());
  const LinkSpace space = LinkSpace::real_line(4);
  const Density joint_prior = gaussian_density(Vector::Zero(4), kPhiPriorVar * Matrix::Identity(4, 4), "N(0,100 I)");
  const Density factor = gaussian_density(Vector::Zero(4), kPhiFactorVar * Matrix::Identity(4, 4), "N(0,200 I)");

  auto recovery_cond = [cv, data](const Vector& phi, const Vector& psi) {
    const double pr = log_normal_pdf(psi[0], 0.0, kRecoveryPriorVar) + log_normal_pdf(psi[1], 0.0, kRecoveryPriorVar);
    return pr + recovery_loglik(phi, psi, *cv, *data);
  };
  auto census_cond = [cv, data](const Vector& phi, const Vector& psi) {
    return log_normal_pdf(psi[0], 0.0, kLogRhoPriorVar) + census_loglik(phi, psi[0], *cv, *data);
  };
  auto joint = [joint_prior, recovery_cond, census_cond](const Vector& phi, const std::vector<Vector>& psi) {
    return joint_prior.log_pdf(phi) + recovery_cond(phi, psi[0]) + census_cond(phi, psi[1]);
  };

  SplitPlan& plan = fx.plan;
  plan.link = space;
  plan.joint = joint;
  plan.joint_marginal = joint_prior;
  Vector rec0(2), rho0(1);
  rec0 << -2.0, 0.0;
  rho0 << -1.0;
  plan.blocks.push_back({"recovery", 2, recovery_cond, rec0});
  plan.blocks.push_back({"census", 1, census_cond, rho0});
  plan.prior_factors = {factor, factor};
  plan.pooling = PoolingMode::poe;
  plan.declared_ci = true;
  plan.link_probe = [](Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Vector v(4);
    for (int j = 0; j < 4; ++j) v[j] = kTruthPhi[j] + 0.5 * z(rng);
    return v;
  };
  plan.latent_probe = [](Rng& rng, std::size_t m) {
    std::normal_distribution<double> z(0.0, 0.5);
    if (m == 0) {
      Vector v(2);
      v << kTruthRecovery[0] + z(rng), kTruthRecovery[1] + z(rng);
      return v;
    }
    return scalar(kTruthLogRho + z(rng));
  };
  fx.joint = joint;
  fx.joint_priors = {joint_prior};

  SubmodelSpec mono;
  mono.id = "joint";
  mono.link = space;
  mono.latent_dim = 3;
  mono.log_joint = [joint](const Vector& phi, const Vector& latent) {
    return joint(phi, {latent.head(2), latent.tail(1)});
  };
  mono.prior_sampler = [joint_prior](Rng& rng, std::size_t n) { return joint_prior.sample(rng, n); };
  mono.initial_latent = Vector(3);
  mono.initial_latent << rec0, rho0;
  fx.monolithic = std::move(mono);
  return fx;
}

MeldedModel ecology_monolithic_model(const EcologyLike& fx) {
  const Density& prior = fx.joint_priors.front();
  return meld({fx.monolithic}, {prior}, pool(PoolingMode::dictatorial, {prior}));
}

// ---------------------------------------------------------------- motifs

namespace {

std::function<Vector(Rng&)> normal_probe(double sd) {
  return [sd](Rng& rng) {
    std::normal_distribution<double> z(0.0, sd);
    return scalar(z(rng));
  };
}

std::function<Vector(Rng&, std::size_t)> normal_latent_probe(double sd) {
  return [sd](Rng& rng, std::size_t) {
    std::normal_distribution<double> z(0.0, sd);
    return scalar(z(rng));
  };
}

}  // namespace

MotifFixture chain_motif(double aux_mean, double aux_var) {
  MotifFixture fx;
  SplitPlan& p = fx.plan;
  p.link = LinkSpace::real_line(1);
  // psi_1 ~ N(0, 1), phi | psi_1 ~ N(psi_1, 1), psi_2 | phi ~ N(phi, 1); p(phi) = N(0, 2).
  p.joint = [](const Vector& phi, const std::vector<Vector>& psi) {
    return log_normal_pdf(psi[0][0], 0.0, 1.0) + log_normal_pdf(phi[0], psi[0][0], 1.0) +
           log_normal_pdf(psi[1][0], phi[0], 1.0);
  };
  p.joint_marginal = normal_density(0.0, 2.0, "N(0,2)");
  p.blocks.push_back({"upstream", 1,
                      [](const Vector& phi, const Vector& psi) {
                        return log_normal_pdf(psi[0], 0.0, 1.0) + log_normal_pdf(phi[0], psi[0], 1.0) -
                               log_normal_pdf(phi[0], 0.0, 2.0);
                      },
                      {}});
  p.blocks.push_back({"downstream", 1,
                      [](const Vector& phi, const Vector& psi) { return log_normal_pdf(psi[0], phi[0], 1.0); }, {}});
  p.prior_factors = {normal_density(0.0, 2.0, "N(0,2)"), normal_density(aux_mean, aux_var, "aux")};
  p.pooling = PoolingMode::dictatorial;
  p.dictator = 0;
  p.declared_ci = true;
  p.link_probe = normal_probe(1.5);
  p.latent_probe = normal_latent_probe(1.5);
  return fx;
}

MotifFixture tail_to_tail_motif() {
  MotifFixture fx;
  SplitPlan& p = fx.plan;
  p.link = LinkSpace::real_line(1);
  // phi ~ N(0, 1), psi_1 | phi ~ N(phi, 1), psi_2 | phi ~ N(-phi, 0.5).
  p.joint = [](const Vector& phi, const std::vector<Vector>& psi) {
    return log_normal_pdf(phi[0], 0.0, 1.0) + log_normal_pdf(psi[0][0], phi[0], 1.0) +
           log_normal_pdf(psi[1][0], -phi[0], 0.5);
  };
  p.joint_marginal = normal_density(0.0, 1.0, "N(0,1)");
  p.blocks.push_back(
      {"left", 1, [](const Vector& phi, const Vector& psi) { return log_normal_pdf(psi[0], phi[0], 1.0); }, {}});
  p.blocks.push_back(
      {"right", 1, [](const Vector& phi, const Vector& psi) { return log_normal_pdf(psi[0], -phi[0], 0.5); }, {}});
  p.prior_factors = default_prior_factorization(p.joint_marginal, 2, p.link);
  p.pooling = PoolingMode::poe;
  p.declared_ci = true;
  p.link_probe = normal_probe(1.5);
  p.latent_probe = normal_latent_probe(1.5);
  return fx;
}

MotifFixture head_to_head_motif() {
  MotifFixture fx;
  SplitPlan& p = fx.plan;
  p.link = LinkSpace({CoordinateBound::integer(0.0, 1.0)});
  // psi_1, psi_2 ~ Bernoulli(1/2); phi = 1 with probability 0.9 when psi_1 != psi_2, else 0.1.
  auto lphi = [](double phi, double a, double b) {
    const double p1 = (a != b) ? 0.9 : 0.1;
    return std::log(phi == 1.0 ? p1 : 1.0 - p1);
  };
  p.joint = [lphi](const Vector& phi, const std::vector<Vector>& psi) {
    return 2.0 * std::log(0.5) + lphi(phi[0], psi[0][0], psi[1][0]);
  };
  p.joint_marginal = uniform_lattice_density(0.0, 1.0);
  // By symmetry p(psi_m | phi) = 1/2, so each block alone looks valid.
  auto half = [](const Vector&, const Vector& psi) {
    return (psi[0] == 0.0 || psi[0] == 1.0) ? std::log(0.5) : kNegInf;
  };
  p.blocks.push_back({"left", 1, half, {}});
  p.blocks.push_back({"right", 1, half, {}});
  p.prior_factors = {uniform_lattice_density(0.0, 1.0), uniform_lattice_density(0.0, 1.0)};
  p.pooling = PoolingMode::dictatorial;
  p.dictator = 0;
  p.declared_ci = true;
  p.link_probe = [](Rng& rng) {
    std::bernoulli_distribution b(0.5);
    return scalar(b(rng) ? 1.0 : 0.0);
  };
  p.latent_probe = [](Rng& rng, std::size_t) {
    std::bernoulli_distribution b(0.5);
    return scalar(b(rng) ? 1.0 : 0.0);
  };
  return fx;
}

// ---------------------------------------------------------------- tall data

Density beta_density(double a, double b) {
  Density::Info info;
  info.label = "Beta(" + std::to_string(a) + "," + std::to_string(b) + ")";
  info.normalized = true;
  const double mean = a / (a + b);
  info.center = scalar(mean);
  info.scale = scalar(std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0))));
  info.sampler = [a, b](Rng& rng, std::size_t n) {
    Matrix out(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) out(static_cast<Eigen::Index>(i), 0) = draw_beta(rng, a, b);
    return out;
  };
  return Density(1, [a, b](const Vector& x) { return log_beta_pdf(x[0], a, b); }, std::move(info));
}

TallBernoulli tall_bernoulli(std::size_t batches) {
  TallBernoulli fx;
  fx.data = {1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1};
  if (batches < 1 || fx.data.size() % batches != 0) throw ConfigError("tall_bernoulli: batches must divide 20");
  const double a0 = 2.0, b0 = 2.0;
  int ones = 0;
  for (int y : fx.data) ones += y;
  fx.alpha_post = a0 + ones;
  fx.beta_post = b0 + static_cast<double>(fx.data.size()) - ones;

  SplitPlan& p = fx.plan;
  p.link = LinkSpace({CoordinateBound::interval(0.0, 1.0)});
  const auto data = fx.data;
  auto loglik = [](double phi, const std::vector<int>& ys) {
    double v = 0.0;
    for (int y : ys) v += y ? std::log(phi) : std::log1p(-phi);
    return v;
  };
  p.joint_marginal = beta_density(a0, b0);
  const Density prior = p.joint_marginal;
  p.joint = [prior, data, loglik](const Vector& phi, const std::vector<Vector>&) {
    const double lp = prior.log_pdf(phi);
    return lp == kNegInf ? kNegInf : lp + loglik(phi[0], data);
  };
  const std::size_t per = data.size() / batches;
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<int> ys(data.begin() + static_cast<std::ptrdiff_t>(b * per),
                        data.begin() + static_cast<std::ptrdiff_t>((b + 1) * per));
    p.blocks.push_back({"batch" + std::to_string(b + 1), 0,
                        [ys, loglik](const Vector& phi, const Vector&) { return loglik(phi[0], ys); }, {}});
  }
  p.prior_factors = default_prior_factorization(p.joint_marginal, batches, p.link);
  p.pooling = PoolingMode::poe;
  p.declared_ci = true;
  p.link_probe = [](Rng& rng) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    return scalar(u(rng));
  };
  p.latent_probe = [](Rng&, std::size_t) { return Vector(); };
  return fx;
}

}  // namespace meld::fixtures
