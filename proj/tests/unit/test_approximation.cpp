#include <doctest.h>

#include <cmath>
#include <random>

#include "meld/approximation.hpp"
#include "meld/diagnostics.hpp"
#include "meld/errors.hpp"
#include "meld/fixtures.hpp"
#include "oracle.hpp"

using namespace meld;
namespace fx = meld::fixtures;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }
Matrix m1(double x) { return Matrix::Constant(1, 1, x); }

SamplerConfig cfg(std::size_t n_iter, std::size_t burn_in, std::uint64_t seed) {
  SamplerConfig c;
  c.n_iter = n_iter;
  c.burn_in = burn_in;
  c.rng_seed = seed;
  return c;
}

MomentSummary summary(double mean, double var) {
  MomentSummary s;
  s.mean = v1(mean);
  s.cov = m1(var);
  s.n = 1000;
  return s;
}

double log_mvn2(const Vector& x, const Vector& m, const Matrix& s) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  const Vector d = x - m;
  const double q = (s(1, 1) * d[0] * d[0] - 2.0 * s(0, 1) * d[0] * d[1] + s(0, 0) * d[1] * d[1]) / det;
  return -0.5 * q - std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
}

}  // namespace

TEST_SUITE("prior adjust") {
  TEST_CASE("scalar example") {
    const auto a = prior_adjust(v1(1.0), m1(0.5), v1(0.0), m1(2.0));
    CHECK(std::abs(a.cov(0, 0) - 1.0 / 1.5) < 1e-10);
    CHECK(std::abs(a.mean[0] - 2.0 / 1.5) < 1e-10);
    // Quadrature of the density ratio.
    const auto m = oracle::moments(
        [](double x) { return std::exp(oracle::log_normal_pdf(x, 1.0, 0.5) - oracle::log_normal_pdf(x, 0.0, 2.0)); },
        -20, 20, 40000);
    CHECK(m.mean == doctest::Approx(a.mean[0]).epsilon(1e-9));
    CHECK(m.var == doctest::Approx(a.cov(0, 0)).epsilon(1e-9));
  }

  TEST_CASE("flat prior limit") {
    const auto a = prior_adjust(v1(0.7), m1(0.3), v1(0.7), m1(0.3e6));
    CHECK(a.cov(0, 0) == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(a.mean[0] == doctest::Approx(0.7).epsilon(1e-5));
  }

  TEST_CASE("posterior no more precise than prior") {
    CHECK_THROWS_AS(prior_adjust(v1(0.2), m1(1.5), v1(0.0), m1(1.5)), ConfigError);
    CHECK_THROWS_AS(prior_adjust(v1(0.2), m1(3.0), v1(0.0), m1(1.5)), ConfigError);
    Matrix s = Matrix::Identity(2, 2), s0 = Matrix::Identity(2, 2);
    s0(1, 1) = 0.5;
    try {
      prior_adjust(Vector::Zero(2), s, Vector::Zero(2), s0);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("invalid") != std::string::npos);
    }
  }

  TEST_CASE("Gaussian ratio identity on a grid") {
    Matrix s(2, 2), s0(2, 2);
    s << 0.5, 0.1, 0.1, 0.3;
    s0 << 3.0, -0.4, -0.4, 2.0;
    const Vector mu{{0.4, -0.2}}, mu0{{1.0, 0.5}};
    const auto a = prior_adjust(mu, s, mu0, s0);
    double lo = kInf, hi = -kInf;
    for (double x = -3.0; x <= 3.0; x += 0.25) {
      for (double y = -3.0; y <= 3.0; y += 0.25) {
        const Vector p{{x, y}};
        const double d = log_mvn2(p, mu, s) - log_mvn2(p, mu0, s0) - log_mvn2(p, a.mean, a.cov);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
    }
    CHECK(hi - lo < 1e-8);
  }
}

TEST_SUITE("normal approximation") {
  TEST_CASE("target density arithmetic") {
    const auto pair = fx::gaussian_pair();
    NormalApproxSpec poe{summary(0.5, 0.5), std::nullopt, ApproxVariant::poe};
    const double lp2 = oracle::log_normal_pdf(0.3, 0.0, 4.0) + oracle::log_normal_pdf(-1.0, 0.3, 1.0);
    CHECK(approx_target_log_density(poe, pair.submodels[1], v1(0.3), Vector()) ==
          doctest::Approx(oracle::log_normal_pdf(0.5, 0.3, 0.5) + lp2).epsilon(1e-12));
    NormalApproxSpec dict{summary(1.0, 0.5), summary(0.0, 2.0), ApproxVariant::dictatorial};
    CHECK(approx_target_log_density(dict, pair.submodels[1], v1(0.3), Vector()) ==
          doctest::Approx(oracle::log_normal_pdf(0.3, 2.0 / 1.5, 1.0 / 1.5) + lp2).epsilon(1e-12));
    NormalApproxSpec missing{summary(1.0, 0.5), std::nullopt, ApproxVariant::dictatorial};
    CHECK_THROWS_AS(approx_target_log_density(missing, pair.submodels[1], v1(0.3), Vector()), ConfigError);
  }

  TEST_CASE("PoE variant on the Gaussian pair is exact melding") {
    const auto pair = fx::gaussian_pair();
    const auto r = normal_two_stage(pair.submodels[0], pair.submodels[1], ApproxVariant::poe, cfg(102000, 2000, 31),
                                    cfg(102000, 2000, 32));
    CHECK(r.warnings.empty());
    // Stage-1 summary error moves the final mean by (2 / 3.25) times its own error.
    const auto s1 = diagnostics(r.stage1).parameter("phi");
    const auto s2 = diagnostics(r.stage2).parameter("phi");
    const double se = std::hypot(s2.mcse, 2.0 / 3.25 * s1.mcse);
    CHECK(std::abs(s2.mean) < 3.0 * se);
    CHECK(std::abs(s2.sd * s2.sd - 1.0 / 3.25) < 0.05 / 3.25);
    CHECK(std::abs(r.spec.posterior.mean[0] - 0.5) < 3.0 * s1.mcse);
  }

  TEST_CASE("vanishing stage-one information leaves submodel two alone") {
    const auto pair = fx::gaussian_pair();
    NormalApproxSpec spec{summary(0.5, 0.5e6), std::nullopt, ApproxVariant::poe};
    const auto chain = mwg_sample(approx_target(spec, pair.submodels[1]), cfg(102000, 2000, 33));
    const auto s = diagnostics(chain).parameter("phi");
    // p2(phi | y2): precision 1/4 + 1, mean -1 / 1.25.
    CHECK(std::abs(s.mean + 0.8) < 3.0 * s.mcse);
    CHECK(std::abs(s.sd * s.sd - 0.8) < 0.05 * 0.8);
  }

  TEST_CASE("dictatorial variant reproduces dictatorial melding") {
    const auto pair = fx::gaussian_pair();
    const auto exact = pair.posterior(fx::gaussian_pair_pool(pair, PoolingMode::dictatorial, {}, 1));
    CHECK(exact.mean == doctest::Approx(0.0));
    CHECK(exact.var == doctest::Approx(1.0 / 2.25).epsilon(1e-12));
    const auto r = normal_two_stage(pair.submodels[0], pair.submodels[1], ApproxVariant::dictatorial,
                                    cfg(102000, 2000, 34), cfg(102000, 2000, 35));
    REQUIRE(r.spec.prior);
    const auto s1 = diagnostics(r.stage1).parameter("phi");
    const auto s2 = diagnostics(r.stage2).parameter("phi");
    // Sigma_hat = 0.5, Sigma_0 = 1: mu_c = 2 mu_hat - mu_0 moves twice as far as mu_hat,
    // and the final mean moves by 1 / 2.25 of mu_c.
    const double se = std::hypot(s2.mcse, 2.0 / 2.25 * s1.mcse);
    CHECK(std::abs(s2.mean - exact.mean) < 3.0 * se);
    CHECK(std::abs(s2.sd * s2.sd - exact.var) < 0.05 * exact.var);
  }

  TEST_CASE("skewed stage-one posterior raises a KS warning") {
    SubmodelSpec expo;
    expo.id = "expo";
    expo.link = LinkSpace({CoordinateBound::lower(0.0)});
    expo.log_joint = [](const Vector& phi, const Vector&) { return phi[0] >= 0.0 ? -phi[0] : kNegInf; };
    expo.prior_sampler = [](Rng& rng, std::size_t n) {
      std::exponential_distribution<double> e(1.0);
      Matrix m(static_cast<Eigen::Index>(n), 1);
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = e(rng);
      return m;
    };
    SubmodelSpec second = expo;
    second.id = "second";
    const auto r = normal_two_stage(expo, second, ApproxVariant::poe, cfg(42000, 2000, 36), cfg(12000, 2000, 37));
    REQUIRE(r.ks_distance.size() == 1);
    CHECK(r.ks_distance[0] > kKsWarnThreshold);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("KS") != std::string::npos);
  }

  TEST_CASE("KS distance of a normal sample") {
    Rng rng(38);
    std::normal_distribution<double> z(2.0, 3.0);
    Vector x(20000);
    for (auto& v : x) v = z(rng);
    CHECK(ks_distance_normal(x, 2.0, 3.0) < 0.015);
    CHECK(ks_distance_normal(x, 3.0, 3.0) > 0.1);
    Vector one = v1(0.0);
    CHECK(ks_distance_normal(one, 0.0, 1.0) == doctest::Approx(0.5));
  }

  TEST_CASE("variant names") {
    CHECK(parse_approx_variant("poe") == ApproxVariant::poe);
    CHECK(to_string(parse_approx_variant("dictatorial")) == "dictatorial");
    CHECK_THROWS_AS(parse_approx_variant("linear"), ConfigError);
  }
}
