#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "meld/errors.hpp"
#include "meld/fixtures.hpp"
#include "meld/model.hpp"
#include "meld/pooling.hpp"
#include "meld/quantile.hpp"
#include "oracle.hpp"

using namespace meld;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

// Standard logistic density: non-Gaussian, full support.
Density logistic_density(double loc, double s) {
  Density::Info info;
  info.label = "logistic";
  info.normalized = true;
  info.center = v1(loc);
  info.scale = v1(s * std::numbers::pi / std::sqrt(3.0));
  return Density(1, [loc, s](const Vector& x) {
    const double z = (x[0] - loc) / s;
    return -z - 2.0 * std::log1p(std::exp(-z)) - std::log(s);
  }, info);
}

}  // namespace

TEST_SUITE("pool") {
  TEST_CASE("dictatorial pooling is the chosen component") {
    PoolOptions opt;
    opt.dictator = 0;
    const auto p = pool(PoolingMode::dictatorial, {normal_density(0, 1), normal_density(2, 1)}, {}, opt);
    for (double x : {-3.0, -0.5, 0.0, 1.7, 4.0}) {
      CHECK(p.log_density(v1(x)) == doctest::Approx(oracle::log_normal_pdf(x, 0, 1)).epsilon(1e-14));
    }
    CHECK(p.log_norm() == 0.0);
  }

  TEST_CASE("log pool of N(0,1) and N(1,0.25) is N(0.8,0.4)") {
    const auto p = pool(PoolingMode::log, {normal_density(0, 1), normal_density(1, 0.25)}, {0.5, 0.5});
    // Oracle: quadrature of the geometric mean.
    auto un = [](double x) { return std::sqrt(oracle::normal_pdf(x, 0, 1) * oracle::normal_pdf(x, 1, 0.25)); };
    const double z = oracle::simpson(un, -15, 15);
    CHECK(std::exp(p.log_density(v1(0.8))) == doctest::Approx(un(0.8) / z).epsilon(1e-9));
    CHECK(std::exp(p.log_density(v1(0.8))) == doctest::Approx(1.0 / std::sqrt(2 * std::numbers::pi * 0.4)).epsilon(1e-12));
    CHECK(std::exp(p.log_density(v1(0.8))) == doctest::Approx(0.6308).epsilon(1e-4));
    REQUIRE(p.gaussian());
    CHECK(p.gaussian()->mean[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(p.gaussian()->cov(0, 0) == doctest::Approx(0.4).epsilon(1e-12));
  }

  TEST_CASE("linear pool of N(0,1) and N(4,1) at zero") {
    const auto p = pool(PoolingMode::linear, {normal_density(0, 1), normal_density(4, 1)}, {0.5, 0.5});
    const double expected = 0.5 * oracle::normal_pdf(0, 0, 1) + 0.5 * oracle::normal_pdf(0, 4, 1);
    CHECK(std::exp(p.log_density(v1(0.0))) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.19947).epsilon(1e-4));
    auto d = [&](double x) { return std::exp(p.log_density(v1(x))); };
    CHECK(oracle::simpson(d, -12, 16) == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("PoE of N(0,1) with itself") {
    const auto p = pool(PoolingMode::poe, {normal_density(0, 1), normal_density(0, 1)});
    CHECK(log_pooled_density(p, v1(0.0)) == doctest::Approx(std::log(1.0 / std::sqrt(std::numbers::pi))).epsilon(1e-12));
    CHECK(log_pooled_density(p, v1(0.0)) == doctest::Approx(-0.5724).epsilon(1e-4));
    CHECK(p.log_norm() == doctest::Approx(std::log(1.0 / (2.0 * std::sqrt(std::numbers::pi)))).epsilon(1e-12));
    CHECK(std::exp(p.log_norm()) == doctest::Approx(0.28209).epsilon(1e-4));
  }

  TEST_CASE("linear pool with a degenerate weight is the first component") {
    const auto p = pool(PoolingMode::linear, {logistic_density(0.3, 1.2), normal_density(2, 1)}, {1.0, 0.0});
    for (double x : {-6.0, -1.0, 0.0, 2.5, 7.0}) {
      CHECK(p.log_density(v1(x)) == doctest::Approx(logistic_density(0.3, 1.2).log_pdf(v1(x))).epsilon(1e-12));
    }
  }

  TEST_CASE("log pool weight sweep moves the mean to 2(1 - w1)") {
    for (double w1 : {0.25, 0.5, 0.75}) {
      const auto p = pool(PoolingMode::log, {normal_density(0, 1), normal_density(2, 1)}, {w1, 1 - w1});
      const auto m = oracle::moments([&](double x) { return std::exp(p.log_density(v1(x))); }, -12, 14);
      CHECK(m.mass == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(m.mean == doctest::Approx(2 * (1 - w1)).epsilon(1e-9));
    }
  }

  TEST_CASE("numeric normalization of non-Gaussian pools") {
    const auto a = logistic_density(0.0, 1.0);
    const auto b = normal_density(1.5, 0.5);
    for (auto mode : {PoolingMode::log, PoolingMode::poe}) {
      const auto p = pool(mode, {a, b}, mode == PoolingMode::log ? std::vector<double>{0.3, 0.7} : std::vector<double>{});
      CHECK(p.norm_method() == NormMethod::quadrature);
      auto d = [&](double x) { return std::exp(p.log_density(v1(x))); };
      CHECK(oracle::simpson(d, -40, 40, 80000) == doctest::Approx(1.0).epsilon(1e-8));
    }
  }

  TEST_CASE("invalid weights and dictator index") {
    const std::vector<Density> c = {normal_density(0, 1), normal_density(1, 1)};
    CHECK_THROWS_AS(pool(PoolingMode::log, c, {-0.1, 1.1}), ConfigError);
    CHECK_THROWS_AS(pool(PoolingMode::linear, c, {0.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(pool(PoolingMode::linear, c, {1.0}), ConfigError);
    PoolOptions opt;
    opt.dictator = 2;
    CHECK_THROWS_AS(pool(PoolingMode::dictatorial, c, {}, opt), ConfigError);
    CHECK_THROWS_AS(pool(PoolingMode::poe, {}), ConfigError);
  }

  TEST_CASE("non-integrable pool is a normalization fault") {
    Density::Info info;
    info.label = "flat";
    info.center = v1(0.0);
    info.scale = v1(1.0);
    const Density flat(1, [](const Vector&) { return 0.0; }, info);
    CHECK_THROWS_AS(pool(PoolingMode::log, {flat, flat}, {0.5, 0.5}), NormalizationError);
  }

  TEST_CASE("component faults name the component") {
    Density::Info info;
    info.label = "broken";
    info.center = v1(0.0);
    info.scale = v1(1.0);
    info.normalized = true;
    const Density broken(1, [](const Vector& x) { return x[0] > 3.0 ? std::nan("") : -0.5 * x[0] * x[0]; }, info);
    PoolOptions opt;
    opt.dictator = 0;
    const auto p = pool(PoolingMode::dictatorial, {normal_density(0, 1), broken}, {}, opt);
    (void)p;
    const auto lin = pool(PoolingMode::linear, {normal_density(0, 1), normal_density(0, 2)}, {0.5, 0.5});
    (void)lin;
    const auto q = pool(PoolingMode::linear, {normal_density(0, 1), broken}, {0.5, 0.5}, [] {
      PoolOptions o;
      o.box_width = 2.5;
      return o;
    }());
    try {
      q.log_density(v1(4.0));
      FAIL("expected EvaluationError");
    } catch (const EvaluationError& e) {
      CHECK(std::string(e.what()).find("#1") != std::string::npos);
    }
  }

  TEST_CASE("log pooling is zero wherever a weighted component is zero") {
    Density::Info info;
    info.label = "half-normal";
    info.normalized = true;
    info.center = v1(0.8);
    info.scale = v1(0.6);
    const Density half(1, [](const Vector& x) {
      return x[0] < 0.0 ? kNegInf : std::log(2.0) + oracle::log_normal_pdf(x[0], 0, 1);
    }, info);
    const auto lg = pool(PoolingMode::log, {normal_density(0, 1), half}, {0.5, 0.5});
    const auto lin = pool(PoolingMode::linear, {normal_density(0, 1), half}, {0.5, 0.5});
    CHECK(lg.log_density(v1(-1.0)) == kNegInf);
    CHECK(std::isfinite(lin.log_density(v1(-1.0))));
    const auto zero_w = pool(PoolingMode::log, {normal_density(0, 1), half}, {1.0, 0.0});
    CHECK(std::isfinite(zero_w.log_density(v1(-1.0))));
  }
}

TEST_SUITE("pooling properties") {
  TEST_CASE("externally Bayesian log pooling") {
    const std::vector<Density> priors = {logistic_density(-0.5, 0.8), normal_density(1.0, 2.0)};
    const std::vector<double> w = {0.35, 0.65};
    auto loglik = [](double x) { return oracle::log_normal_pdf(0.7, x, 0.5); };
    // Posteriors normalized by the oracle.
    std::vector<Density> posts;
    for (const auto& p : priors) {
      const double z = oracle::simpson([&](double x) { return std::exp(loglik(x) + p.log_pdf(v1(x))); }, -40, 40, 80000);
      Density::Info info;
      info.label = "post";
      info.normalized = true;
      info.center = v1(0.5);
      info.scale = v1(1.0);
      posts.emplace_back(1, [p, z, loglik](const Vector& x) { return loglik(x[0]) + p.log_pdf(x) - std::log(z); }, info);
    }
    const auto pooled_posts = pool(PoolingMode::log, posts, w);
    const auto pooled_priors = pool(PoolingMode::log, priors, w);
    const double z = oracle::simpson(
        [&](double x) { return std::exp(loglik(x) + pooled_priors.log_density(v1(x))); }, -40, 40, 80000);
    double gap = 0.0;
    for (double x = -5.0; x <= 5.0; x += 0.05) {
      const double a = pooled_posts.log_density(v1(x));
      const double b = loglik(x) + pooled_priors.log_density(v1(x)) - std::log(z);
      gap = std::max(gap, std::abs(std::exp(a) - std::exp(b)));
    }
    CHECK(gap < 1e-8);
  }

  TEST_CASE("one-hot log weights reproduce dictatorial pooling") {
    const std::vector<Density> c = {logistic_density(0, 1), normal_density(2, 0.7)};
    PoolOptions opt;
    opt.dictator = 1;
    const auto dict = pool(PoolingMode::dictatorial, c, {}, opt);
    const auto lg = pool(PoolingMode::log, c, {0.0, 1.0});
    for (double x : {-3.0, 0.0, 1.0, 2.0, 5.0}) {
      CHECK(lg.log_density(v1(x)) == doctest::Approx(dict.log_density(v1(x))).epsilon(1e-9));
    }
  }

  TEST_CASE("linear pool of normalized components needs no renormalization") {
    const auto p = pool(PoolingMode::linear, {logistic_density(0, 1), normal_density(2, 0.7)}, {0.25, 0.75});
    CHECK(p.log_norm() == 0.0);
    CHECK(p.norm_method() == NormMethod::exact);
  }

  TEST_CASE("jointly permuting components and weights changes nothing") {
    const auto a = logistic_density(0, 1);
    const auto b = normal_density(2, 0.7);
    for (auto mode : {PoolingMode::linear, PoolingMode::log}) {
      const auto p = pool(mode, {a, b}, {0.3, 0.7});
      const auto q = pool(mode, {b, a}, {0.7, 0.3});
      for (double x : {-3.0, 0.0, 1.0, 2.0, 5.0}) {
        CHECK(p.log_density(v1(x)) == doctest::Approx(q.log_density(v1(x))).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("PoE concentrates below both component variances") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> mu(-3, 3), var(0.1, 5);
    for (int i = 0; i < 20; ++i) {
      const double v_a = var(rng), v_b = var(rng);
      const auto p = pool(PoolingMode::poe, {normal_density(mu(rng), v_a), normal_density(mu(rng), v_b)});
      const auto m = oracle::moments([&](double x) { return std::exp(p.log_density(v1(x))); }, -30, 30, 40000);
      CHECK(m.var < std::min(v_a, v_b));
      CHECK(m.var == doctest::Approx(1.0 / (1.0 / v_a + 1.0 / v_b)).epsilon(1e-8));
    }
  }
}

TEST_SUITE("normalize") {
  TEST_CASE("already normalized density") {
    const auto n = normalize([](const Vector& x) { return oracle::log_normal_pdf(x[0], 0, 1); },
                             LinkSpace::real_line(1), Box{v1(-10), v1(10)});
    CHECK(std::abs(n.log_norm) < 1e-6);
    CHECK(n.method == NormMethod::quadrature);
  }

  TEST_CASE("squared normal density integrates to 1/(2 sqrt(pi))") {
    const auto n = normalize([](const Vector& x) { return 2.0 * oracle::log_normal_pdf(x[0], 0, 1); },
                             LinkSpace::real_line(1), Box{v1(-10), v1(10)});
    CHECK(std::exp(n.log_norm) == doctest::Approx(1.0 / (2.0 * std::sqrt(std::numbers::pi))).epsilon(1e-9));
  }

  TEST_CASE("two-dimensional quadrature and lattice sums") {
    Matrix cov(2, 2);
    cov << 1.0, 0.6, 0.6, 2.0;
    const Vector mean = Vector::Zero(2);
    const auto n = normalize([&](const Vector& x) { return std::log(3.0) + log_mvn_pdf(x, mean, cov); },
                             LinkSpace::real_line(2), Box{Vector::Constant(2, -14), Vector::Constant(2, 14)});
    CHECK(n.log_norm == doctest::Approx(std::log(3.0)).epsilon(1e-7));
    // Poisson(3) pmf summed over the lattice.
    const auto lat = normalize([](const Vector& x) { return x[0] * std::log(3.0) - 3.0 - std::lgamma(x[0] + 1.0); },
                               LinkSpace({CoordinateBound::integer(0.0)}), Box{v1(0), v1(60)});
    CHECK(std::abs(lat.log_norm) < 1e-12);
  }

  TEST_CASE("Monte Carlo beyond two dimensions") {
    const int k = 3;
    Matrix c1 = Matrix::Identity(k, k), c2 = 2.0 * Matrix::Identity(k, k);
    const Vector m1 = Vector::Zero(k), m2 = Vector::Constant(k, 0.5);
    auto f = [&](const Vector& x) { return log_mvn_pdf(x, m1, c1) + log_mvn_pdf(x, m2, c2); };
    // Closed form: N(m1; m2, c1 + c2).
    const double exact = log_mvn_pdf(m1, m2, c1 + c2);
    const Matrix pc = (c1.inverse() + c2.inverse()).inverse();
    const Vector pm = pc * (c1.inverse() * m1 + c2.inverse() * m2);
    const Density proposal = gaussian_density(pm, 1.5 * pc);
    const auto n = normalize(f, LinkSpace::real_line(k), Box{Vector::Constant(k, -10), Vector::Constant(k, 10)}, {},
                             &proposal);
    CHECK(n.method == NormMethod::monte_carlo);
    CHECK(n.error < 1e-2);
    CHECK(std::abs(n.log_norm - exact) < 4.0 * n.error + 1e-12);
  }

  TEST_CASE("unbounded integrand at the box edge is rejected") {
    CHECK_THROWS_AS(normalize([](const Vector&) { return 0.0; }, LinkSpace::real_line(1), Box{v1(-5), v1(5)}),
                    NormalizationError);
  }
}

TEST_SUITE("quantile transform") {
  TEST_CASE("Gaussian quantile map is affine") {
    const QuantileTransform q(normal_distribution(1.5, 2.0), normal_distribution(0.0, 1.0), {-3, -1, 0, 1, 3});
    for (double x : {-2.0, 0.0, 2.0}) CHECK(std::abs(q(x) - (1.5 + 2.0 * x)) < 1e-4);
  }

  TEST_CASE("identical marginals and pool give ordinary consistent melding") {
    const auto s1 = fixtures::gaussian_submodel("a", 0.0, 1.0, 0.4, 1.0, true);
    const auto s2 = fixtures::gaussian_submodel("b", 0.0, 1.0, -1.0, 2.0, true);
    const auto n01 = normal_distribution(0.0, 1.0);
    const auto qt = quantile_transform_meld({s1, s2}, {n01, n01}, n01, {-4, -2, 0, 2, 4});
    const auto p = normal_density(0.0, 1.0);
    const auto model = meld::meld({s1, s2}, {p, p}, pool(PoolingMode::dictatorial, {p, p}));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    for (int i = 0; i < 40; ++i) {
      const double phi = z(rng);
      const std::vector<Vector> psi = {v1(z(rng)), v1(z(rng))};
      CHECK(std::abs(qt(phi, psi) - meld_log_density(model, v1(phi), psi)) < 1e-9);
    }
  }

  TEST_CASE("swapping the reference pool leaves the psi marginals unchanged") {
    // phi ~ N(a_m, b_m^2) in submodel m, psi_m | phi ~ N(phi, 1).
    const auto s1 = fixtures::gaussian_submodel("a", -1.0, 0.5, std::nullopt, 2.0, true);
    const auto s2 = fixtures::gaussian_submodel("b", 2.0, 3.0, std::nullopt, 2.0, true);
    const std::vector<std::shared_ptr<const ScalarDistribution>> marg = {normal_distribution(-1.0, std::sqrt(0.5)),
                                                                         normal_distribution(2.0, std::sqrt(3.0))};
    auto psi_means = [&](double pm, double ps) {
      const auto f = quantile_transform_meld({s1, s2}, marg, normal_distribution(pm, ps), {pm - 3 * ps, pm, pm + 3 * ps});
      // Conditional independence lets the psi integrals factor per phi.
      const Vector r1 = v1(-1.0), r2 = v1(2.0);
      const double lo = pm - 8.5 * ps, hi = pm + 8.5 * ps;
      double mass = 0.0, e1 = 0.0, e2 = 0.0;
      auto outer = [&](double phi, int which) {
        const double base = f(phi, {r1, r2});
        if (!std::isfinite(base)) return 0.0;
        auto g1 = [&](double s) { return std::exp(f(phi, {v1(s), r2}) - base); };
        auto g2 = [&](double s) { return std::exp(f(phi, {r1, v1(s)}) - base); };
        const double i1 = oracle::simpson(g1, -12, 10, 800);
        const double i2 = oracle::simpson(g2, -10, 17, 800);
        const double w = std::exp(base) * i1 * i2;
        if (which == 0) return w;
        if (which == 1) return std::exp(base) * oracle::simpson([&](double s) { return s * g1(s); }, -12, 10, 800) * i2;
        return std::exp(base) * i1 * oracle::simpson([&](double s) { return s * g2(s); }, -10, 17, 800);
      };
      mass = oracle::simpson([&](double p) { return outer(p, 0); }, lo, hi, 800);
      e1 = oracle::simpson([&](double p) { return outer(p, 1); }, lo, hi, 800) / mass;
      e2 = oracle::simpson([&](double p) { return outer(p, 2); }, lo, hi, 800) / mass;
      return std::pair{e1, e2};
    };
    const auto [a1, a2] = psi_means(0.0, 1.0);
    const auto [b1, b2] = psi_means(3.0, 2.0);
    CHECK(std::abs(a1 - b1) < 1e-6);
    CHECK(std::abs(a2 - b2) < 1e-6);
    // Both equal the submodel prior means of phi.
    CHECK(a1 == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(a2 == doctest::Approx(2.0).epsilon(1e-5));
  }

  TEST_CASE("empirical CDF from too few distinct samples is rejected") {
    std::vector<double> draws(50, 1.0);
    draws[0] = 0.0;
    CHECK_THROWS_AS(empirical_distribution(draws, 2048), NormalizationError);
  }

  TEST_CASE("empirical CDF approximates a normal") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z(1.0, 2.0);
    std::vector<double> d(200000);
    for (auto& x : d) x = z(rng);
    const auto e = empirical_distribution(d);
    for (double u : {0.05, 0.25, 0.5, 0.75, 0.95}) {
      const double exact = normal_distribution(1.0, 2.0)->quantile(u);
      CHECK(std::abs(e->quantile(u) - exact) < 0.03);
      CHECK(std::abs(e->cdf(exact) - u) < 0.005);
    }
    CHECK(e->cdf(-50.0) > 0.0);
    CHECK(e->cdf(-50.0) < 1e-6);
  }
}
