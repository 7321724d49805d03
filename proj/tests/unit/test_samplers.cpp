#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "meld/diagnostics.hpp"
#include "meld/errors.hpp"
#include "meld/fixtures.hpp"
#include "meld/sampler.hpp"
#include "oracle.hpp"

using namespace meld;
namespace fx = meld::fixtures;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

SamplerConfig cfg(std::size_t n_iter, std::size_t burn_in, std::uint64_t seed) {
  SamplerConfig c;
  c.n_iter = n_iter;
  c.burn_in = burn_in;
  c.rng_seed = seed;
  return c;
}

ParameterSummary phi_summary(const ChainStore& c) { return diagnostics(c).parameter("phi"); }

double sample_var(const Vector& x) { return (x.array() - x.mean()).square().sum() / (x.size() - 1.0); }

// Two chains agree in mean within 3 combined MC standard errors.
void check_same_mean(const ParameterSummary& a, const ParameterSummary& b) {
  CHECK(within_combined_se(a.mean, a.mcse, b.mean, b.mcse));
}

// Variance agreement: the MC standard error of a variance estimate from ESS
// effective draws of a normal is about var * sqrt(2 / ESS).
void check_same_var(const ParameterSummary& a, const ParameterSummary& b) {
  const double va = a.sd * a.sd, vb = b.sd * b.sd;
  CHECK(within_combined_se(va, va * std::sqrt(2.0 / a.ess), vb, vb * std::sqrt(2.0 / b.ess)));
}

constexpr double kPostVar = 1.0 / 3.25;

}  // namespace

TEST_SUITE("mwg") {
  TEST_CASE("Gaussian pair under PoE") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto chain = mwg_sample(model, cfg(102000, 2000, 41));
    REQUIRE(chain.rows() == 100000);
    const auto s = phi_summary(chain);
    CHECK(std::abs(s.mean) < 3.0 * s.mcse);
    CHECK(std::abs(s.sd * s.sd - kPostVar) < 0.05 * kPostVar);
  }

  TEST_CASE("discrete toy") {
    const auto toy = fx::discrete_toy();
    const auto chain = mwg_sample(fx::discrete_toy_model(toy), cfg(101000, 1000, 42));
    const double p1 = chain.phi().col(0).mean();
    CHECK(std::abs(p1 - toy.posterior_phi1) < 0.01);
    CHECK(toy.posterior_phi1 == doctest::Approx(0.941176).epsilon(1e-6));
  }

  TEST_CASE("zero retained iterations") {
    const auto pair = fx::gaussian_pair();
    const auto chain = mwg_sample(fx::gaussian_pair_model(pair, PoolingMode::poe), cfg(500, 500, 1));
    CHECK(chain.rows() == 0);
    CHECK(chain.columns.size() == 1);
  }

  TEST_CASE("invalid configs") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    CHECK_THROWS_AS(mwg_sample(model, cfg(100, 200, 1)), ConfigError);
    auto c = cfg(100, 10, 1);
    c.thin = 0;
    CHECK_THROWS_AS(mwg_sample(model, c), ConfigError);
    c.thin = 1;
    c.proposal_scales = {{-1.0}};
    CHECK_THROWS_AS(mwg_sample(model, c), ConfigError);
  }

  TEST_CASE("a link block that never moves is a sampler fault") {
    const auto pair = fx::gaussian_pair();
    auto c = cfg(5000, 2000, 3);
    c.adapt = false;
    c.proposal_scales = {{1e9}};
    try {
      mwg_sample(fx::gaussian_pair_model(pair, PoolingMode::poe), c);
      FAIL("expected SamplerError");
    } catch (const SamplerError& e) {
      CHECK(std::string(e.what()).find("proposal scale") != std::string::npos);
    }
  }

  TEST_CASE("thinning and acceptance bookkeeping") {
    const auto pair = fx::gaussian_pair({.latent = true});
    auto c = cfg(12000, 2000, 5);
    c.thin = 4;
    const auto chain = mwg_sample(fx::gaussian_pair_model(pair, PoolingMode::poe), c);
    CHECK(chain.rows() == 2500);
    REQUIRE(chain.acceptance.size() == 3);
    for (const auto& b : chain.acceptance) {
      CHECK(b.proposals == 10000);
      CHECK(b.burn_in_proposals == 2000);
      CHECK(b.rate() >= 0.0);
      CHECK(b.rate() <= 1.0);
      CHECK(b.accepts <= b.proposals);
    }
  }
}

TEST_SUITE("multistage") {
  TEST_CASE("two stages match the single-pass sampler") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto single = phi_summary(mwg_sample(model, cfg(102000, 2000, 7)));
    for (auto fact : {StageFactorization::root(), StageFactorization::poe_self()}) {
      const auto stages = multistage_sample(model, fact, {cfg(102000, 2000, 8)});
      REQUIRE(stages.size() == 2);
      const auto s = phi_summary(stages.back());
      check_same_mean(single, s);
      check_same_var(single, s);
      CHECK(std::abs(s.sd * s.sd - kPostVar) < 0.05 * kPostVar);
    }
  }

  TEST_CASE("one submodel is plain stage-one MCMC") {
    const auto pair = fx::gaussian_pair();
    PoolOptions opt;
    opt.dictator = 0;
    const auto model = meld::meld({pair.submodels[0]}, {pair.priors[0]},
                                  pool(PoolingMode::dictatorial, {pair.priors[0]}, {}, opt));
    const auto c = cfg(20000, 1000, 9);
    const auto stages = multistage_sample(model, StageFactorization::root(), {c});
    REQUIRE(stages.size() == 1);
    const auto direct = mwg_sample(model, c);
    REQUIRE(direct.rows() == stages[0].rows());
    CHECK((direct.draws - stages[0].draws).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("stage order does not change the final target") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    auto a = cfg(102000, 2000, 10);
    auto b = a;
    b.rng_seed = 11;
    b.stage_order = {"gauss2", "gauss1"};
    const auto sa = phi_summary(multistage_sample(model, StageFactorization::root(), {a}).back());
    const auto sb = phi_summary(multistage_sample(model, StageFactorization::root(), {b}).back());
    check_same_mean(sa, sb);
    check_same_var(sa, sb);
  }

  TEST_CASE("each stage samples its own partial target") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto fact = StageFactorization::root();
    const auto stages = multistage_sample(model, fact, {cfg(102000, 2000, 12)});
    const std::vector<std::size_t> order = {0, 1};
    for (std::size_t l = 1; l <= 2; ++l) {
      const auto direct = phi_summary(mwg_sample(stage_target(model, fact, order, l), cfg(102000, 2000, 20 + l)));
      const auto staged = phi_summary(stages[l - 1]);
      check_same_mean(direct, staged);
      check_same_var(direct, staged);
    }
    // Stage 1: N(1; phi, 1) times N(phi; 0, 0.8)^(1/2).
    const double prec = 1.0 + 0.5 / 0.8;
    const auto s1 = phi_summary(stages[0]);
    CHECK(std::abs(s1.mean - 1.0 / prec) < 3.0 * s1.mcse);
    CHECK(std::abs(s1.sd * s1.sd - 1.0 / prec) < 0.05 / prec);
  }

  TEST_CASE("carried latents change only on accepted stage proposals") {
    const auto pair = fx::gaussian_pair({.latent = true});
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto stages = multistage_sample(model, StageFactorization::poe_self(), {cfg(22000, 2000, 13)});
    const auto& c = stages.back();
    const Matrix carried = c.block_draws("gauss1");
    const Matrix phi = c.phi();
    REQUIRE(c.source_index.size() == c.rows());
    std::size_t changes = 0;
    for (std::size_t i = 1; i < c.rows(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (c.source_index[i] == c.source_index[i - 1]) {
        CHECK(carried(r, 0) == carried(r - 1, 0));
        CHECK(phi(r, 0) == phi(r - 1, 0));
      } else {
        ++changes;
      }
    }
    const auto& prop = c.acceptance.front();
    CHECK(prop.name == "stage-proposal");
    CHECK(changes <= prop.accepts);
    CHECK(changes > 0);
    // Carried columns come verbatim from the previous stage.
    const Matrix prev = stages[0].draws;
    for (std::size_t i = 0; i < c.rows(); i += 97) {
      const auto r = static_cast<Eigen::Index>(i);
      CHECK(c.draws.row(r).head(2) == prev.row(static_cast<Eigen::Index>(c.source_index[i])));
    }
    // psi_2 | phi, y2 has mean (phi + y2) / 2 and variance 1/4.
    const Vector resid = c.block_draws("gauss2").col(0) - 0.5 * (phi.col(0).array() - 1.0).matrix();
    CHECK(std::abs(resid.mean()) < 0.02);
    CHECK(std::abs(sample_var(resid) - 0.25) < 0.02);
  }

  TEST_CASE("a concentrated later stage exhausts the stage-one sample") {
    auto pair = fx::gaussian_pair();
    pair.submodels[1] = fx::gaussian_submodel("gauss2", 0.0, 4.0, -3.0, 1e-6, false);
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    CHECK_THROWS_AS(multistage_sample(model, StageFactorization::poe_self(), {cfg(6000, 1000, 14)}), DepletionError);
  }

  TEST_CASE("identical seeds give bit-identical chains") {
    const auto pair = fx::gaussian_pair({.latent = true});
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto c = cfg(8000, 1000, 15);
    const auto a = multistage_sample(model, StageFactorization::root(), {c});
    const auto b = multistage_sample(model, StageFactorization::root(), {c});
    for (std::size_t l = 0; l < a.size(); ++l) CHECK((a[l].draws.array() == b[l].draws.array()).all());
    const auto m1 = mwg_sample(model, c), m2 = mwg_sample(model, c);
    CHECK((m1.draws.array() == m2.draws.array()).all());
    auto c2 = c;
    c2.rng_seed = 16;
    CHECK_FALSE((mwg_sample(model, c2).draws.array() == m1.draws.array()).all());
  }
}

TEST_SUITE("stage ratio") {
  TEST_CASE("PoE shortcut equals the general form with analytic marginals") {
    const auto pair = fx::gaussian_pair({.latent = true});
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    std::vector<Density::LogPdf> factors;
    for (const auto& p : pair.priors) factors.push_back([p](const Vector& x) { return p.log_pdf(x); });
    const auto custom = StageFactorization::custom(factors);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 2.0);
    for (int i = 0; i < 100; ++i) {
      const Vector phi = v1(z(rng)), psi = v1(z(rng));
      for (std::size_t m = 0; m < 2; ++m) {
        const double a = stage_log_ratio(model, StageFactorization::poe_self(), m, phi, psi);
        const double b = stage_log_ratio(model, custom, m, phi, psi);
        CHECK(std::abs(a - b) < 1e-10);
      }
    }
  }

  TEST_CASE("outside the link space") {
    const auto model = fx::discrete_toy_model(fx::discrete_toy());
    CHECK(stage_log_ratio(model, StageFactorization::root(), 1, v1(0.5), Vector()) == kNegInf);
    CHECK(stage_log_ratio(model, StageFactorization::poe_self(), 1, v1(2.0), Vector()) == kNegInf);
  }

  TEST_CASE("hand computation at phi = 0.5") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    // p_2(phi, y2) / p_2(phi) = N(-1; phi, 1); root factor is N(phi; 0, 0.8)^(1/2).
    const double expected = oracle::log_normal_pdf(-1.0, 0.5, 1.0) + 0.5 * oracle::log_normal_pdf(0.5, 0.0, 0.8);
    CHECK(std::abs(stage_log_ratio(model, StageFactorization::root(), 1, v1(0.5), Vector()) - expected) < 1e-12);
    const double poe = oracle::log_normal_pdf(0.5, 0.0, 4.0) + oracle::log_normal_pdf(-1.0, 0.5, 1.0);
    CHECK(std::abs(stage_log_ratio(model, StageFactorization::poe_self(), 1, v1(0.5), Vector()) - poe) < 1e-12);
  }

  TEST_CASE("poe-self needs PoE pooling") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::log);
    CHECK_THROWS_AS(stage_log_ratio(model, StageFactorization::poe_self(), 0, v1(0.0), Vector()), ConfigError);
  }
}

TEST_SUITE("sir") {
  TEST_CASE("flat weights give a uniform resample") {
    const auto pair = fx::gaussian_pair({.with_data = false});
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto pooled = model.pooled();
    const auto fact = StageFactorization::custom(
        {[pooled](const Vector& x) { return pooled.log_density(x); }, [](const Vector&) { return 0.0; }});
    const std::vector<std::size_t> order = {0, 1};
    const auto prev = mwg_sample(stage_target(model, fact, order, 1), cfg(42000, 2000, 17));
    Rng rng(18);
    const auto out = sir_stage_update(prev, model, fact, order, 2, 40000, rng);
    REQUIRE(out.weight_ess);
    CHECK(*out.weight_ess == doctest::Approx(static_cast<double>(prev.rows())).epsilon(1e-9));
    CHECK(out.warnings.empty());
    const auto a = phi_summary(prev), b = phi_summary(out);
    check_same_mean(a, b);
    check_same_var(a, b);
  }

  TEST_CASE("Gaussian pair stage two by resampling") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto fact = StageFactorization::poe_self();
    const std::vector<std::size_t> order = {0, 1};
    const auto prev = mwg_sample(stage_target(model, fact, order, 1), cfg(102000, 2000, 19));
    Rng rng(20);
    const auto out = sir_stage_update(prev, model, fact, order, 2, 20000, rng);
    const auto s = phi_summary(out);
    CHECK(s.ess < summarize("phi", out.phi().col(0)).ess);
    CHECK(std::abs(s.mean) < 3.0 * s.mcse);
    CHECK(std::abs(s.sd * s.sd - kPostVar) < 0.05 * kPostVar);
  }

  TEST_CASE("one dominant weight") {
    const auto pair = fx::gaussian_pair();
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const std::vector<std::size_t> order = {0, 1};
    ChainStore prev = mwg_sample(model, cfg(0, 0, 1));
    prev.draws.resize(200, 1);
    prev.draws(0, 0) = -1.0;
    for (Eigen::Index i = 1; i < 200; ++i) prev.draws(i, 0) = 30.0 + static_cast<double>(i);
    Rng rng(21);
    const auto out = sir_stage_update(prev, model, StageFactorization::poe_self(), order, 2, 500, rng);
    REQUIRE(out.weight_ess);
    CHECK(*out.weight_ess == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("depleted") != std::string::npos);
    CHECK((out.phi().array() == -1.0).all());
  }

  TEST_CASE("resampling needs a latent-free submodel") {
    const auto pair = fx::gaussian_pair({.latent = true});
    const auto model = fx::gaussian_pair_model(pair, PoolingMode::poe);
    const auto prev = mwg_sample(model, cfg(100, 0, 1));
    Rng rng(1);
    CHECK_THROWS_AS(sir_stage_update(prev, model, StageFactorization::poe_self(), {0, 1}, 2, 10, rng), ConfigError);
  }

  TEST_CASE("weight ESS") {
    CHECK(weight_ess({0.0, 0.0, 0.0, 0.0}) == doctest::Approx(4.0));
    CHECK(weight_ess({0.0, kNegInf, kNegInf}) == doctest::Approx(1.0));
    CHECK(weight_ess({kNegInf, kNegInf}) == 0.0);
    CHECK(weight_ess({0.0, std::log(3.0)}) == doctest::Approx(16.0 / 10.0));
  }
}

TEST_SUITE("sampler properties") {
  TEST_CASE("link moves on the discrete toy satisfy detailed balance") {
    const auto toy = fx::discrete_toy();
    const auto chain = mwg_sample(fx::discrete_toy_model(toy), cfg(401000, 1000, 23));
    const Vector x = chain.phi().col(0);
    double n0 = 0, n1 = 0, n01 = 0, n10 = 0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      if (x[i] == 0.0) {
        ++n0;
        n01 += x[i + 1] == 1.0;
      } else {
        ++n1;
        n10 += x[i + 1] == 0.0;
      }
    }
    const double pi1 = toy.posterior_phi1, pi0 = 1.0 - pi1;
    const double p01 = n01 / n0, p10 = n10 / n1;
    // Binomial 3 sigma on each estimated transition probability.
    const double se = std::hypot(pi0 * std::sqrt(p01 * (1 - p01) / n0), pi1 * std::sqrt(p10 * (1 - p10) / n1));
    CHECK(std::abs(pi0 * p01 - pi1 * p10) < 3.0 * se);
    // Metropolis: moves up are always accepted once proposed.
    CHECK(p10 < p01);
  }

  TEST_CASE("PoE shortcut on and off give the same posterior") {
    const auto pair = fx::gaussian_pair({.latent = true});
    const auto a = phi_summary(mwg_sample(fx::gaussian_pair_model(pair, PoolingMode::poe, {}, 0, false), cfg(102000, 2000, 24)));
    const auto b = phi_summary(mwg_sample(fx::gaussian_pair_model(pair, PoolingMode::poe, {}, 0, true), cfg(102000, 2000, 25)));
    check_same_mean(a, b);
    check_same_var(a, b);
  }
}

TEST_SUITE("diagnostics") {
  TEST_CASE("iid chain") {
    Rng rng(26);
    std::normal_distribution<double> z;
    Vector x(10000);
    for (auto& v : x) v = z(rng);
    CHECK(std::abs(effective_sample_size(x) - 1e4) < 0.15 * 1e4);
  }

  TEST_CASE("constant chain") {
    CHECK(effective_sample_size(Vector::Constant(500, 2.0)) <= 1.0);
    CHECK(move_rate(Vector::Constant(500, 2.0)) == 0.0);
  }

  TEST_CASE("alternating chain") {
    Vector x(1000);
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = i % 2 ? 1.0 : -1.0;
    CHECK(move_rate(x) == 1.0);
    const auto s = summarize("x", x);
    CHECK(s.mean == 0.0);
    CHECK(s.move_rate == 1.0);
    Vector y = x;
    for (Eigen::Index i = 0; i < y.size(); i += 4) {
      if (i + 1 < y.size()) y[i + 1] = y[i];
    }
    // Two changes per block of four: 2->3 and 3->4 (the last block has no successor).
    CHECK(move_rate(y) == doctest::Approx(499.0 / 999.0).epsilon(1e-12));
  }

  TEST_CASE("AR(1) chain ESS") {
    Rng rng(27);
    std::normal_distribution<double> z;
    const double rho = 0.9;
    Vector x(200000);
    x[0] = z(rng);
    for (Eigen::Index i = 1; i < x.size(); ++i) x[i] = rho * x[i - 1] + std::sqrt(1 - rho * rho) * z(rng);
    const double expected = 200000.0 * (1 - rho) / (1 + rho);
    CHECK(std::abs(effective_sample_size(x) - expected) < 0.15 * expected);
  }

  TEST_CASE("ancestral ESS of resampled draws") {
    // Independent roots, each drawn exactly twice: half the information.
    Rng rng(29);
    std::normal_distribution<double> z;
    Vector root(5000);
    for (auto& v : root) v = z(rng);
    Vector x(10000);
    std::vector<std::size_t> idx(10000);
    for (std::size_t r = 0; r < 10000; ++r) {
      idx[r] = r / 2;
      x[static_cast<Eigen::Index>(r)] = root[static_cast<Eigen::Index>(r / 2)];
    }
    CHECK(std::abs(ancestral_ess(x, idx, 5000) - 5000.0) < 0.15 * 5000.0);
    // Shuffled order hides the duplicates from the chain ESS but not from the ancestry.
    std::vector<std::size_t> perm(10000);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector xs(10000);
    std::vector<std::size_t> is(10000);
    for (std::size_t r = 0; r < 10000; ++r) {
      xs[static_cast<Eigen::Index>(r)] = x[static_cast<Eigen::Index>(perm[r])];
      is[r] = idx[perm[r]];
    }
    CHECK(effective_sample_size(xs) > 8500.0);
    CHECK(std::abs(ancestral_ess(xs, is, 5000) - 5000.0) < 0.15 * 5000.0);
  }

  TEST_CASE("chain diagnostics collect every column") {
    const auto pair = fx::gaussian_pair({.latent = true});
    const auto chain = mwg_sample(fx::gaussian_pair_model(pair, PoolingMode::poe), cfg(6000, 1000, 28));
    const auto d = diagnostics(chain);
    CHECK(d.rows == 5000);
    CHECK(d.parameters.size() == 3);
    CHECK(d.parameter("phi").q05 < d.parameter("phi").q50);
    CHECK(d.parameter("phi").q50 < d.parameter("phi").q95);
    CHECK(d.floor_hit_fraction == 0.0);
    CHECK(d.acceptance.size() == 3);
    CHECK_THROWS_AS(d.parameter("nope"), ConfigError);
  }
}
