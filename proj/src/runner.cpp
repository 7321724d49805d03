#include "meld/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <regex>
#include <set>
#include <sstream>

#include "meld/approximation.hpp"
#include "meld/diagnostics.hpp"
#include "meld/errors.hpp"
#include "meld/fixtures.hpp"
#include "meld/io.hpp"
#include "meld/marginal.hpp"
#include "meld/sampler.hpp"
#include "meld/splitting.hpp"

namespace meld {

namespace fs = std::filesystem;

const std::vector<std::string>& fixture_ids() {
  static const std::vector<std::string> ids = {"gaussian-pair", "discrete-toy",  "flu-like",     "ecology-like",
                                               "chain-motif",   "tail-to-tail",  "head-to-head", "tall-bernoulli"};
  return ids;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void check_fixture_params(const RunConfig& c, const std::set<std::string>& allowed) {
  if (std::find(fixture_ids().begin(), fixture_ids().end(), c.fixture) == fixture_ids().end()) {
    std::string list;
    for (const auto& id : fixture_ids()) list += (list.empty() ? "" : ", ") + id;
    throw ConfigError("unknown fixture '" + c.fixture + "' (known: " + list + ")");
  }
  for (const auto& [key, v] : c.fixture_params) {
    if (!allowed.count(key)) throw ConfigError("[fixture] " + key + " does not apply to fixture '" + c.fixture + "'");
  }
}

double param(const RunConfig& c, const std::string& key, double fallback) {
  const auto it = c.fixture_params.find(key);
  return it == c.fixture_params.end() ? fallback : it->second;
}

fixtures::GaussianPair gaussian_pair_from(const RunConfig& c) {
  check_fixture_params(c, {"prior_mean1", "prior_var1", "prior_mean2", "prior_var2", "y1", "y2", "obs_var"});
  fixtures::GaussianPairOptions o;
  o.prior_mean1 = param(c, "prior_mean1", o.prior_mean1);
  o.prior_var1 = param(c, "prior_var1", o.prior_var1);
  o.prior_mean2 = param(c, "prior_mean2", o.prior_mean2);
  o.prior_var2 = param(c, "prior_var2", o.prior_var2);
  o.y1 = param(c, "y1", o.y1);
  o.y2 = param(c, "y2", o.y2);
  o.obs_var = param(c, "obs_var", o.obs_var);
  o.with_data = c.with_data;
  o.latent = c.latent;
  return fixtures::gaussian_pair(o);
}

fixtures::FluLike flu_from(const RunConfig& c) {
  check_fixture_params(c, {});
  fixtures::FluOptions o;
  o.with_data = c.with_data;
  o.n_forward = c.n_forward;
  o.table_knots = c.table_knots;
  o.bandwidth = c.bandwidth;
  o.dof = c.dof;
  return fixtures::flu_like(o);
}

bool is_split_fixture(const std::string& id) {
  return id == "ecology-like" || id == "chain-motif" || id == "tail-to-tail" || id == "head-to-head" ||
         id == "tall-bernoulli";
}

SplitPlan split_plan_from(const RunConfig& c) {
  if (c.fixture == "ecology-like") {
    check_fixture_params(c, {});
    return fixtures::ecology_like().plan;
  }
  if (c.fixture == "chain-motif") {
    check_fixture_params(c, {"aux_mean", "aux_var"});
    return fixtures::chain_motif(param(c, "aux_mean", 0.0), param(c, "aux_var", 1.0)).plan;
  }
  if (c.fixture == "tail-to-tail") {
    check_fixture_params(c, {});
    return fixtures::tail_to_tail_motif().plan;
  }
  if (c.fixture == "head-to-head") {
    check_fixture_params(c, {});
    return fixtures::head_to_head_motif().plan;
  }
  if (c.fixture == "tall-bernoulli") {
    check_fixture_params(c, {"batches"});
    const double b = param(c, "batches", 4.0);
    if (!(b >= 1.0) || b != std::floor(b)) throw ConfigError("[fixture] batches must be a positive integer");
    return fixtures::tall_bernoulli(static_cast<std::size_t>(b)).plan;
  }
  check_fixture_params(c, {});
  throw ConfigError("fixture '" + c.fixture + "' has no split plan (use one of ecology-like, chain-motif, "
                    "tail-to-tail, head-to-head, tall-bernoulli)");
}

nlohmann::json model_summary(const MeldedModel& m) {
  nlohmann::json j;
  j["pooled"] = m.pooled().describe();
  j["pooling"] = to_string(m.pooling_mode());
  j["poe_shortcut"] = m.poe_shortcut();
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : m.submodels()) subs.push_back({{"id", s.id}, {"latent_dim", s.latent_dim}});
  j["submodels"] = subs;
  return j;
}

void prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

std::string in_dir(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

// Records a fault in `file` and rethrows it.
template <class F>
auto with_fault_report(const std::string& dir, const std::string& file, nlohmann::json base, F&& body) {
  try {
    return body();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    base["error"] = e.what();
    write_json(in_dir(dir, file), base);
    throw;
  }
}

}  // namespace

MeldedModel fixture_model(const RunConfig& c) {
  if (c.fixture == "gaussian-pair") {
    const auto fx = gaussian_pair_from(c);
    return fixtures::gaussian_pair_model(fx, c.pooling, c.weights, c.dictator, c.poe_shortcut);
  }
  if (c.fixture == "discrete-toy") {
    check_fixture_params(c, {});
    const auto fx = fixtures::discrete_toy();
    PoolOptions opt;
    opt.space = fx.submodels.front().link;
    opt.dictator = c.dictator;
    auto w = c.weights;
    if (w.empty() && (c.pooling == PoolingMode::linear || c.pooling == PoolingMode::log)) w = {0.5, 0.5};
    return meld(fx.submodels, fx.priors, pool(c.pooling, fx.priors, w, opt), c.poe_shortcut);
  }
  if (c.fixture == "flu-like") {
    const auto fx = flu_from(c);
    return fixtures::flu_model(fx, c.pooling, c.weights, c.poe_shortcut);
  }
  if (is_split_fixture(c.fixture)) return split(split_plan_from(c), c.seed).joined(c.poe_shortcut);
  check_fixture_params(c, {});
  throw ConfigError("unknown fixture '" + c.fixture + "'");
}

void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::string>& outputs, double wall_seconds, const nlohmann::json& extra) {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = version();
  j["seed"] = config.seed;
  j["config"] = to_json(config);
  j["outputs"] = outputs;
  j["wall_clock_seconds"] = wall_seconds;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = *it;
  write_json(in_dir(out_dir, "manifest.json"), j);
}

RunOutputs run_meld(const RunConfig& c) {
  const auto t0 = Clock::now();
  prepare_out_dir(c.out_dir);
  RunOutputs out;
  nlohmann::json base = {{"command", "meld-run"}, {"fixture", c.fixture}};
  out.summary = with_fault_report(c.out_dir, "diagnostics.json", base, [&] {
    const MeldedModel model = fixture_model(c);
    nlohmann::json d = base;
    d["model"] = model_summary(model);
    d["sampler"] = c.sampler;
    const SamplerConfig cfg = c.sampler_config();
    std::vector<ChainStore> chains;
    if (c.sampler == "mwg") {
      chains.push_back(mwg_sample(model, cfg));
    } else {
      const auto fact = c.factorization == "poe_self" ? StageFactorization::poe_self() : StageFactorization::root();
      d["factorization"] = c.factorization;
      chains = multistage_sample(model, fact, {cfg});
    }
    d["stages"] = nlohmann::json::array();
    for (std::size_t l = 0; l < chains.size(); ++l) {
      const bool last = l + 1 == chains.size();
      const std::string file = last ? "samples.csv" : "samples_stage" + std::to_string(l + 1) + ".csv";
      write_samples_csv(in_dir(c.out_dir, file), chains[l]);
      out.files.push_back(file);
      nlohmann::json s = to_json(diagnostics(chains[l]));
      s["samples"] = file;
      d["stages"].push_back(s);
    }
    return d;
  });
  write_json(in_dir(c.out_dir, "diagnostics.json"), out.summary);
  out.files.push_back("diagnostics.json");
  write_manifest(c.out_dir, "meld-run", c, out.files, seconds_since(t0));
  return out;
}

RunOutputs run_split(const RunConfig& c) {
  const auto t0 = Clock::now();
  prepare_out_dir(c.out_dir);
  RunOutputs out;
  const SplitPlan plan = split_plan_from(c);
  nlohmann::json report = {{"command", "split-run"}, {"fixture", c.fixture}, {"blocks", plan.blocks.size()}};
  Rng ci_rng(c.seed);
  const CiCheck ci = check_conditional_independence(plan, ci_rng);
  report["ci_check"] = {{"passed", ci.passed}, {"max_violation", ci.max_violation}, {"checks", ci.checks}};
  try {
    const SplitResult sr = split(plan, c.seed);
    const MeldedModel joined = sr.joined(c.poe_shortcut);
    report["model"] = model_summary(joined);
    const PoolGridCheck grid = check_pool_recovers_marginal(plan, sr.pooled);
    report["pool_grid_check"] = {{"max_abs_log_gap", grid.max_abs_log_gap}, {"points", grid.points}};
    Rng rng(c.seed + 1);
    const JoinBackReport jb = verify_join_back(plan.joint, joined, probe_points(plan, 100, rng));
    report["join_back"] = {{"max_abs_gap", jb.max_abs_gap}, {"points", jb.points}};
    const auto fact = c.factorization == "poe_self" ? StageFactorization::poe_self() : StageFactorization::root();
    report["factorization"] = c.factorization;
    const auto chains = multistage_sample(joined, fact, {c.sampler_config()});
    report["stages"] = nlohmann::json::array();
    for (std::size_t l = 0; l < chains.size(); ++l) {
      const bool last = l + 1 == chains.size();
      const std::string file = last ? "samples.csv" : "samples_stage" + std::to_string(l + 1) + ".csv";
      write_samples_csv(in_dir(c.out_dir, file), chains[l]);
      out.files.push_back(file);
      nlohmann::json st = to_json(diagnostics(chains[l]));
      st["samples"] = file;
      report["stages"].push_back(st);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    report["error"] = e.what();
    write_json(in_dir(c.out_dir, "split.json"), report);
    write_manifest(c.out_dir, "split-run", c, {"split.json"}, seconds_since(t0));
    throw;
  }
  write_json(in_dir(c.out_dir, "split.json"), report);
  out.files.push_back("split.json");
  out.summary = report;
  write_manifest(c.out_dir, "split-run", c, out.files, seconds_since(t0));
  return out;
}

RunOutputs run_approx(const RunConfig& c) {
  const auto t0 = Clock::now();
  prepare_out_dir(c.out_dir);
  RunOutputs out;
  nlohmann::json base = {{"command", "approx-run"}, {"fixture", c.fixture}, {"variant", to_string(c.variant)}};
  out.summary = with_fault_report(c.out_dir, "diagnostics.json", base, [&] {
    SubmodelSpec sub1, sub2;
    if (c.fixture == "gaussian-pair") {
      const auto fx = gaussian_pair_from(c);
      sub1 = fx.submodels[0];
      sub2 = fx.submodels[1];
    } else if (c.fixture == "flu-like") {
      const auto fx = flu_from(c);
      sub1 = fx.severity;
      sub2 = fx.icu;
    } else {
      check_fixture_params(c, {});
      throw ConfigError("approx-run supports the gaussian-pair and flu-like fixtures");
    }
    SamplerConfig cfg1 = c.sampler_config();
    cfg1.stage_order.clear();
    SamplerConfig cfg2 = cfg1;
    cfg2.rng_seed = cfg1.rng_seed + 7;
    const TwoStageApproxResult r = normal_two_stage(sub1, sub2, c.variant, cfg1, cfg2, c.n_forward);
    write_samples_csv(in_dir(c.out_dir, "samples_stage1.csv"), r.stage1);
    write_samples_csv(in_dir(c.out_dir, "samples.csv"), r.stage2);
    out.files = {"samples_stage1.csv", "samples.csv"};
    nlohmann::json d = base;
    d["stage1_submodel"] = sub1.id;
    d["stage2_submodel"] = sub2.id;
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    d["summary"] = {{"mean", vec(r.spec.posterior.mean)}, {"cov", vec(r.spec.posterior.cov.reshaped())}};
    if (r.spec.prior) {
      d["prior_summary"] = {{"mean", vec(r.spec.prior->mean)}, {"cov", vec(r.spec.prior->cov.reshaped())}};
    }
    d["ks_distance"] = r.ks_distance;
    d["warnings"] = r.warnings;
    d["stages"] = {to_json(diagnostics(r.stage1)), to_json(diagnostics(r.stage2))};
    return d;
  });
  write_json(in_dir(c.out_dir, "diagnostics.json"), out.summary);
  out.files.push_back("diagnostics.json");
  write_manifest(c.out_dir, "approx-run", c, out.files, seconds_since(t0));
  return out;
}

Density parse_normal_component(const std::string& text) {
  static const std::regex re(R"(\s*N\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)\s*)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw ConfigError("component '" + text + "': expected N(mean,var)");
  try {
    const double mean = std::stod(m[1].str());
    const double var = std::stod(m[2].str());
    if (!(var > 0.0)) throw ConfigError("component '" + text + "': variance must be positive");
    return normal_density(mean, var, "N(" + m[1].str() + "," + m[2].str() + ")");
  } catch (const std::invalid_argument&) {
    throw ConfigError("component '" + text + "': expected N(mean,var)");
  }
}

RunOutputs run_pool_plot(const PoolPlotRequest& req, const std::string& out_dir) {
  const auto t0 = Clock::now();
  std::vector<Density> comps;
  {
    std::stringstream ss(req.components);
    std::string item;
    while (std::getline(ss, item, ';')) {
      if (!item.empty()) comps.push_back(parse_normal_component(item));
    }
  }
  if (comps.empty()) throw ConfigError("pool-plot: no components");
  if (comps.size() != 2 && !req.w1.empty()) throw ConfigError("pool-plot: --w1 needs exactly two components");
  if (req.points < 2) throw ConfigError("pool-plot: need at least 2 points");
  double lo = kInf, hi = -kInf;
  for (const auto& d : comps) {
    lo = std::min(lo, d.center()[0] - 5.0 * d.scale()[0]);
    hi = std::max(hi, d.center()[0] + 5.0 * d.scale()[0]);
  }
  if (req.lo) lo = *req.lo;
  if (req.hi) hi = *req.hi;
  if (!(lo < hi)) throw ConfigError("pool-plot: empty grid range");
  prepare_out_dir(out_dir);

  std::vector<std::string> columns = {"phi"};
  std::vector<PooledPrior> pools;
  const std::vector<double> w1s = req.w1.empty() ? std::vector<double>{0.5} : req.w1;
  for (const auto& mode_name : req.modes) {
    const PoolingMode mode = parse_pooling_mode(mode_name);
    for (double w1 : w1s) {
      std::vector<double> w;
      if (comps.size() == 2) {
        w = {w1, 1.0 - w1};
      } else {
        w.assign(comps.size(), 1.0 / static_cast<double>(comps.size()));
      }
      PoolOptions opt;
      if (mode == PoolingMode::poe) w.clear();
      if (mode == PoolingMode::dictatorial) {
        w.clear();
        opt.dictator = 0;
      }
      pools.push_back(pool(mode, comps, w, opt));
      char label[64];
      std::snprintf(label, sizeof label, "%s(w1=%g)", to_string(mode).c_str(), w1);
      columns.push_back(label);
    }
  }
  Matrix values(static_cast<Eigen::Index>(req.points), static_cast<Eigen::Index>(columns.size()));
  Vector x(1);
  for (std::size_t i = 0; i < req.points; ++i) {
    x[0] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(req.points - 1);
    const auto r = static_cast<Eigen::Index>(i);
    values(r, 0) = x[0];
    for (std::size_t k = 0; k < pools.size(); ++k) {
      values(r, static_cast<Eigen::Index>(k + 1)) = std::exp(pools[k].log_density(x));
    }
  }
  RunOutputs out;
  write_samples_csv(in_dir(out_dir, "pool_plot.csv"), columns, values);
  out.files = {"pool_plot.csv"};
  out.summary = {{"command", "pool-plot"}, {"curves", columns.size() - 1}, {"range", {lo, hi}}};
  RunConfig echo;
  echo.out_dir = out_dir;
  write_manifest(out_dir, "pool-plot", echo, out.files, seconds_since(t0),
                 {{"components", req.components}, {"modes", req.modes}, {"w1", req.w1}, {"points", req.points}});
  return out;
}

RunOutputs run_marginal_fit(const RunConfig& c, const std::string& submodel_id, std::size_t grid_points) {
  const auto t0 = Clock::now();
  std::vector<SubmodelSpec> subs;
  std::vector<Density> exact;
  if (c.fixture == "gaussian-pair") {
    const auto fx = gaussian_pair_from(c);
    subs = fx.submodels;
    exact = fx.priors;
  } else if (c.fixture == "flu-like") {
    check_fixture_params(c, {});
    fixtures::FluOptions o;
    o.with_data = c.with_data;
    o.n_forward = 2;  // the fitted marginals are rebuilt below
    o.table_knots = 2;
    const auto fx = fixtures::flu_like(o);
    subs = {fx.icu, fx.severity};
  } else {
    check_fixture_params(c, {});
    throw ConfigError("marginal-fit supports the gaussian-pair and flu-like fixtures");
  }
  std::size_t idx = subs.size();
  std::string ids;
  for (std::size_t m = 0; m < subs.size(); ++m) {
    if (subs[m].id == submodel_id || (submodel_id.empty() && m == 0)) idx = m;
    ids += (ids.empty() ? "" : ", ") + subs[m].id;
  }
  if (idx == subs.size()) throw ConfigError("unknown submodel '" + submodel_id + "' (known: " + ids + ")");
  if (subs[idx].link.dim() != 1) throw ConfigError("marginal-fit: scalar links only");
  if (grid_points < 2) throw ConfigError("marginal-fit: need at least 2 grid points");
  prepare_out_dir(c.out_dir);

  Rng rng(c.seed);
  const Matrix draws = forward_sample_marginal(subs[idx], c.n_forward, rng);
  KdeOptions ko;
  ko.dof = c.dof;
  ko.rule = c.bandwidth;
  const KdeEstimate kde = kde_fit(draws, ko);
  const double h = std::sqrt(kde.bandwidth()(0, 0));
  std::vector<double> v(draws.data(), draws.data() + draws.size());
  std::sort(v.begin(), v.end());
  const double lo = v[v.size() / 1000] - 3.0 * h;
  const double hi = v[v.size() - 1 - v.size() / 1000] + 3.0 * h;

  std::vector<std::string> columns = {"phi", "kde"};
  if (!exact.empty()) columns.push_back("exact");
  Matrix values(static_cast<Eigen::Index>(grid_points), static_cast<Eigen::Index>(columns.size()));
  Vector x(1);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x[0] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    values(r, 0) = x[0];
    values(r, 1) = std::exp(kde.log_density(x));
    if (!exact.empty()) values(r, 2) = exact[idx].pdf(x);
  }
  RunOutputs out;
  write_samples_csv(in_dir(c.out_dir, "marginal.csv"), columns, values);
  out.summary = {{"command", "marginal-fit"},
                 {"fixture", c.fixture},
                 {"submodel", subs[idx].id},
                 {"n_forward", c.n_forward},
                 {"seed", c.seed},
                 {"H", kde.bandwidth()(0, 0)},
                 {"dof", kde.dof()},
                 {"bandwidth_rule", to_string(c.bandwidth)},
                 {"bandwidth_factor", kde.bandwidth_factor()},
                 {"kernel_sd", h}};
  write_json(in_dir(c.out_dir, "marginal.json"), out.summary);
  out.files = {"marginal.csv", "marginal.json"};
  write_manifest(c.out_dir, "marginal-fit", c, out.files, seconds_since(t0), {{"submodel", subs[idx].id}});
  return out;
}

RunOutputs run_diagnose(const std::string& samples_csv, const std::string& out_dir) {
  const auto t0 = Clock::now();
  const SampleTable t = read_samples_csv(samples_csv);
  if (t.values.rows() < 2) throw ConfigError(samples_csv + ": need at least 2 draws");
  prepare_out_dir(out_dir);
  nlohmann::json j = {{"command", "diagnose"}, {"input", samples_csv}, {"rows", t.values.rows()}};
  j["parameters"] = nlohmann::json::array();
  for (std::size_t k = 0; k < t.columns.size(); ++k) {
    j["parameters"].push_back(to_json(summarize(t.columns[k], t.values.col(static_cast<Eigen::Index>(k)))));
  }
  RunOutputs out;
  write_json(in_dir(out_dir, "diagnostics.json"), j);
  out.files = {"diagnostics.json"};
  out.summary = j;
  RunConfig echo;
  echo.out_dir = out_dir;
  write_manifest(out_dir, "diagnose", echo, out.files, seconds_since(t0), {{"input", samples_csv}});
  return out;
}

}  // namespace meld
