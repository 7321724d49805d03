#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meld/config.hpp"
#include "meld/errors.hpp"
#include "meld/io.hpp"
#include "meld/runner.hpp"

namespace {

constexpr int kExitFault = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  std::string fixture;
  std::string config;
  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string pooling;
  std::vector<double> weights;
  std::string stages;
  std::string variant;
  std::string sampler;
  std::optional<std::size_t> n_iter;
  std::optional<std::size_t> burn_in;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--fixture", f.fixture, "built-in fixture id");
  cmd->add_option("--config", f.config, "run config file (TOML subset)");
  cmd->add_option("--manifest", f.manifest, "re-run the configuration recorded in a manifest.json");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--pooling", f.pooling, "linear | log | poe | dictatorial");
  cmd->add_option("--weights", f.weights, "pooling weights, comma separated")->delimiter(',');
  cmd->add_option("--stages", f.stages, "stage order as comma separated submodel ids");
  cmd->add_option("--variant", f.variant, "normal approximation variant: poe | dictatorial");
  cmd->add_option("--sampler", f.sampler, "mwg | multistage");
  cmd->add_option("--n-iter", f.n_iter, "iterations per chain");
  cmd->add_option("--burn-in", f.burn_in, "burn-in iterations");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

meld::RunConfig resolve(const CommonFlags& f, nlohmann::json* manifest_out = nullptr) {
  meld::RunConfig c;
  if (!f.manifest.empty()) {
    const auto m = meld::read_json(f.manifest);
    if (!m.contains("config")) throw meld::ConfigError(f.manifest + ": no config recorded");
    c = meld::run_config_from_json(m.at("config"));
    if (manifest_out) *manifest_out = m;
  } else if (!f.config.empty()) {
    c = meld::load_run_config(f.config);
  }
  if (!f.fixture.empty()) c.fixture = f.fixture;
  if (f.seed) c.seed = *f.seed;
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (!f.pooling.empty()) c.pooling = meld::parse_pooling_mode(f.pooling);
  if (!f.weights.empty()) c.weights = f.weights;
  if (!f.stages.empty()) c.stages = split_list(f.stages);
  if (!f.variant.empty()) c.variant = meld::parse_approx_variant(f.variant);
  if (!f.sampler.empty()) {
    if (f.sampler != "mwg" && f.sampler != "multistage") throw meld::ConfigError("--sampler: mwg or multistage");
    c.sampler = f.sampler;
  }
  if (f.n_iter) c.n_iter = *f.n_iter;
  if (f.burn_in) c.burn_in = *f.burn_in;
  c.sampler_config().validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov melding of Bayesian submodels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", meld::version());

  CommonFlags run_flags, split_flags, approx_flags, fit_flags;
  auto* run_cmd = app.add_subcommand("meld-run", "sample a melded fixture model");
  add_common(run_cmd, run_flags);
  auto* split_cmd = app.add_subcommand("split-run", "split a joint fixture, verify the join and sample it");
  add_common(split_cmd, split_flags);
  auto* approx_cmd = app.add_subcommand("approx-run", "normal two-stage approximation");
  add_common(approx_cmd, approx_flags);

  auto* fit_cmd = app.add_subcommand("marginal-fit", "forward-sample a submodel prior on phi and fit a KDE");
  add_common(fit_cmd, fit_flags);
  std::string fit_submodel;
  std::size_t fit_points = 401;
  fit_cmd->add_option("--submodel", fit_submodel, "submodel id (default: first)");
  fit_cmd->add_option("--points", fit_points, "grid points in marginal.csv");

  meld::PoolPlotRequest plot;
  std::string plot_modes = "linear,log,poe";
  std::string plot_out = "out";
  std::optional<double> plot_from, plot_to;
  auto* plot_cmd = app.add_subcommand("pool-plot", "tabulate pooled densities of normal components");
  plot_cmd->add_option("--components", plot.components, "';'-separated list of N(mean,var)");
  plot_cmd->add_option("--modes", plot_modes, "comma separated pooling modes");
  plot_cmd->add_option("--w1", plot.w1, "weights of the first component")->delimiter(',');
  plot_cmd->add_option("--from", plot_from, "grid start");
  plot_cmd->add_option("--to", plot_to, "grid end");
  plot_cmd->add_option("--points", plot.points, "grid points");
  plot_cmd->add_option("--out-dir", plot_out, "output directory");

  std::string diag_input, diag_out = "out";
  auto* diag_cmd = app.add_subcommand("diagnose", "summaries and ESS for a samples CSV");
  diag_cmd->add_option("--input", diag_input, "samples CSV")->required();
  diag_cmd->add_option("--out-dir", diag_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == run_cmd) {
      meld::run_meld(resolve(run_flags));
    } else if (active == split_cmd) {
      meld::run_split(resolve(split_flags));
    } else if (active == approx_cmd) {
      meld::run_approx(resolve(approx_flags));
    } else if (active == fit_cmd) {
      nlohmann::json m;
      const auto cfg = resolve(fit_flags, &m);
      if (fit_submodel.empty() && m.contains("submodel")) fit_submodel = m["submodel"].get<std::string>();
      meld::run_marginal_fit(cfg, fit_submodel, fit_points);
    } else if (active == plot_cmd) {
      plot.modes = split_list(plot_modes);
      plot.lo = plot_from;
      plot.hi = plot_to;
      meld::run_pool_plot(plot, plot_out);
    } else if (active == diag_cmd) {
      meld::run_diagnose(diag_input, diag_out);
    }
  } catch (const meld::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "fault: " << e.what() << '\n';
    return kExitFault;
  }
  return 0;
}
