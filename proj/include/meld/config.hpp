#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "meld/approximation.hpp"
#include "meld/marginal.hpp"
#include "meld/pooling.hpp"
#include "meld/sampler.hpp"

namespace meld {

// Minimal TOML subset: [section] headers, key = value with strings, numbers,
// booleans and flat arrays of those, '#' comments.
struct ConfigValue {
  using Scalar = std::variant<bool, double, std::string>;
  std::variant<bool, double, std::string, std::vector<Scalar>> value;
  int line = 0;
};

struct ConfigTable {
  std::string source;  // file name for messages
  std::map<std::string, std::map<std::string, ConfigValue>> sections;
};

ConfigTable parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigTable parse_config_file(const std::string& path);

struct RunConfig {
  std::string fixture = "gaussian-pair";
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  PoolingMode pooling = PoolingMode::poe;
  std::vector<double> weights;
  std::size_t dictator = 0;
  bool poe_shortcut = false;

  std::string sampler = "mwg";  // mwg | multistage
  std::string factorization = "root";  // root | poe_self
  std::vector<std::string> stages;
  std::size_t n_iter = 20000;
  std::size_t burn_in = 2000;
  std::size_t thin = 1;
  bool adapt = true;
  bool adapt_covariance = false;
  double link_scale = 0.0;  // 0: default from prior draws

  std::size_t n_forward = 100000;
  double dof = 4.0;
  BandwidthRule bandwidth = BandwidthRule::robust;
  std::size_t table_knots = 2048;

  ApproxVariant variant = ApproxVariant::poe;

  // [fixture] options; unknown keys are rejected per fixture.
  std::map<std::string, double> fixture_params;
  bool with_data = true;
  bool latent = false;

  SamplerConfig sampler_config() const;
};

// Throws ConfigError("<source>:<line>: ...") on schema violations.
RunConfig run_config_from_table(const ConfigTable& table);
RunConfig load_run_config(const std::string& path);

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace meld
