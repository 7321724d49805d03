#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meld/config.hpp"
#include "meld/model.hpp"

namespace meld {

// Built-in fixture ids accepted by --fixture.
const std::vector<std::string>& fixture_ids();

struct RunOutputs {
  std::vector<std::string> files;  // paths relative to the output directory
  nlohmann::json summary;          // also written as diagnostics.json or a command-specific report
};

// Each command writes its artifacts plus manifest.json into config.out_dir. On
// a sampler or model fault the diagnostics file records the error before the
// exception propagates.
RunOutputs run_meld(const RunConfig& config);
// Splits the fixture's joint model, checks the join and runs the multi-stage
// sampler on the pieces; the last stage targets the joined posterior.
RunOutputs run_split(const RunConfig& config);
RunOutputs run_approx(const RunConfig& config);

struct PoolPlotRequest {
  std::string components = "N(0,1);N(2,1)";  // ';'-separated N(mean,var)
  std::vector<std::string> modes = {"linear", "log", "poe"};
  std::vector<double> w1 = {0.25, 0.5, 0.75};
  std::optional<double> lo;
  std::optional<double> hi;
  std::size_t points = 401;
};
RunOutputs run_pool_plot(const PoolPlotRequest& request, const std::string& out_dir);

RunOutputs run_marginal_fit(const RunConfig& config, const std::string& submodel_id, std::size_t grid_points = 401);
RunOutputs run_diagnose(const std::string& samples_csv, const std::string& out_dir);

// "N(mean,var)"
Density parse_normal_component(const std::string& text);

// Melded model for a fixture, as meld-run builds it.
MeldedModel fixture_model(const RunConfig& config);

void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& config,
                    const std::vector<std::string>& outputs, double wall_seconds,
                    const nlohmann::json& extra = nlohmann::json::object());

}  // namespace meld
