#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "meld/diagnostics.hpp"
#include "meld/sampler.hpp"

namespace meld {

const char* version();

struct SampleTable {
  std::vector<std::string> columns;
  Matrix values;
};

// Header row then one row per draw, values printed with %.17g.
void write_samples_csv(const std::string& path, const std::vector<std::string>& columns, const Matrix& values);
void write_samples_csv(const std::string& path, const ChainStore& chain);
SampleTable read_samples_csv(const std::string& path);

nlohmann::json to_json(const ParameterSummary& p);
nlohmann::json to_json(const ChainDiagnostics& d);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace meld
