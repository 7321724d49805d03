#include "meld/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "meld/errors.hpp"

#ifndef MELD_VERSION
#define MELD_VERSION "0.0.0"
#endif

namespace meld {

const char* version() { return MELD_VERSION; }

void write_samples_csv(const std::string& path, const std::vector<std::string>& columns, const Matrix& values) {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols()) {
    throw ConfigError("write_samples_csv: column count mismatch");
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < columns.size(); ++j) std::fprintf(f, "%s%s", j ? "," : "", columns[j].c_str());
  std::fputc('\n', f);
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) std::fprintf(f, "%s%.17g", j ? "," : "", values(i, j));
    std::fputc('\n', f);
  }
  const bool ok = std::fclose(f) == 0;
  if (!ok) throw ConfigError("error writing '" + path + "'");
}

void write_samples_csv(const std::string& path, const ChainStore& chain) {
  write_samples_csv(path, chain.columns, chain.draws);
}

SampleTable read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open samples file '" + path + "'");
  SampleTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty samples file");
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) t.columns.push_back(col);
  }
  std::vector<double> flat;
  std::size_t rows = 0;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        flat.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      ++n;
    }
    if (n != t.columns.size()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                        " values, found " + std::to_string(n));
    }
    ++rows;
  }
  t.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = flat[i * t.columns.size() + j];
    }
  }
  return t;
}

nlohmann::json to_json(const ParameterSummary& p) {
  return {{"name", p.name}, {"mean", p.mean}, {"sd", p.sd},   {"ess", p.ess},     {"mcse", p.mcse},
          {"q05", p.q05},   {"q50", p.q50},   {"q95", p.q95}, {"move_rate", p.move_rate}};
}

nlohmann::json to_json(const ChainDiagnostics& d) {
  nlohmann::json j;
  j["stage"] = d.stage;
  j["rows"] = d.rows;
  j["parameters"] = nlohmann::json::array();
  for (const auto& p : d.parameters) j["parameters"].push_back(to_json(p));
  j["acceptance"] = nlohmann::json::array();
  for (const auto& a : d.acceptance) {
    j["acceptance"].push_back({{"block", a.name},
                               {"rate", a.rate()},
                               {"proposals", a.proposals},
                               {"accepts", a.accepts},
                               {"final_scale", a.final_scale}});
  }
  j["floor_hit_fraction"] = d.floor_hit_fraction;
  j["unique_proposal_fraction"] = d.unique_proposal_fraction;
  if (d.weight_ess) j["weight_ess"] = *d.weight_ess;
  j["warnings"] = d.warnings;
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace meld
