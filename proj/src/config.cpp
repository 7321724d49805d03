#include "meld/config.hpp"

#include <cctype>
#include <cmath>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "meld/errors.hpp"

namespace meld {

namespace {

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

ConfigValue::Scalar parse_scalar(const std::string& raw, const std::string& source, int line) {
  const std::string t = trim(raw);
  if (t.empty()) fail(source, line, "missing value");
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') fail(source, line, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < t.size(); ++i) {
      if (t[i] == '\\' && i + 2 < t.size()) {
        const char c = t[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += t[i];
      }
    }
    return out;
  }
  if (t == "true") return true;
  if (t == "false") return false;
  std::string digits;
  for (char c : t) {
    if (c != '_') digits += c;
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) {
    fail(source, line, "cannot parse value '" + t + "' (strings need double quotes)");
  }
  return v;
}

std::vector<std::string> split_array(const std::string& body, const std::string& source, int line) {
  std::vector<std::string> parts;
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (in_str) fail(source, line, "unterminated string in array");
  if (!trim(cur).empty()) parts.push_back(cur);
  return parts;
}

}  // namespace

ConfigTable parse_config_text(const std::string& text, const std::string& source) {
  ConfigTable table;
  table.source = source;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) fail(source, line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (table.sections.count(section)) fail(source, line, "duplicate section [" + section + "]");
      table.sections[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(source, line, "expected key = value");
    if (section.empty()) fail(source, line, "key outside of any [section]");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) fail(source, line, "empty key");
    for (char c : key) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) {
        fail(source, line, "invalid key '" + key + "'");
      }
    }
    auto& sec = table.sections[section];
    if (sec.count(key)) fail(source, line, "duplicate key '" + key + "' in [" + section + "]");
    const std::string rhs = trim(s.substr(eq + 1));
    ConfigValue v;
    v.line = line;
    if (!rhs.empty() && rhs.front() == '[') {
      if (rhs.back() != ']') fail(source, line, "unterminated array");
      std::vector<ConfigValue::Scalar> items;
      for (const auto& part : split_array(rhs.substr(1, rhs.size() - 2), source, line)) {
        items.push_back(parse_scalar(part, source, line));
      }
      v.value = std::move(items);
    } else {
      std::visit([&](auto&& x) { v.value = x; }, parse_scalar(rhs, source, line));
    }
    sec[key] = std::move(v);
  }
  return table;
}

ConfigTable parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

SamplerConfig RunConfig::sampler_config() const {
  SamplerConfig c;
  c.n_iter = n_iter;
  c.burn_in = burn_in;
  c.thin = thin;
  c.rng_seed = seed;
  c.adapt = adapt;
  c.adapt_covariance = adapt_covariance;
  c.stage_order = stages;
  if (link_scale > 0.0) c.proposal_scales = {{link_scale}};
  return c;
}

namespace {

class Reader {
 public:
  Reader(const ConfigTable& t, const std::string& section) : t_(t), section_(section) {
    const auto it = t.sections.find(section);
    if (it != t.sections.end()) sec_ = &it->second;
  }

  const ConfigValue* find(const std::string& key) {
    used_.insert(key);
    if (!sec_) return nullptr;
    const auto it = sec_->find(key);
    return it == sec_->end() ? nullptr : &it->second;
  }

  [[noreturn]] void bad(const ConfigValue& v, const std::string& key, const std::string& want) const {
    fail(t_.source, v.line, "[" + section_ + "] " + key + ": expected " + want);
  }

  void str(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) {
      const auto* s = std::get_if<std::string>(&v->value);
      if (!s) bad(*v, key, "a string");
      out = *s;
    }
  }

  void num(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      const auto* d = std::get_if<double>(&v->value);
      if (!d) bad(*v, key, "a number");
      out = *d;
    }
  }

  void count(const std::string& key, std::size_t& out, std::size_t min = 0) {
    if (const auto* v = find(key)) {
      const auto* d = std::get_if<double>(&v->value);
      if (!d || *d < static_cast<double>(min) || *d != std::floor(*d)) {
        bad(*v, key, "an integer >= " + std::to_string(min));
      }
      out = static_cast<std::size_t>(*d);
    }
  }

  void flag(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      const auto* b = std::get_if<bool>(&v->value);
      if (!b) bad(*v, key, "true or false");
      out = *b;
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const auto* v = find(key)) {
      const auto* arr = std::get_if<std::vector<ConfigValue::Scalar>>(&v->value);
      if (!arr) bad(*v, key, "an array of numbers");
      out.clear();
      for (const auto& x : *arr) {
        const auto* d = std::get_if<double>(&x);
        if (!d) bad(*v, key, "an array of numbers");
        out.push_back(*d);
      }
    }
  }

  void strings(const std::string& key, std::vector<std::string>& out) {
    if (const auto* v = find(key)) {
      const auto* arr = std::get_if<std::vector<ConfigValue::Scalar>>(&v->value);
      if (!arr) bad(*v, key, "an array of strings");
      out.clear();
      for (const auto& x : *arr) {
        const auto* s = std::get_if<std::string>(&x);
        if (!s) bad(*v, key, "an array of strings");
        out.push_back(*s);
      }
    }
  }

  template <class F>
  void parsed(const std::string& key, F&& parse) {
    if (const auto* v = find(key)) {
      const auto* s = std::get_if<std::string>(&v->value);
      if (!s) bad(*v, key, "a string");
      try {
        parse(*s);
      } catch (const ConfigError& e) {
        fail(t_.source, v->line, "[" + section_ + "] " + key + ": " + e.what());
      }
    }
  }

  void reject_unknown() const {
    if (!sec_) return;
    for (const auto& [key, v] : *sec_) {
      if (!used_.count(key)) fail(t_.source, v.line, "unknown key '" + key + "' in [" + section_ + "]");
    }
  }

 private:
  const ConfigTable& t_;
  std::string section_;
  const std::map<std::string, ConfigValue>* sec_ = nullptr;
  std::set<std::string> used_;
};

const std::set<std::string> kFixtureParams = {"prior_mean1", "prior_var1", "prior_mean2", "prior_var2", "y1",
                                              "y2",          "obs_var",    "batches",     "aux_mean",   "aux_var"};

}  // namespace

RunConfig run_config_from_table(const ConfigTable& t) {
  static const std::set<std::string> known = {"run", "pooling", "sampler", "marginals", "approx", "fixture"};
  for (const auto& [name, sec] : t.sections) {
    if (!known.count(name)) {
      const int line = sec.empty() ? 0 : sec.begin()->second.line;
      fail(t.source, line, "unknown section [" + name + "]");
    }
  }
  RunConfig c;
  {
    Reader r(t, "run");
    r.str("fixture", c.fixture);
    double seed = static_cast<double>(c.seed);
    if (const auto* v = r.find("seed")) {
      const auto* d = std::get_if<double>(&v->value);
      if (!d || *d < 0 || *d != std::floor(*d)) r.bad(*v, "seed", "a non-negative integer");
      seed = *d;
    }
    c.seed = static_cast<std::uint64_t>(seed);
    r.str("out_dir", c.out_dir);
    r.reject_unknown();
  }
  {
    Reader r(t, "pooling");
    r.parsed("mode", [&](const std::string& s) { c.pooling = parse_pooling_mode(s); });
    r.numbers("weights", c.weights);
    r.count("dictator", c.dictator);
    r.flag("poe_shortcut", c.poe_shortcut);
    r.reject_unknown();
  }
  {
    Reader r(t, "sampler");
    r.parsed("kind", [&](const std::string& s) {
      if (s != "mwg" && s != "multistage") throw ConfigError("expected \"mwg\" or \"multistage\"");
      c.sampler = s;
    });
    r.parsed("factorization", [&](const std::string& s) {
      if (s != "root" && s != "poe_self") throw ConfigError("expected \"root\" or \"poe_self\"");
      c.factorization = s;
    });
    r.strings("stages", c.stages);
    r.count("n_iter", c.n_iter);
    r.count("burn_in", c.burn_in);
    r.count("thin", c.thin, 1);
    r.flag("adapt", c.adapt);
    r.flag("adapt_covariance", c.adapt_covariance);
    r.num("link_scale", c.link_scale);
    r.reject_unknown();
  }
  {
    Reader r(t, "marginals");
    r.count("n_forward", c.n_forward, 2);
    r.num("dof", c.dof);
    r.parsed("bandwidth", [&](const std::string& s) { c.bandwidth = parse_bandwidth_rule(s); });
    r.count("table_knots", c.table_knots, 2);
    r.reject_unknown();
  }
  {
    Reader r(t, "approx");
    r.parsed("variant", [&](const std::string& s) { c.variant = parse_approx_variant(s); });
    r.reject_unknown();
  }
  {
    Reader r(t, "fixture");
    r.flag("with_data", c.with_data);
    r.flag("latent", c.latent);
    for (const auto& key : kFixtureParams) {
      double v = 0.0;
      if (r.find(key)) {
        r.num(key, v);
        c.fixture_params[key] = v;
      }
    }
    r.reject_unknown();
  }
  try {
    c.sampler_config().validate();
  } catch (const ConfigError& e) {
    fail(t.source, 0, std::string("[sampler] ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) { return run_config_from_table(parse_config_file(path)); }

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["run"] = {{"fixture", c.fixture}, {"seed", c.seed}, {"out_dir", c.out_dir}};
  j["pooling"] = {{"mode", to_string(c.pooling)},
                  {"weights", c.weights},
                  {"dictator", c.dictator},
                  {"poe_shortcut", c.poe_shortcut}};
  j["sampler"] = {{"kind", c.sampler},     {"factorization", c.factorization}, {"stages", c.stages},
                  {"n_iter", c.n_iter},    {"burn_in", c.burn_in},             {"thin", c.thin},
                  {"adapt", c.adapt},      {"adapt_covariance", c.adapt_covariance},
                  {"link_scale", c.link_scale}};
  j["marginals"] = {{"n_forward", c.n_forward},
                    {"dof", c.dof},
                    {"bandwidth", to_string(c.bandwidth)},
                    {"table_knots", c.table_knots}};
  j["approx"] = {{"variant", to_string(c.variant)}};
  nlohmann::json fx = {{"with_data", c.with_data}, {"latent", c.latent}};
  for (const auto& [k, v] : c.fixture_params) fx[k] = v;
  j["fixture"] = fx;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  try {
    RunConfig c;
    const auto& run = j.at("run");
    c.fixture = run.at("fixture").get<std::string>();
    c.seed = run.at("seed").get<std::uint64_t>();
    c.out_dir = run.at("out_dir").get<std::string>();
    const auto& p = j.at("pooling");
    c.pooling = parse_pooling_mode(p.at("mode").get<std::string>());
    c.weights = p.at("weights").get<std::vector<double>>();
    c.dictator = p.at("dictator").get<std::size_t>();
    c.poe_shortcut = p.at("poe_shortcut").get<bool>();
    const auto& s = j.at("sampler");
    c.sampler = s.at("kind").get<std::string>();
    c.factorization = s.at("factorization").get<std::string>();
    c.stages = s.at("stages").get<std::vector<std::string>>();
    c.n_iter = s.at("n_iter").get<std::size_t>();
    c.burn_in = s.at("burn_in").get<std::size_t>();
    c.thin = s.at("thin").get<std::size_t>();
    c.adapt = s.at("adapt").get<bool>();
    c.adapt_covariance = s.at("adapt_covariance").get<bool>();
    c.link_scale = s.at("link_scale").get<double>();
    const auto& m = j.at("marginals");
    c.n_forward = m.at("n_forward").get<std::size_t>();
    c.dof = m.at("dof").get<double>();
    c.bandwidth = parse_bandwidth_rule(m.at("bandwidth").get<std::string>());
    c.table_knots = m.at("table_knots").get<std::size_t>();
    c.variant = parse_approx_variant(j.at("approx").at("variant").get<std::string>());
    const auto& fx = j.at("fixture");
    for (auto it = fx.begin(); it != fx.end(); ++it) {
      if (it.key() == "with_data") {
        c.with_data = it->get<bool>();
      } else if (it.key() == "latent") {
        c.latent = it->get<bool>();
      } else if (kFixtureParams.count(it.key())) {
        c.fixture_params[it.key()] = it->get<double>();
      } else {
        throw ConfigError("unknown fixture key '" + it.key() + "'");
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest config: ") + e.what());
  }
}

}  // namespace meld
