#include "meld/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include <unsupported/Eigen/FFT>

#include "meld/errors.hpp"

namespace meld {

namespace {

// Autocorrelations rho_0..rho_{n-1} via zero-padded FFT.
std::vector<double> autocorrelation(const Vector& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::size_t len = 1;
  while (len < 2 * n) len <<= 1;
  const double mean = x.mean();
  std::vector<double> padded(len, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[static_cast<Eigen::Index>(i)] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& c : freq) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> acov;
  fft.inv(acov, freq);
  std::vector<double> rho(n);
  const double c0 = acov[0];
  for (std::size_t t = 0; t < n; ++t) rho[t] = acov[t] / c0;
  return rho;
}

double quantile_sorted(const std::vector<double>& s, double p) {
  const double h = (static_cast<double>(s.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

double effective_sample_size(const Vector& x) {
  const auto n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double var = (x.array() - x.mean()).square().sum();
  if (!(var > 0.0) || !std::isfinite(var)) return 1.0;
  const auto rho = autocorrelation(x);
  double sum = 0.0;
  double prev = kInf;
  for (std::size_t k = 0; 2 * k + 1 < rho.size(); ++k) {
    double gamma = rho[2 * k] + rho[2 * k + 1];
    if (gamma <= 0.0) break;
    gamma = std::min(gamma, prev);
    prev = gamma;
    sum += gamma;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1e-12);
  const double nd = static_cast<double>(n);
  return std::clamp(nd / tau, 1.0, nd * std::log10(nd));
}

double ancestral_ess(const Vector& x, const std::vector<std::size_t>& root_index, std::size_t root_rows) {
  const auto n = x.size();
  if (n < 2 || root_index.size() != static_cast<std::size_t>(n) || root_rows == 0) return static_cast<double>(n);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / (n - 1.0);
  if (!(var > 0.0)) return 1.0;
  // The estimate is mean(u) over stage-one order, u_i = (P/N) sum of centred draws rooted at row i.
  Vector u = Vector::Zero(static_cast<Eigen::Index>(root_rows));
  const double scale = static_cast<double>(root_rows) / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) u[static_cast<Eigen::Index>(root_index[static_cast<std::size_t>(r)])] += scale * (x[r] - mean);
  const double su2 = u.squaredNorm() / static_cast<double>(root_rows);
  if (!(su2 > 0.0)) return static_cast<double>(n);
  const double var_mean = su2 / effective_sample_size(u);
  return std::clamp(var / var_mean, 1.0, static_cast<double>(n));
}

double move_rate(const Vector& x) {
  if (x.size() < 2) return 0.0;
  Eigen::Index moves = 0;
  for (Eigen::Index i = 1; i < x.size(); ++i) moves += x[i] != x[i - 1];
  return static_cast<double>(moves) / static_cast<double>(x.size() - 1);
}

ParameterSummary summarize(const std::string& name, const Vector& x) {
  ParameterSummary s;
  s.name = name;
  if (x.size() == 0) return s;
  s.mean = x.mean();
  s.sd = x.size() > 1 ? std::sqrt((x.array() - s.mean).square().sum() / (x.size() - 1.0)) : 0.0;
  s.ess = effective_sample_size(x);
  s.mcse = s.sd / std::sqrt(s.ess);
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  s.q05 = quantile_sorted(sorted, 0.05);
  s.q50 = quantile_sorted(sorted, 0.5);
  s.q95 = quantile_sorted(sorted, 0.95);
  s.move_rate = move_rate(x);
  return s;
}

const ParameterSummary& ChainDiagnostics::parameter(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return p;
  }
  throw ConfigError("diagnostics have no parameter '" + name + "'");
}

ChainDiagnostics diagnostics(const ChainStore& chain) {
  ChainDiagnostics d;
  d.stage = chain.stage;
  d.rows = chain.rows();
  // Columns of the newest submodel at a stage >= 2 are sampled afresh.
  int fresh_from = static_cast<int>(chain.columns.size());
  if (chain.stage >= 2 && chain.blocks.size() > 1) fresh_from = chain.blocks.back().offset;
  for (std::size_t j = 0; j < chain.columns.size(); ++j) {
    const Vector x = chain.draws.col(static_cast<Eigen::Index>(j));
    auto s = summarize(chain.columns[j], x);
    if (!chain.root_index.empty() && static_cast<int>(j) < fresh_from) {
      s.ess = std::min(s.ess, ancestral_ess(x, chain.root_index, chain.root_rows));
      s.mcse = s.sd / std::sqrt(s.ess);
    }
    d.parameters.push_back(std::move(s));
  }
  d.acceptance = chain.acceptance;
  d.floor_hit_fraction = chain.eval_stats.floor_hit_fraction();
  d.unique_proposal_fraction = chain.unique_proposal_fraction;
  d.weight_ess = chain.weight_ess;
  d.warnings = chain.warnings;
  return d;
}

bool within_combined_se(double a, double se_a, double b, double se_b, double z) {
  return std::abs(a - b) <= z * std::sqrt(se_a * se_a + se_b * se_b);
}

}  // namespace meld
