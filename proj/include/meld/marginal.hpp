#pragma once

#include <optional>
#include <string>

#include "meld/density.hpp"
#include "meld/model.hpp"
#include "meld/types.hpp"

namespace meld {

// n i.i.d. draws of phi from the submodel prior (through phi(theta) for
// deterministic links). Throws ConfigError naming the first draw outside the
// link space.
Matrix forward_sample_marginal(const SubmodelSpec& sub, std::size_t n, Rng& rng);

// scott: n^(-1/(k+4)) times the sample covariance Cholesky factor.
// robust: as scott, with each coordinate's spread capped at IQR/1.349 so that
// heavy tails do not oversmooth the body.
enum class BandwidthRule { scott, robust, fixed };

std::string to_string(BandwidthRule rule);
BandwidthRule parse_bandwidth_rule(const std::string& name);

struct KdeOptions {
  double dof = 4.0;
  BandwidthRule rule = BandwidthRule::scott;
  Matrix fixed_bandwidth;  // kernel covariance H for BandwidthRule::fixed
};

// Kernel density estimate with a multivariate t kernel whose covariance is H.
// The Scott rule sets H = n^(-2/(k+4)) * sample covariance.
class KdeEstimate {
 public:
  int dim() const { return static_cast<int>(samples_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
  const Matrix& samples() const { return samples_; }
  const Matrix& bandwidth() const { return bandwidth_; }
  double dof() const { return dof_; }
  double bandwidth_factor() const { return factor_; }

  double log_density(const Vector& phi) const;

  // Estimate restricted to a uniform without-replacement subsample of n_eval
  // support points; same bandwidth.
  KdeEstimate subsampled(std::size_t n_eval, Rng& rng) const;

  Density as_density(std::string label = "kde") const;

 private:
  friend KdeEstimate kde_fit(const Matrix& samples, const KdeOptions& options);

  Matrix samples_;
  Matrix bandwidth_;
  Matrix chol_scale_;  // lower Cholesky factor of the t scale matrix
  Matrix whitened_;    // samples mapped through chol_scale_^{-1}, one row per draw
  double dof_ = 4.0;
  double factor_ = 1.0;
  double log_kernel_const_ = 0.0;
  double log_n_ = 0.0;
  Vector mean_;
  Vector sd_;
};

KdeEstimate kde_fit(const Matrix& samples, const KdeOptions& options = {});
double kde_log_density(const KdeEstimate& est, const Vector& phi);

// Scott factor n^(-1/(k+4)).
double scott_factor(std::size_t n, int k);

// Piecewise-linear table of a 1-D log density on [lo, hi], evaluated exactly
// outside. Trades accuracy for O(1) queries in sampler inner loops.
Density tabulated_density(const Density& exact, double lo, double hi, std::size_t knots);

struct MomentSummary {
  Vector mean;
  Matrix cov;
  std::size_t n = 0;
  bool pd_repaired = false;
  bool degenerate = false;  // covariance was numerically zero
};

MomentSummary moment_summary(const Matrix& samples);

}  // namespace meld
