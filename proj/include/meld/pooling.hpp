#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meld/density.hpp"
#include "meld/link_space.hpp"

namespace meld {

enum class PoolingMode { linear, log, poe, dictatorial };

enum class NormMethod { automatic, analytic, quadrature, monte_carlo, exact };

std::string to_string(PoolingMode mode);
std::string to_string(NormMethod method);
PoolingMode parse_pooling_mode(const std::string& name);

struct Normalization {
  double log_norm = 0.0;
  double error = 0.0;  // estimated standard error of log_norm
  NormMethod method = NormMethod::quadrature;
};

struct NormalizeOptions {
  NormMethod method = NormMethod::automatic;
  double rel_tolerance = 1e-10;   // quadrature refinement target
  double max_rel_error = 1e-3;    // above this the result is a fault
  std::size_t mc_samples = 100000;
  std::uint64_t mc_seed = 20170101;
  // Ratio of integrand at a box face to its peak above which the box is deemed
  // too small (integrand not decaying: likely non-integrable).
  double edge_ratio = 1e-7;
};

// Integrates exp(log_unnormalized) over `box` within `space`. Quadrature is
// used for dim <= 2 (lattice coordinates are summed), Monte Carlo beyond via
// `proposal`, a normalized density with a sampler.
Normalization normalize(const Density::LogPdf& log_unnormalized, const LinkSpace& space,
                        const Box& box, const NormalizeOptions& options = {},
                        const Density* proposal = nullptr);

struct PoolOptions {
  std::size_t dictator = 0;  // index m0 for dictatorial pooling
  std::optional<LinkSpace> space;  // defaults to the real line
  double box_width = 10.0;         // multiples of component scale hints
  NormalizeOptions normalize;
};

// Normalized pooled density g(p_1, ..., p_M).
class PooledPrior {
 public:
  PoolingMode mode() const { return mode_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t dictator() const { return dictator_; }
  const std::vector<Density>& components() const { return components_; }
  double log_norm() const { return log_norm_; }
  double norm_error() const { return norm_error_; }
  NormMethod norm_method() const { return norm_method_; }
  int dim() const { return space_.dim(); }
  const LinkSpace& space() const { return space_; }
  const std::optional<GaussianForm>& gaussian() const { return gaussian_; }

  double log_unnormalized(const Vector& phi) const;
  double log_density(const Vector& phi) const { return log_unnormalized(phi) - log_norm_; }
  Density as_density(std::string label = {}) const;
  std::string describe() const;

 private:
  friend PooledPrior pool(PoolingMode, std::vector<Density>, std::vector<double>, const PoolOptions&);

  PoolingMode mode_ = PoolingMode::poe;
  std::vector<double> weights_;
  std::size_t dictator_ = 0;
  std::vector<Density> components_;
  LinkSpace space_;
  double log_norm_ = 0.0;
  double norm_error_ = 0.0;
  NormMethod norm_method_ = NormMethod::exact;
  std::optional<GaussianForm> gaussian_;
  Vector center_;
  Vector scale_;
};

PooledPrior pool(PoolingMode mode, std::vector<Density> components, std::vector<double> weights = {},
                 const PoolOptions& options = {});

double log_pooled_density(const PooledPrior& pooled, const Vector& phi);

// Closed form of the (weighted) log pool of Gaussians, if it is integrable.
struct GaussianPool {
  GaussianForm form;
  double log_norm;
};
std::optional<GaussianPool> gaussian_log_pool(const std::vector<GaussianForm>& components,
                                              const std::vector<double>& weights);

}  // namespace meld
