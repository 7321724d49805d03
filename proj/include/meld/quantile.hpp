#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "meld/model.hpp"
#include "meld/types.hpp"

namespace meld {

// Continuous scalar distribution with density, CDF and quantile function.
class ScalarDistribution {
 public:
  virtual ~ScalarDistribution() = default;
  virtual double log_pdf(double x) const = 0;
  virtual double cdf(double x) const = 0;
  virtual double quantile(double u) const = 0;
  virtual std::string label() const = 0;
};

std::shared_ptr<const ScalarDistribution> normal_distribution(double mean, double sd);

// Empirical CDF from forward draws: linear interpolation through `knots`
// order-statistic knots with exponential tails beyond the extremes. Tied
// knots throw NormalizationError asking for more samples.
std::shared_ptr<const ScalarDistribution> empirical_distribution(std::vector<double> draws,
                                                                 std::size_t knots = 2048);

// Q(phi) = source^{-1}(target(phi)).
class QuantileTransform {
 public:
  QuantileTransform(std::shared_ptr<const ScalarDistribution> source,
                    std::shared_ptr<const ScalarDistribution> target, std::vector<double> grid);

  double operator()(double phi) const;
  const std::vector<double>& grid() const { return grid_; }
  const ScalarDistribution& source() const { return *source_; }
  const ScalarDistribution& target() const { return *target_; }

 private:
  std::shared_ptr<const ScalarDistribution> source_;
  std::shared_ptr<const ScalarDistribution> target_;
  std::vector<double> grid_;
};

// Evaluator of log p_pool(phi) + sum_m log p_m(psi_m, y_m | Q_m(phi)) for a
// scalar link, where the conditional is log_joint minus the submodel's own log
// marginal. psi_all holds one latent vector per submodel.
using TransformedLogDensity = std::function<double(double phi, const std::vector<Vector>& psi_all)>;

TransformedLogDensity quantile_transform_meld(std::vector<SubmodelSpec> submodels,
                                              std::vector<std::shared_ptr<const ScalarDistribution>> marginals,
                                              std::shared_ptr<const ScalarDistribution> pool,
                                              std::vector<double> grid);

}  // namespace meld
