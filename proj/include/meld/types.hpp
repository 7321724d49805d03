#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace meld {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// All samplers draw from this engine; seeds are 64-bit integers.
using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Estimated log-marginals below this value are treated as -inf (marginal-floor hit).
inline constexpr double kLogDensityFloor = -690.7755278982137;  // log(1e-300)

// Counters updated by evaluators. Owned by the caller so that models stay immutable.
struct EvalStats {
  std::uint64_t evaluations = 0;
  std::uint64_t floor_hits = 0;

  double floor_hit_fraction() const {
    return evaluations == 0 ? 0.0
                            : static_cast<double>(floor_hits) / static_cast<double>(evaluations);
  }
  EvalStats& operator+=(const EvalStats& o) {
    evaluations += o.evaluations;
    floor_hits += o.floor_hits;
    return *this;
  }
};

}  // namespace meld
