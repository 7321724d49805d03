#pragma once

#include <functional>
#include <optional>
#include <string>

#include "meld/link_space.hpp"
#include "meld/types.hpp"

namespace meld {

struct GaussianForm {
  Vector mean;
  Matrix cov;
};

// A log-density handle over the link parameter.
//
// Besides the evaluator a handle carries metadata used by normalization and
// plotting: a location/scale hint per coordinate, whether the density is known
// to integrate to one, an optional closed Gaussian form, and an optional
// forward sampler.
class Density {
 public:
  using LogPdf = std::function<double(const Vector&)>;
  using Sampler = std::function<Matrix(Rng&, std::size_t)>;

  struct Info {
    std::string label;
    bool normalized = false;
    Vector center;  // per-coordinate location hint
    Vector scale;   // per-coordinate spread hint (sd-like), all > 0
    std::optional<GaussianForm> gaussian;
    Sampler sampler;
  };

  Density() = default;
  Density(int dim, LogPdf log_pdf, Info info);

  double log_pdf(const Vector& phi) const { return log_pdf_(phi); }
  double pdf(const Vector& phi) const;
  double log_pdf(double phi) const;  // dim == 1 convenience

  int dim() const { return dim_; }
  const std::string& label() const { return info_.label; }
  bool normalized() const { return info_.normalized; }
  bool has_scale_hint() const { return info_.center.size() == dim_ && info_.scale.size() == dim_; }
  const Vector& center() const { return info_.center; }
  const Vector& scale() const { return info_.scale; }
  const std::optional<GaussianForm>& gaussian() const { return info_.gaussian; }
  bool has_sampler() const { return static_cast<bool>(info_.sampler); }
  Matrix sample(Rng& rng, std::size_t n) const;
  const Info& info() const { return info_; }
  const LogPdf& evaluator() const { return log_pdf_; }

 private:
  int dim_ = 0;
  LogPdf log_pdf_;
  Info info_;
};

double log_normal_pdf(double x, double mean, double var);
double log_mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov);

// Multivariate normal N(mean, cov) with analytic form, sampler and scale hints.
Density gaussian_density(const Vector& mean, const Matrix& cov, std::string label = {});
// Scalar N(mean, var); note the second argument is a variance.
Density normal_density(double mean, double var, std::string label = {});

// Box covering center +/- width*scale of every density, clipped to the space.
Box covering_box(const std::vector<Density>& densities, const LinkSpace& space, double width);

}  // namespace meld
