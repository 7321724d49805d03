#include "meld/density.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "meld/errors.hpp"

namespace meld {

Density::Density(int dim, LogPdf log_pdf, Info info)
    : dim_(dim), log_pdf_(std::move(log_pdf)), info_(std::move(info)) {
  if (dim_ < 1) throw ConfigError("density needs dim >= 1");
  if (!log_pdf_) throw ConfigError("density needs an evaluator");
  if (info_.scale.size() == dim_ && (info_.scale.array() <= 0.0).any()) {
    throw ConfigError("density scale hint must be positive");
  }
}

double Density::pdf(const Vector& phi) const { return std::exp(log_pdf(phi)); }

double Density::log_pdf(double phi) const {
  Vector x(1);
  x[0] = phi;
  return log_pdf_(x);
}

Matrix Density::sample(Rng& rng, std::size_t n) const {
  if (!info_.sampler) throw ConfigError("density '" + info_.label + "' has no sampler");
  return info_.sampler(rng, n);
}

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double log_mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ConfigError("covariance is not positive definite");
  const Vector z = llt.matrixL().solve(x - mean);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double k = static_cast<double>(x.size());
  return -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
}

Density gaussian_density(const Vector& mean, const Matrix& cov, std::string label) {
  const int k = static_cast<int>(mean.size());
  if (cov.rows() != k || cov.cols() != k) throw ConfigError("gaussian_density: dimension mismatch");
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw ConfigError("gaussian_density: covariance not PD");
  const Matrix L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const double log_const = -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det);

  Density::Info info;
  info.label = label.empty() ? "gaussian" : std::move(label);
  info.normalized = true;
  info.center = mean;
  info.scale = cov.diagonal().array().sqrt();
  info.gaussian = GaussianForm{mean, cov};
  info.sampler = [mean, L](Rng& rng, std::size_t n) {
    std::normal_distribution<double> z;
    Matrix out(static_cast<Eigen::Index>(n), mean.size());
    Vector e(mean.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = z(rng);
      out.row(static_cast<Eigen::Index>(i)) = (mean + L * e).transpose();
    }
    return out;
  };
  auto eval = [mean, L, log_const](const Vector& x) {
    if (x.size() != mean.size()) throw ConfigError("gaussian density: dimension mismatch");
    const Vector z = L.triangularView<Eigen::Lower>().solve(x - mean);
    return log_const - 0.5 * z.squaredNorm();
  };
  return Density(k, std::move(eval), std::move(info));
}

Density normal_density(double mean, double var, std::string label) {
  if (!(var > 0.0)) throw ConfigError("normal_density: variance must be positive");
  Vector m(1);
  m[0] = mean;
  Matrix c(1, 1);
  c(0, 0) = var;
  if (label.empty()) {
    std::ostringstream os;
    os << "N(" << mean << "," << var << ")";
    label = os.str();
  }
  Density g = gaussian_density(m, c, label);
  // Scalar fast path with the same metadata.
  Density::Info info = g.info();
  auto eval = [mean, var](const Vector& x) { return log_normal_pdf(x[0], mean, var); };
  return Density(1, std::move(eval), std::move(info));
}

Box covering_box(const std::vector<Density>& densities, const LinkSpace& space, double width) {
  const int k = space.dim();
  Box box{Vector::Constant(k, kInf), Vector::Constant(k, -kInf)};
  for (const auto& d : densities) {
    if (d.dim() != k) throw ConfigError("covering_box: dimension mismatch");
    if (!d.has_scale_hint()) {
      throw ConfigError("density '" + d.label() + "' has no location/scale hint");
    }
    box.lo = box.lo.cwiseMin(d.center() - width * d.scale());
    box.hi = box.hi.cwiseMax(d.center() + width * d.scale());
  }
  for (int j = 0; j < k; ++j) {
    const auto& b = space[j];
    box.lo[j] = std::max(box.lo[j], b.lo);
    box.hi[j] = std::min(box.hi[j], b.hi);
    if (b.is_lattice()) {
      box.lo[j] = std::ceil(box.lo[j]);
      box.hi[j] = std::floor(box.hi[j]);
    }
    if (box.lo[j] > box.hi[j]) throw ConfigError("covering_box: empty box");
  }
  return box;
}

}  // namespace meld
