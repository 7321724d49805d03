#include "meld/marginal.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <numbers>
#include <sstream>

#include "meld/errors.hpp"

namespace meld {

Matrix forward_sample_marginal(const SubmodelSpec& sub, std::size_t n, Rng& rng) {
  if (!sub.prior_sampler) throw ConfigError("submodel '" + sub.id + "' has no prior sampler");
  Matrix draws = sub.prior_sampler(rng, n);
  if (draws.rows() != static_cast<Eigen::Index>(n) || draws.cols() != sub.link_dim()) {
    throw ConfigError("prior sampler of '" + sub.id + "' returned a matrix of the wrong shape");
  }
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    if (!sub.link.contains(draws.row(i).transpose())) {
      std::ostringstream os;
      os << "prior sampler of '" << sub.id << "' produced draw " << i << " = (" << draws.row(i)
         << ") outside the link space";
      throw ConfigError(os.str());
    }
  }
  return draws;
}

std::string to_string(BandwidthRule rule) {
  switch (rule) {
    case BandwidthRule::scott:
      return "scott";
    case BandwidthRule::robust:
      return "robust";
    case BandwidthRule::fixed:
      return "fixed";
  }
  return "?";
}

BandwidthRule parse_bandwidth_rule(const std::string& name) {
  if (name == "scott") return BandwidthRule::scott;
  if (name == "robust") return BandwidthRule::robust;
  if (name == "fixed") return BandwidthRule::fixed;
  throw ConfigError("unknown bandwidth rule '" + name + "' (expected scott|robust|fixed)");
}

double scott_factor(std::size_t n, int k) {
  return std::pow(static_cast<double>(n), -1.0 / (k + 4.0));
}

namespace {

Matrix sample_cov(const Matrix& x, Vector* mean_out) {
  const Vector mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - mean.transpose();
  if (mean_out) *mean_out = mean;
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

}  // namespace

KdeEstimate kde_fit(const Matrix& samples, const KdeOptions& options) {
  const auto n = static_cast<std::size_t>(samples.rows());
  const int k = static_cast<int>(samples.cols());
  if (k < 1 || n < 1) throw ConfigError("kde_fit: empty sample matrix");
  if (!(options.dof > 0.0)) throw ConfigError("kde_fit: dof must be positive");
  if (!samples.allFinite()) throw ConfigError("kde_fit: samples contain non-finite values");

  KdeEstimate est;
  est.samples_ = samples;
  est.dof_ = options.dof;
  if (options.rule == BandwidthRule::fixed) {
    if (options.fixed_bandwidth.rows() != k || options.fixed_bandwidth.cols() != k) {
      throw ConfigError("kde_fit: fixed bandwidth has wrong shape");
    }
    est.bandwidth_ = options.fixed_bandwidth;
    est.factor_ = 1.0;
  } else {
    if (n <= static_cast<std::size_t>(k)) throw ConfigError("kde_fit: need more samples than dimensions");
    const Matrix cov = sample_cov(samples, nullptr);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const double tr = cov.trace();
    if (!(tr > 0.0) || eig.eigenvalues().minCoeff() < 1e-12 * tr) {
      throw ConfigError(
          "kde_fit: sample covariance is rank-deficient; add jitter to the draws or reduce the link dimension");
    }
    est.factor_ = scott_factor(n, k);
    Matrix spread = cov;
    if (options.rule == BandwidthRule::robust) {
      const Vector sd = cov.diagonal().array().sqrt();
      Vector capped = sd;
      for (int j = 0; j < k; ++j) {
        std::vector<double> col(samples.col(j).data(), samples.col(j).data() + samples.rows());
        std::sort(col.begin(), col.end());
        auto q = [&](double p) {
          const double h = (static_cast<double>(col.size()) - 1.0) * p;
          const auto lo = static_cast<std::size_t>(h);
          const auto hi = std::min(lo + 1, col.size() - 1);
          return col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
        };
        const double iqr = (q(0.75) - q(0.25)) / 1.349;
        if (iqr > 0.0) capped[j] = std::min(sd[j], iqr);
      }
      const Vector ratio = capped.cwiseQuotient(sd);
      spread = ratio.asDiagonal() * cov * ratio.asDiagonal();
    }
    est.bandwidth_ = est.factor_ * est.factor_ * spread;
  }
  // t kernel with covariance H has scale H (nu - 2) / nu.
  const double nu = est.dof_;
  const Matrix scale = nu > 2.0 ? Matrix(est.bandwidth_ * ((nu - 2.0) / nu)) : est.bandwidth_;
  Eigen::LLT<Matrix> llt(scale);
  if (llt.info() != Eigen::Success) throw ConfigError("kde_fit: bandwidth is not positive definite");
  est.chol_scale_ = llt.matrixL();
  est.whitened_ = est.chol_scale_.triangularView<Eigen::Lower>().solve(samples.transpose()).transpose();
  const double log_det = 2.0 * est.chol_scale_.diagonal().array().log().sum();
  est.log_kernel_const_ = std::lgamma(0.5 * (nu + k)) - std::lgamma(0.5 * nu) -
                          0.5 * k * std::log(nu * std::numbers::pi) - 0.5 * log_det;
  est.log_n_ = std::log(static_cast<double>(n));
  est.mean_ = samples.colwise().mean().transpose();
  if (n > 1) {
    est.sd_ = sample_cov(samples, nullptr).diagonal().array().sqrt();
  } else {
    est.sd_ = est.bandwidth_.diagonal().array().sqrt();
  }
  for (int j = 0; j < k; ++j) {
    if (!(est.sd_[j] > 0.0)) est.sd_[j] = std::sqrt(est.bandwidth_(j, j));
  }
  return est;
}

double KdeEstimate::log_density(const Vector& phi) const {
  const int k = dim();
  if (phi.size() != k) throw ConfigError("kde: dimension mismatch");
  const Vector z = chol_scale_.triangularView<Eigen::Lower>().solve(phi);
  const double nu = dof_;
  const double ex = -0.5 * (nu + k);
  const auto n = whitened_.rows();
  // Log-sum-exp over kernels; the largest term has the smallest distance.
  double min_d2 = kInf;
  Vector d2(n);
  if (k == 1) {
    const double z0 = z[0];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = z0 - whitened_(i, 0);
      d2[i] = d * d;
      min_d2 = std::min(min_d2, d2[i]);
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = (whitened_.row(i).transpose() - z).squaredNorm();
      min_d2 = std::min(min_d2, d2[i]);
    }
  }
  const double top = ex * std::log1p(min_d2 / nu);
  double s = 0.0;
  const double base = nu + min_d2;
  for (Eigen::Index i = 0; i < n; ++i) s += std::pow((nu + d2[i]) / base, ex);
  return log_kernel_const_ + top + std::log(s) - log_n_;
}

KdeEstimate KdeEstimate::subsampled(std::size_t n_eval, Rng& rng) const {
  if (n_eval >= size()) return *this;
  std::vector<Eigen::Index> idx(size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
  std::shuffle(idx.begin(), idx.end(), rng);
  KdeEstimate out = *this;
  out.samples_.resize(static_cast<Eigen::Index>(n_eval), dim());
  out.whitened_.resize(static_cast<Eigen::Index>(n_eval), dim());
  for (std::size_t i = 0; i < n_eval; ++i) {
    out.samples_.row(static_cast<Eigen::Index>(i)) = samples_.row(idx[i]);
    out.whitened_.row(static_cast<Eigen::Index>(i)) = whitened_.row(idx[i]);
  }
  out.log_n_ = std::log(static_cast<double>(n_eval));
  return out;
}

Density KdeEstimate::as_density(std::string label) const {
  Density::Info info;
  info.label = std::move(label);
  info.normalized = true;
  info.center = mean_;
  info.scale = sd_;
  auto self = std::make_shared<const KdeEstimate>(*this);
  info.sampler = [self](Rng& rng, std::size_t n) {
    // Smoothed bootstrap: a support point plus a t-distributed kernel draw.
    const int k = self->dim();
    std::uniform_int_distribution<Eigen::Index> pick(0, self->samples_.rows() - 1);
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi(self->dof_);
    Matrix out(static_cast<Eigen::Index>(n), k);
    Vector e(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) e[j] = z(rng);
      const double w = std::sqrt(self->dof_ / chi(rng));
      out.row(static_cast<Eigen::Index>(i)) =
          self->samples_.row(pick(rng)) + (w * (self->chol_scale_ * e)).transpose();
    }
    return out;
  };
  return Density(dim(), [self](const Vector& x) { return self->log_density(x); }, std::move(info));
}

double kde_log_density(const KdeEstimate& est, const Vector& phi) { return est.log_density(phi); }

Density tabulated_density(const Density& exact, double lo, double hi, std::size_t knots) {
  if (exact.dim() != 1) throw ConfigError("tabulated_density: scalar densities only");
  if (!(lo < hi) || knots < 2) throw ConfigError("tabulated_density: need lo < hi and >= 2 knots");
  std::vector<double> table(knots);
  const double step = (hi - lo) / static_cast<double>(knots - 1);
  for (std::size_t i = 0; i < knots; ++i) table[i] = exact.log_pdf(lo + step * static_cast<double>(i));
  Density::Info info = exact.info();
  info.label = exact.label() + "[tabulated]";
  auto eval = [table = std::move(table), lo, hi, step, exact](const Vector& x) {
    const double v = x[0];
    if (!(v >= lo && v <= hi)) return exact.log_pdf(x);
    const double pos = (v - lo) / step;
    const auto i = std::min(static_cast<std::size_t>(pos), table.size() - 2);
    const double f = pos - static_cast<double>(i);
    return (1.0 - f) * table[i] + f * table[i + 1];
  };
  return Density(1, std::move(eval), std::move(info));
}

MomentSummary moment_summary(const Matrix& samples) {
  if (samples.rows() < 2) throw ConfigError("moment_summary: need at least 2 samples");
  MomentSummary s;
  s.n = static_cast<std::size_t>(samples.rows());
  s.cov = sample_cov(samples, &s.mean);
  const double tr = s.cov.trace();
  if (!(tr > 0.0)) {
    s.degenerate = true;
    s.pd_repaired = true;
    s.cov = Matrix::Identity(samples.cols(), samples.cols()) * 1e-12;
    return s;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s.cov);
  if (eig.eigenvalues().minCoeff() < 1e-10 * tr) {
    s.pd_repaired = true;
    s.cov += Matrix::Identity(samples.cols(), samples.cols()) *
             (1e-10 * tr - std::min(0.0, eig.eigenvalues().minCoeff()));
  }
  return s;
}

}  // namespace meld
