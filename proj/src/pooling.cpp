#include "meld/pooling.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "meld/errors.hpp"

namespace meld {

std::string to_string(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::linear:
      return "linear";
    case PoolingMode::log:
      return "log";
    case PoolingMode::poe:
      return "poe";
    case PoolingMode::dictatorial:
      return "dictatorial";
  }
  return "?";
}

std::string to_string(NormMethod method) {
  switch (method) {
    case NormMethod::automatic:
      return "automatic";
    case NormMethod::analytic:
      return "analytic";
    case NormMethod::quadrature:
      return "quadrature";
    case NormMethod::monte_carlo:
      return "self-normalized-mc";
    case NormMethod::exact:
      return "exact";
  }
  return "?";
}

PoolingMode parse_pooling_mode(const std::string& name) {
  if (name == "linear") return PoolingMode::linear;
  if (name == "log") return PoolingMode::log;
  if (name == "poe") return PoolingMode::poe;
  if (name == "dictatorial") return PoolingMode::dictatorial;
  throw ConfigError("unknown pooling mode '" + name + "' (expected linear|log|poe|dictatorial)");
}

namespace {

using boost::math::quadrature::gauss_kronrod;

constexpr int kQuadDepth = 18;
constexpr std::size_t kMaxLatticePoints = 10'000'000;

double log_sum_exp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Evaluation points spanning [lo, hi]: lattice points or an equispaced scan.
std::vector<double> scan_points(const CoordinateBound& b, double lo, double hi, int n) {
  std::vector<double> pts;
  if (b.is_lattice()) {
    const double count = hi - lo + 1.0;
    const double step = std::max(1.0, std::floor(count / n));
    for (double x = lo; x <= hi; x += step) pts.push_back(x);
    if (pts.back() != hi) pts.push_back(hi);
  } else {
    for (int i = 0; i < n; ++i) pts.push_back(lo + (hi - lo) * i / (n - 1));
  }
  return pts;
}

struct Integrator {
  const Density::LogPdf& f;
  const LinkSpace& space;
  const Box& box;
  double shift;
  double tol;
  double max_inner_rel_err = 0.0;

  double eval(const Vector& x) const {
    const double v = f(x);
    if (std::isnan(v)) throw NormalizationError("integrand evaluated to NaN");
    return std::exp(v - shift);
  }

  // Integral over coordinate j with coordinates < j fixed in x.
  double integrate_coord(Vector& x, int j, double* abs_err) {
    const auto& b = space[j];
    const double lo = box.lo[j];
    const double hi = box.hi[j];
    const bool last = (j + 1 == box.dim());
    auto g = [&](double t) {
      Vector y = x;
      y[j] = t;
      if (last) return eval(y);
      double e = 0.0;
      const double v = integrate_coord(y, j + 1, &e);
      if (v > 0.0) max_inner_rel_err = std::max(max_inner_rel_err, e / v);
      return v;
    };
    if (b.is_lattice()) {
      const double count = hi - lo + 1.0;
      if (count > static_cast<double>(kMaxLatticePoints)) {
        throw NormalizationError("lattice too large to sum");
      }
      double s = 0.0;
      for (double t = lo; t <= hi; t += 1.0) s += g(t);
      *abs_err = 0.0;
      return s;
    }
    double err = 0.0;
    const double v = gauss_kronrod<double, 31>::integrate(g, lo, hi, kQuadDepth, tol, &err);
    *abs_err = err;
    return v;
  }
};

Normalization normalize_quadrature(const Density::LogPdf& f, const LinkSpace& space, const Box& box,
                                   const NormalizeOptions& opt) {
  const int k = box.dim();
  if (k > 2) throw NormalizationError("quadrature normalization supports dim <= 2");

  // Peak estimate from a coarse scan; also serves as the zero-mass check.
  constexpr int kScan = 65;
  std::vector<std::vector<double>> axes;
  for (int j = 0; j < k; ++j) axes.push_back(scan_points(space[j], box.lo[j], box.hi[j], kScan));
  double peak = kNegInf;
  Vector x(k);
  auto visit = [&](auto&& fn) {
    if (k == 1) {
      for (double a : axes[0]) {
        x[0] = a;
        fn(x);
      }
    } else {
      for (double a : axes[0]) {
        for (double b : axes[1]) {
          x[0] = a;
          x[1] = b;
          fn(x);
        }
      }
    }
  };
  visit([&](const Vector& p) {
    const double v = f(p);
    if (std::isnan(v)) throw NormalizationError("integrand evaluated to NaN");
    peak = std::max(peak, v);
  });
  if (!std::isfinite(peak)) {
    throw NormalizationError("pooled mass is numerically zero everywhere sampled (disjoint supports?)");
  }

  // Box faces that are not support bounds must see a decayed integrand.
  for (int j = 0; j < k; ++j) {
    const auto& b = space[j];
    if (b.is_lattice()) continue;
    for (int side = 0; side < 2; ++side) {
      const double edge = side == 0 ? box.lo[j] : box.hi[j];
      const double bound = side == 0 ? b.lo : b.hi;
      if (edge == bound) continue;
      const std::vector<double> other =
          k == 2 ? axes[static_cast<std::size_t>(1 - j)] : std::vector<double>{0.0};
      for (double o : other) {
        Vector p(k);
        p[j] = edge;
        if (k == 2) p[1 - j] = o;
        const double v = f(p);
        if (v - peak > std::log(opt.edge_ratio)) {
          std::ostringstream os;
          os << "integrand has not decayed at box face (coordinate " << j << " = " << edge
             << ", log ratio to peak " << v - peak << "); the pool may be non-integrable";
          throw NormalizationError(os.str());
        }
      }
    }
  }

  Integrator integ{f, space, box, peak, opt.rel_tolerance};
  Vector start(k);
  double abs_err = 0.0;
  const double value = integ.integrate_coord(start, 0, &abs_err);
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw NormalizationError("normalizing constant is not positive and finite");
  }
  const double rel_err = abs_err / value + integ.max_inner_rel_err;
  if (rel_err > opt.max_rel_error) {
    std::ostringstream os;
    os << "quadrature budget exhausted with relative error " << rel_err;
    throw NormalizationError(os.str());
  }
  return {std::log(value) + peak, rel_err, NormMethod::quadrature};
}

Normalization normalize_mc(const Density::LogPdf& f, const LinkSpace& space, const NormalizeOptions& opt,
                           const Density* proposal) {
  if (proposal == nullptr || !proposal->has_sampler()) {
    throw NormalizationError("Monte Carlo normalization needs a proposal density with a sampler");
  }
  Rng rng(opt.mc_seed);
  const Matrix draws = proposal->sample(rng, opt.mc_samples);
  std::vector<double> lw(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    const Vector x = draws.row(i).transpose();
    const double v = space.contains(x) ? f(x) : kNegInf;
    if (std::isnan(v)) throw NormalizationError("integrand evaluated to NaN");
    lw[static_cast<std::size_t>(i)] = v - proposal->log_pdf(x);
  }
  const double n = static_cast<double>(lw.size());
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse)) {
    throw NormalizationError("pooled mass is numerically zero at every proposal draw");
  }
  // Relative standard error of the importance estimate.
  double m2 = 0.0;
  for (double v : lw) m2 += std::exp(2.0 * (v - lse));
  const double rel_var = std::max(0.0, n * m2 - 1.0) / n;
  const double rel_err = std::sqrt(rel_var);
  if (rel_err > opt.max_rel_error * 10.0) {
    std::ostringstream os;
    os << "Monte Carlo normalization relative error " << rel_err << " too large";
    throw NormalizationError(os.str());
  }
  return {lse - std::log(n), rel_err, NormMethod::monte_carlo};
}

}  // namespace

Normalization normalize(const Density::LogPdf& log_unnormalized, const LinkSpace& space, const Box& box,
                        const NormalizeOptions& options, const Density* proposal) {
  if (box.dim() != space.dim()) throw ConfigError("normalize: box/space dimension mismatch");
  NormMethod method = options.method;
  if (method == NormMethod::automatic || method == NormMethod::analytic || method == NormMethod::exact) {
    method = space.dim() <= 2 ? NormMethod::quadrature : NormMethod::monte_carlo;
  }
  if (method == NormMethod::quadrature) return normalize_quadrature(log_unnormalized, space, box, options);
  return normalize_mc(log_unnormalized, space, options, proposal);
}

std::optional<GaussianPool> gaussian_log_pool(const std::vector<GaussianForm>& components,
                                              const std::vector<double>& weights) {
  const Eigen::Index k = components.front().mean.size();
  Matrix precision = Matrix::Zero(k, k);
  Vector b = Vector::Zero(k);
  double c = 0.0;
  double log_const = 0.0;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t m = 0; m < components.size(); ++m) {
    const double w = weights[m];
    if (w == 0.0) continue;
    const auto& g = components[m];
    Eigen::LLT<Matrix> llt(g.cov);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Matrix inv = llt.solve(Matrix::Identity(k, k));
    const double log_det = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    precision += w * inv;
    b += w * inv * g.mean;
    c += w * g.mean.dot(inv * g.mean);
    log_const += -0.5 * w * (static_cast<double>(k) * log2pi + log_det);
  }
  Eigen::LLT<Matrix> lp(precision);
  if (lp.info() != Eigen::Success) return std::nullopt;
  const Matrix cov = lp.solve(Matrix::Identity(k, k));
  const Vector mean = cov * b;
  const double log_det_p = 2.0 * Matrix(lp.matrixL()).diagonal().array().log().sum();
  const double log_norm = log_const + 0.5 * static_cast<double>(k) * log2pi - 0.5 * log_det_p -
                          0.5 * (c - b.dot(mean));
  return GaussianPool{GaussianForm{mean, cov}, log_norm};
}

double PooledPrior::log_unnormalized(const Vector& phi) const {
  auto component = [&](std::size_t m) {
    double v;
    try {
      v = components_[m].log_pdf(phi);
    } catch (const EvaluationError&) {
      throw;
    } catch (const std::exception& e) {
      throw EvaluationError("pooled component #" + std::to_string(m) + " (" + components_[m].label() + ")",
                            e.what());
    }
    if (std::isnan(v)) {
      throw EvaluationError("pooled component #" + std::to_string(m) + " (" + components_[m].label() + ")",
                            "log-density is NaN");
    }
    return v;
  };
  switch (mode_) {
    case PoolingMode::dictatorial:
      return component(dictator_);
    case PoolingMode::linear: {
      double m = kNegInf;
      double terms[64];
      std::vector<double> big;
      double* t = terms;
      if (components_.size() > 64) {
        big.resize(components_.size());
        t = big.data();
      }
      for (std::size_t i = 0; i < components_.size(); ++i) {
        t[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + component(i) : kNegInf;
        m = std::max(m, t[i]);
      }
      if (!std::isfinite(m)) return kNegInf;
      double s = 0.0;
      for (std::size_t i = 0; i < components_.size(); ++i) s += std::exp(t[i] - m);
      return m + std::log(s);
    }
    case PoolingMode::log:
    case PoolingMode::poe: {
      double s = 0.0;
      for (std::size_t i = 0; i < components_.size(); ++i) {
        if (weights_[i] == 0.0) continue;
        const double v = component(i);
        if (v == kNegInf) return kNegInf;  // geometric mean vanishes with any zero component
        s += weights_[i] * v;
      }
      return s;
    }
  }
  return kNegInf;
}

Density PooledPrior::as_density(std::string label) const {
  Density::Info info;
  info.label = label.empty() ? describe() : std::move(label);
  info.normalized = true;
  info.center = center_;
  info.scale = scale_;
  info.gaussian = gaussian_;
  if (gaussian_) {
    info.sampler = gaussian_density(gaussian_->mean, gaussian_->cov).info().sampler;
  } else if (mode_ == PoolingMode::dictatorial) {
    info.sampler = components_[dictator_].info().sampler;
  } else if (mode_ == PoolingMode::linear) {
    bool all = true;
    for (std::size_t m = 0; m < components_.size(); ++m) {
      if (weights_[m] > 0.0 && !components_[m].has_sampler()) all = false;
    }
    if (all) {
      auto comps = components_;
      auto w = weights_;
      const int k = dim();
      info.sampler = [comps, w, k](Rng& rng, std::size_t n) {
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        Matrix out(static_cast<Eigen::Index>(n), k);
        for (std::size_t i = 0; i < n; ++i) {
          out.row(static_cast<Eigen::Index>(i)) = comps[pick(rng)].sample(rng, 1).row(0);
        }
        return out;
      };
    }
  }
  auto self = std::make_shared<PooledPrior>(*this);
  return Density(
      dim(), [self](const Vector& x) { return self->space().contains(x) ? self->log_density(x) : kNegInf; },
      std::move(info));
}

std::string PooledPrior::describe() const {
  std::ostringstream os;
  os << to_string(mode_) << "-pool(";
  for (std::size_t m = 0; m < components_.size(); ++m) {
    if (m) os << ",";
    os << components_[m].label();
    if (mode_ == PoolingMode::linear || mode_ == PoolingMode::log) os << "^w=" << weights_[m];
  }
  os << ")";
  return os.str();
}

PooledPrior pool(PoolingMode mode, std::vector<Density> components, std::vector<double> weights,
                 const PoolOptions& options) {
  const std::size_t M = components.size();
  if (M == 0) throw ConfigError("pool: need at least one component");
  const int k = components.front().dim();
  for (const auto& c : components) {
    if (c.dim() != k) throw ConfigError("pool: component dimensions differ");
  }
  PooledPrior p;
  p.mode_ = mode;
  p.space_ = options.space ? *options.space : LinkSpace::real_line(k);
  if (p.space_.dim() != k) throw ConfigError("pool: link space dimension mismatch");

  switch (mode) {
    case PoolingMode::linear:
    case PoolingMode::log:
      if (weights.size() != M) throw ConfigError("pool: need one weight per component");
      for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("pool: weights must be finite and >= 0");
      }
      if (mode == PoolingMode::linear && std::accumulate(weights.begin(), weights.end(), 0.0) <= 0.0) {
        throw ConfigError("pool: linear pooling needs positive total weight");
      }
      break;
    case PoolingMode::poe:
      weights.assign(M, 1.0);
      break;
    case PoolingMode::dictatorial:
      if (options.dictator >= M) throw ConfigError("pool: dictator index out of range");
      p.dictator_ = options.dictator;
      weights.assign(M, 0.0);
      weights[options.dictator] = 1.0;
      break;
  }
  p.weights_ = std::move(weights);
  p.components_ = std::move(components);

  const auto& comps = p.components_;
  const auto& w = p.weights_;
  auto active = [&](std::size_t m) { return w[m] > 0.0; };

  // Scale hints for the pooled density.
  bool hints = true;
  for (std::size_t m = 0; m < M; ++m) {
    if (active(m) && !comps[m].has_scale_hint()) hints = false;
  }
  if (hints) {
    if (mode == PoolingMode::dictatorial) {
      p.center_ = comps[p.dictator_].center();
      p.scale_ = comps[p.dictator_].scale();
    } else if (mode == PoolingMode::linear) {
      const double tw = std::accumulate(w.begin(), w.end(), 0.0);
      Vector c = Vector::Zero(k), s2 = Vector::Zero(k);
      for (std::size_t m = 0; m < M; ++m) {
        if (!active(m)) continue;
        c += (w[m] / tw) * comps[m].center();
        s2 += (w[m] / tw) * (comps[m].scale().array().square() + comps[m].center().array().square()).matrix();
      }
      p.center_ = c;
      p.scale_ = (s2.array() - c.array().square()).max(1e-300).sqrt();
    } else {
      Vector prec = Vector::Zero(k), pc = Vector::Zero(k);
      for (std::size_t m = 0; m < M; ++m) {
        if (!active(m)) continue;
        const Vector pm = w[m] * comps[m].scale().array().square().inverse();
        prec += pm;
        pc += pm.cwiseProduct(comps[m].center());
      }
      if ((prec.array() > 0.0).all()) {
        p.center_ = pc.cwiseQuotient(prec);
        p.scale_ = prec.array().inverse().sqrt();
      } else {
        hints = false;
      }
    }
  }

  // Normalizing constant.
  const NormMethod requested = options.normalize.method;
  bool all_normalized = true;
  bool all_gaussian = true;
  for (std::size_t m = 0; m < M; ++m) {
    if (!active(m)) continue;
    all_normalized = all_normalized && comps[m].normalized();
    all_gaussian = all_gaussian && comps[m].gaussian().has_value();
  }
  const bool numeric_forced =
      requested == NormMethod::quadrature || requested == NormMethod::monte_carlo;

  if (mode == PoolingMode::dictatorial && all_normalized && !numeric_forced) {
    p.log_norm_ = 0.0;
    p.norm_method_ = NormMethod::exact;
    p.gaussian_ = comps[p.dictator_].gaussian();
  } else if (mode == PoolingMode::linear && all_normalized && !numeric_forced) {
    p.log_norm_ = std::log(std::accumulate(w.begin(), w.end(), 0.0));
    p.norm_method_ = NormMethod::exact;
    std::size_t n_active = 0, last = 0;
    for (std::size_t m = 0; m < M; ++m) {
      if (active(m)) {
        ++n_active;
        last = m;
      }
    }
    if (n_active == 1) p.gaussian_ = comps[last].gaussian();
  } else if ((mode == PoolingMode::log || mode == PoolingMode::poe) && all_gaussian && !numeric_forced &&
             !p.space_.has_lattice() && [&] {
               for (const auto& b : p.space_.bounds()) {
                 if (b.kind != CoordinateBound::Kind::unbounded) return false;
               }
               return true;
             }()) {
    std::vector<GaussianForm> forms;
    std::vector<double> ws;
    for (std::size_t m = 0; m < M; ++m) {
      if (!active(m)) continue;
      forms.push_back(*comps[m].gaussian());
      ws.push_back(w[m]);
    }
    if (forms.empty()) throw NormalizationError("log pool with all-zero weights is not integrable");
    auto gp = gaussian_log_pool(forms, ws);
    if (!gp) throw NormalizationError("log pool of Gaussians is not integrable (precision not PD)");
    p.log_norm_ = gp->log_norm;
    p.norm_method_ = NormMethod::analytic;
    p.gaussian_ = gp->form;
    p.center_ = gp->form.mean;
    p.scale_ = gp->form.cov.diagonal().array().sqrt();
    hints = true;
  } else {
    if (!hints) throw ConfigError("pool: numeric normalization needs location/scale hints on components");
    std::vector<Density> active_comps;
    for (std::size_t m = 0; m < M; ++m) {
      if (active(m)) active_comps.push_back(comps[m]);
    }
    const Box box = covering_box(active_comps, p.space_, options.box_width);
    auto f = [&p](const Vector& x) { return p.log_unnormalized(x); };

    // Equal-weight mixture of normalized components as the MC proposal.
    std::optional<Density> proposal;
    bool can_mix = true;
    for (const auto& c : active_comps) can_mix = can_mix && c.has_sampler() && c.normalized();
    if (can_mix) {
      Density::Info info;
      info.label = "component-mixture";
      info.normalized = true;
      info.sampler = [active_comps](Rng& rng, std::size_t n) {
        std::uniform_int_distribution<std::size_t> pick(0, active_comps.size() - 1);
        Matrix out(static_cast<Eigen::Index>(n), active_comps.front().dim());
        for (std::size_t i = 0; i < n; ++i) {
          out.row(static_cast<Eigen::Index>(i)) = active_comps[pick(rng)].sample(rng, 1).row(0);
        }
        return out;
      };
      auto eval = [active_comps](const Vector& x) {
        std::vector<double> t;
        for (const auto& c : active_comps) t.push_back(c.log_pdf(x));
        return log_sum_exp(t) - std::log(static_cast<double>(active_comps.size()));
      };
      proposal = Density(k, std::move(eval), std::move(info));
    }
    Normalization nz = normalize(f, p.space_, box, options.normalize, proposal ? &*proposal : nullptr);
    p.log_norm_ = nz.log_norm;
    p.norm_error_ = nz.error;
    p.norm_method_ = nz.method;
  }
  if (!std::isfinite(p.log_norm_)) throw NormalizationError("pool: log normalizing constant not finite");
  if (!hints) {
    p.center_ = Vector();
    p.scale_ = Vector();
  }
  return p;
}

double log_pooled_density(const PooledPrior& pooled, const Vector& phi) {
  if (phi.size() != pooled.dim()) throw ConfigError("log_pooled_density: dimension mismatch");
  if (!pooled.space().contains(phi)) return kNegInf;
  return pooled.log_density(phi);
}

}  // namespace meld
