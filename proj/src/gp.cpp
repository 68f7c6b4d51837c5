#include "bolfi/gp.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bolfi/errors.hpp"
#include "bolfi/numeric.hpp"
#include "bolfi/optimize.hpp"
#include "bolfi/simd.hpp"
#include "bolfi/sobol.hpp"

namespace bolfi {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

void forward_substitute(const Eigen::MatrixXd& l, double* z, std::size_t t) {
  const auto& k = simd::active();
  for (std::size_t j = 0; j < t; ++j) {
    const double* col = l.data() + j * static_cast<std::size_t>(l.rows());
    z[j] /= col[j];
    if (j + 1 < t) k.axpy(-z[j], col + j + 1, z + j + 1, t - j - 1);
  }
}

void back_substitute(const Eigen::MatrixXd& l, double* w, std::size_t t) {
  const auto& k = simd::active();
  for (std::size_t jj = t; jj-- > 0;) {
    const double* col = l.data() + jj * static_cast<std::size_t>(l.rows());
    const double s = jj + 1 < t ? k.dot(col + jj + 1, w + jj + 1, t - jj - 1) : 0.0;
    w[jj] = (w[jj] - s) / col[jj];
  }
}

long double mean_extended(const MeanFunction& m, std::span<const double> th) {
  long double v = m.c;
  if (m.kind == MeanFunction::Kind::Quadratic) {
    for (std::size_t j = 0; j < th.size(); ++j)
      v += static_cast<long double>(m.a[j]) * th[j] * th[j] + static_cast<long double>(m.b[j]) * th[j];
  }
  return v;
}

}  // namespace

// ---- ResponseTransform / MeanFunction / GpHyperparams ----------------------

double ResponseTransform::forward(double delta) const {
  if (mode == Mode::Direct) return delta;
  return std::log(std::max(delta - offset, kFloor));
}

double MeanFunction::value(std::span<const double> theta) const {
  if (kind == Kind::Constant) return c;
  double m = c;
  for (std::size_t j = 0; j < theta.size(); ++j) m += (a[j] * theta[j] + b[j]) * theta[j];
  return m;
}

void MeanFunction::add_gradient(std::span<const double> theta, std::span<double> grad) const {
  if (kind == Kind::Constant) return;
  for (std::size_t j = 0; j < theta.size(); ++j) grad[j] += 2.0 * a[j] * theta[j] + b[j];
}

void GpHyperparams::validate() const {
  if (length_scales.empty()) throw std::invalid_argument("GP needs at least one length scale");
  if (!(signal_variance > 0.0)) throw std::invalid_argument("signal variance must be positive");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise variance must be nonnegative");
  for (double l : length_scales) {
    if (!(l > 0.0)) throw std::invalid_argument("length scales must be positive");
  }
  if (mean.kind == MeanFunction::Kind::Quadratic) {
    if (mean.a.size() != dims() || mean.b.size() != dims()) {
      throw std::invalid_argument("quadratic mean dimension mismatch");
    }
    for (double a : mean.a) {
      if (!(a >= 0.0)) throw std::invalid_argument("quadratic mean coefficients a_j must be >= 0");
    }
  }
}

// ---- Evidence --------------------------------------------------------------

void Evidence::append(std::span<const double> theta, double response) {
  if (dims_ == 0) dims_ = theta.size();
  if (theta.size() != dims_) throw std::invalid_argument("evidence dimension mismatch");
  if (!std::isfinite(response)) throw std::invalid_argument("evidence responses must be finite");
  thetas_.insert(thetas_.end(), theta.begin(), theta.end());
  responses_.push_back(response);
}

// ---- GpPosterior -----------------------------------------------------------

void GpPosterior::kernel_column(std::span<const double> theta, double* out) const {
  const auto& k = simd::active();
  const std::size_t t = size();
  k.scaled_sq_dist(x_.data(), t, dims(), t, theta.data(), inv_len_sq_.data(), out);
  k.exp_affine(out, -1.0, std::log(hp_.signal_variance), out, t);
}

double GpPosterior::kernel(std::span<const double> a, std::span<const double> b) const {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]) * inv_len_sq_[j];
  return hp_.signal_variance * std::exp(-s);
}

void GpPosterior::refresh_alpha(bool refine) {
  const std::size_t t = size();
  const std::size_t d = dims();
  alpha_.resize(static_cast<Eigen::Index>(t));
  std::vector<double> th(d);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) th[j] = x_(i, j);
    alpha_[i] = y_[i] - hp_.mean.value(th);
  }
  forward_substitute(l_, alpha_.data(), t);
  back_substitute(l_, alpha_.data(), t);

  // With (near) noiseless evidence the diagonal holds little beyond the jitter
  // and the solve loses about cond(K) * eps. Refine against a residual formed
  // in extended precision, and evaluate the mean the same way in at().
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t; ++i) min_pivot = std::min(min_pivot, l_(i, i) * l_(i, i));
  extended_ = refine && min_pivot < 1e-6 * hp_.signal_variance;
  if (!extended_) return;
  using Ld = long double;
  std::vector<Ld> resid(t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) th[j] = x_(i, j);
    resid[i] = y_[static_cast<Eigen::Index>(i)] - mean_extended(hp_.mean, th);
  }
  const Ld diag = static_cast<Ld>(hp_.noise_variance) + jitter_;
  alpha_ext_.assign(alpha_.data(), alpha_.data() + t);
  std::vector<double> delta(t);
  for (int it = 0; it < 10; ++it) {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < d; ++j) th[j] = x_(i, j);
      const Ld r = resid[i] - diag * alpha_ext_[i] - kernel_dot_extended(th);
      delta[i] = static_cast<double>(r);
    }
    forward_substitute(l_, delta.data(), t);
    back_substitute(l_, delta.data(), t);
    double step = 0.0, size = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      alpha_ext_[i] += delta[i];
      step = std::max(step, std::abs(delta[i]));
      size = std::max(size, static_cast<double>(std::abs(alpha_ext_[i])));
    }
    if (step <= 1e-18 * size) break;
  }
  for (std::size_t i = 0; i < t; ++i) alpha_[static_cast<Eigen::Index>(i)] = static_cast<double>(alpha_ext_[i]);
}

long double GpPosterior::kernel_dot_extended(std::span<const double> theta) const {
  using Ld = long double;
  Ld acc = 0.0L;
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    Ld s = 0.0L;
    for (std::size_t c = 0; c < theta.size(); ++c) {
      const Ld z = (static_cast<Ld>(theta[c]) - x_(i, static_cast<Eigen::Index>(c))) / hp_.length_scales[c];
      s += z * z;
    }
    acc += static_cast<Ld>(hp_.signal_variance) * std::exp(-s) * alpha_ext_[static_cast<std::size_t>(i)];
  }
  return acc;
}

GpPosterior GpPosterior::build(const Evidence& evidence, const GpHyperparams& hp, bool refine) {
  hp.validate();
  const std::size_t t = evidence.size();
  const std::size_t d = hp.dims();
  if (t == 0) throw std::invalid_argument("GP needs at least one evidence point");
  if (evidence.dims() != d) throw std::invalid_argument("evidence / hyperparameter dimension mismatch");

  GpPosterior gp;
  gp.hp_ = hp;
  gp.inv_len_sq_.resize(d);
  for (std::size_t j = 0; j < d; ++j) gp.inv_len_sq_[j] = 1.0 / (hp.length_scales[j] * hp.length_scales[j]);
  gp.x_.resize(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d));
  gp.y_.resize(static_cast<Eigen::Index>(t));
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) gp.x_(i, j) = evidence.theta(i)[j];
    gp.y_[i] = evidence.response(i);
  }

  Eigen::MatrixXd k(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
  std::vector<double> th(d);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) th[j] = gp.x_(i, j);
    gp.kernel_column(th, k.col(static_cast<Eigen::Index>(i)).data());
  }
  // Symmetrize exactly; the vector exp may differ in the last ulp by argument order.
  k = (0.5 * (k + k.transpose())).eval();
  k.diagonal().array() += hp.noise_variance;

  const double sf2 = hp.signal_variance;
  for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-9); rel *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += rel * sf2;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd l = llt.matrixL();
    bool ok = true;
    for (std::size_t i = 0; i < t && ok; ++i) ok = l(i, i) > 0.0 && std::isfinite(l(i, i));
    if (!ok) continue;
    gp.l_ = std::move(l);
    gp.jitter_ = rel * sf2;
    gp.refresh_alpha(refine);
    return gp;
  }
  throw IllConditioned("Gram matrix factorization failed after jitter escalation to 1e-4 * sigma_f^2");
}

GpPosterior GpPosterior::extended(std::span<const double> theta, double response) const {
  const std::size_t t = size();
  const std::size_t d = dims();
  if (theta.size() != d) throw std::invalid_argument("extended: dimension mismatch");

  std::vector<double> kv(t);
  kernel_column(theta, kv.data());
  forward_substitute(l_, kv.data(), t);
  const double kappa = hp_.signal_variance + hp_.noise_variance + jitter_;
  const double d2 = kappa - simd::active().dot(kv.data(), kv.data(), t);

  if (!(d2 > 1e-10 * kappa)) {
    Evidence ev(d);
    std::vector<double> th(d);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < d; ++j) th[j] = x_(i, j);
      ev.append(th, y_[i]);
    }
    ev.append(theta, response);
    return build(ev, hp_);
  }

  GpPosterior gp;
  gp.hp_ = hp_;
  gp.inv_len_sq_ = inv_len_sq_;
  gp.jitter_ = jitter_;
  const auto ti = static_cast<Eigen::Index>(t);
  gp.x_ = x_;
  gp.x_.conservativeResize(ti + 1, Eigen::NoChange);
  for (std::size_t j = 0; j < d; ++j) gp.x_(ti, j) = theta[j];
  gp.y_.resize(ti + 1);
  gp.y_.head(ti) = y_;
  gp.y_[ti] = response;
  gp.l_ = Eigen::MatrixXd::Zero(ti + 1, ti + 1);
  gp.l_.topLeftCorner(ti, ti) = l_;
  for (std::size_t i = 0; i < t; ++i) gp.l_(ti, i) = kv[i];
  gp.l_(ti, ti) = std::sqrt(d2);
  gp.refresh_alpha();
  return gp;
}

PosteriorPoint GpPosterior::at(std::span<const double> theta) const {
  const std::size_t t = size();
  const auto& kt = simd::active();
  std::vector<double> kv(t);
  kernel_column(theta, kv.data());
  PosteriorPoint p;
  p.mean = extended_ ? static_cast<double>(mean_extended(hp_.mean, theta) + kernel_dot_extended(theta))
                     : hp_.mean.value(theta) + kt.dot(kv.data(), alpha_.data(), t);
  forward_substitute(l_, kv.data(), t);
  p.var_latent = std::max(0.0, hp_.signal_variance - kt.dot(kv.data(), kv.data(), t));
  p.var_obs = p.var_latent + hp_.noise_variance;
  return p;
}

PosteriorGradient GpPosterior::at_with_gradient(std::span<const double> theta) const {
  const std::size_t t = size();
  const std::size_t d = dims();
  const auto& kt = simd::active();
  std::vector<double> kv(t), w(t), ka(t), kw(t);
  kernel_column(theta, kv.data());

  PosteriorGradient g;
  g.value.mean = hp_.mean.value(theta) + kt.dot(kv.data(), alpha_.data(), t);
  w = kv;
  forward_substitute(l_, w.data(), t);
  g.value.var_latent = std::max(0.0, hp_.signal_variance - kt.dot(w.data(), w.data(), t));
  g.value.var_obs = g.value.var_latent + hp_.noise_variance;
  back_substitute(l_, w.data(), t);  // w = K^{-1} k

  for (std::size_t i = 0; i < t; ++i) {
    ka[i] = kv[i] * alpha_[i];
    kw[i] = kv[i] * w[i];
  }
  const double s_ka = kt.sum(ka.data(), t);
  const double s_kw = kt.sum(kw.data(), t);
  g.d_mean.assign(d, 0.0);
  g.d_var.assign(d, 0.0);
  hp_.mean.add_gradient(theta, g.d_mean);
  for (std::size_t j = 0; j < d; ++j) {
    const double* xj = x_.data() + j * t;
    // dk_i/dtheta_j = -2 (theta_j - x_ij) / lambda_j^2 * k_i
    g.d_mean[j] += -2.0 * inv_len_sq_[j] * (theta[j] * s_ka - kt.dot(xj, ka.data(), t));
    g.d_var[j] = 4.0 * inv_len_sq_[j] * (theta[j] * s_kw - kt.dot(xj, kw.data(), t));
  }
  return g;
}

void GpPosterior::at_batch(const Eigen::MatrixXd& points, std::span<double> mean,
                           std::span<double> var_latent) const {
  const std::size_t t = size();
  const std::size_t d = dims();
  const auto m = static_cast<std::size_t>(points.rows());
  if (static_cast<std::size_t>(points.cols()) != d || mean.size() != m || var_latent.size() != m) {
    throw std::invalid_argument("at_batch: shape mismatch");
  }
  const auto& kt = simd::active();
  const double log_sf2 = std::log(hp_.signal_variance);
  constexpr std::size_t kChunk = 2048;
  std::vector<double> center(d), th(d);
  for (std::size_t start = 0; start < m; start += kChunk) {
    const std::size_t n = std::min(kChunk, m - start);
    // kq(i, r): kernel between training point i and query r.
    Eigen::MatrixXd kq(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(n));
    std::vector<double> row(n);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < d; ++j) center[j] = x_(i, j);
      kt.scaled_sq_dist(points.data() + start, m, d, n, center.data(), inv_len_sq_.data(), row.data());
      kt.exp_affine(row.data(), -1.0, log_sf2, row.data(), n);
      for (std::size_t r = 0; r < n; ++r) kq(i, r) = row[r];
    }
    const Eigen::VectorXd mu = kq.transpose() * alpha_;
    l_.triangularView<Eigen::Lower>().solveInPlace(kq);
    const Eigen::VectorXd red = kq.colwise().squaredNorm().transpose();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < d; ++j) th[j] = points(start + r, j);
      mean[start + r] = hp_.mean.value(th) + mu[r];
      var_latent[start + r] = std::max(0.0, hp_.signal_variance - red[r]);
    }
  }
}

// ---- Leave-one-out score ---------------------------------------------------

double loo_log_predictive(const Evidence& evidence, const GpHyperparams& hp) {
  if (evidence.size() < 2) throw std::invalid_argument("leave-one-out needs at least two points");
  const GpPosterior gp = GpPosterior::build(evidence, hp);
  const auto t = static_cast<Eigen::Index>(gp.size());
  Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(t, t);
  gp.factor().triangularView<Eigen::Lower>().solveInPlace(linv);
  const Eigen::VectorXd kinv_diag = linv.colwise().squaredNorm().transpose();
  double s = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    const double a = gp.alpha()[i];
    s += 0.5 * std::log(kinv_diag[i]) - 0.5 * kLog2Pi - 0.5 * a * a / kinv_diag[i];
  }
  return s;
}

// ---- Hyperparameter fitting ------------------------------------------------

namespace {

// Optimization coordinates: log lambda_j (d), log sigma_f^2, log sigma_n^2.
// Mean parameters are not searched; for each kernel setting they are the
// generalized least-squares fit, with the quadratic curvatures constrained to
// be non-negative. The quadratic mean is solved in the box-normalized
// coordinate u_j = (theta_j - center_j) / width_j as sum_j A_j u_j^2 + B_j u_j + C.
struct Layout {
  std::size_t d = 0;
  MeanFunction::Kind kind = MeanFunction::Kind::Constant;
  std::vector<double> ctr, w;
  std::vector<double> lo, hi;              // optimization bounds
  std::vector<double> start_lo, start_hi;  // region for quasi-random starts

  std::size_t size() const { return lo.size(); }

  GpHyperparams decode(std::span<const double> x) const {
    GpHyperparams hp;
    hp.length_scales.resize(d);
    for (std::size_t j = 0; j < d; ++j) hp.length_scales[j] = std::exp(x[j]);
    hp.signal_variance = std::exp(x[d]);
    hp.noise_variance = std::exp(x[d + 1]);
    hp.mean = MeanFunction::constant(0.0);
    return hp;
  }

  std::vector<double> encode(const GpHyperparams& hp) const {
    std::vector<double> x(size());
    for (std::size_t j = 0; j < d; ++j) x[j] = std::log(hp.length_scales[j]);
    x[d] = std::log(hp.signal_variance);
    x[d + 1] = std::log(std::max(hp.noise_variance, 1e-300));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
    return x;
  }

  // Box <-> unconstrained via a logistic map.
  std::vector<double> to_box(std::span<const double> z) const {
    std::vector<double> x(size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) / (1.0 + std::exp(-z[i]));
    return x;
  }
  std::vector<double> from_box(std::span<const double> x) const {
    std::vector<double> z(size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double u = std::clamp((x[i] - lo[i]) / (hi[i] - lo[i]), 1e-6, 1.0 - 1e-6);
      z[i] = std::log(u / (1.0 - u));
    }
    return z;
  }

  // Normalized coefficients (A, B, C) back to m(theta) = sum a theta^2 + b theta + c.
  MeanFunction mean_from_normalized(const Eigen::VectorXd& beta) const {
    if (kind == MeanFunction::Kind::Constant) return MeanFunction::constant(beta[0]);
    std::vector<double> a(d), b(d);
    double c = beta[2 * static_cast<Eigen::Index>(d)];
    for (std::size_t j = 0; j < d; ++j) {
      const double aa = beta[static_cast<Eigen::Index>(j)];
      const double bb = beta[static_cast<Eigen::Index>(d + j)];
      a[j] = aa / (w[j] * w[j]);
      b[j] = bb / w[j] - 2.0 * a[j] * ctr[j];
      c += a[j] * ctr[j] * ctr[j] - bb * ctr[j] / w[j];
    }
    return MeanFunction::quadratic(std::move(a), std::move(b), c);
  }

  // Regressors in normalized coordinates: [u^2 (d), u (d), 1] or [1].
  Eigen::MatrixXd design(const Evidence& ev) const {
    const auto t = static_cast<Eigen::Index>(ev.size());
    if (kind == MeanFunction::Kind::Constant) return Eigen::MatrixXd::Ones(t, 1);
    const auto dd = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd h(t, 2 * dd + 1);
    for (Eigen::Index i = 0; i < t; ++i) {
      auto th = ev.theta(static_cast<std::size_t>(i));
      for (Eigen::Index j = 0; j < dd; ++j) {
        const double u = (th[j] - ctr[j]) / w[j];
        h(i, j) = u * u;
        h(i, dd + j) = u;
      }
      h(i, 2 * dd) = 1.0;
    }
    return h;
  }
};

Layout make_layout(const Evidence& ev, const FitOptions& opt) {
  Layout lay;
  lay.d = ev.dims();
  lay.kind = opt.mean_kind;
  if (opt.bounds.dims() != lay.d) throw std::invalid_argument("fit_hyperparameters: bounds dimension mismatch");
  const double var = variance(ev.responses());
  const double ref_var = var > 0.0 ? var : 1.0;

  for (std::size_t j = 0; j < lay.d; ++j) {
    const double w = opt.bounds.width(j);
    lay.ctr.push_back(0.5 * (opt.bounds.lower[j] + opt.bounds.upper[j]));
    lay.w.push_back(w);
    lay.lo.push_back(std::log(2e-2 * w));  // below point spacing the kernel only mimics noise
    lay.hi.push_back(std::log(1e3 * w));
    lay.start_lo.push_back(std::log(0.05 * w));
    lay.start_hi.push_back(std::log(2.0 * w));
  }
  for (int k = 0; k < 2; ++k) {
    lay.lo.push_back(std::log(1e-8 * ref_var));
    lay.hi.push_back(std::log(1e8 * ref_var));
  }
  lay.start_lo.push_back(std::log(1e-2 * ref_var));
  lay.start_hi.push_back(std::log(1e2 * ref_var));
  lay.start_lo.push_back(std::log(1e-4 * ref_var));
  lay.start_hi.push_back(std::log(ref_var));
  return lay;
}

struct Profiled {
  double score = -std::numeric_limits<double>::infinity();
  MeanFunction mean;
};

// LOO score with the mean profiled out for fixed kernel hyperparameters.
Profiled profile_mean(const Evidence& ev, const Layout& lay, const Eigen::MatrixXd& design,
                      const GpHyperparams& kernel_hp) {
  Profiled out;
  GpPosterior gp;
  try {
    gp = GpPosterior::build(ev, kernel_hp, false);
  } catch (const NotPositiveDefinite&) {
    return out;
  }
  const auto t = static_cast<Eigen::Index>(ev.size());
  Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(t, t);
  gp.factor().triangularView<Eigen::Lower>().solveInPlace(linv);
  const Eigen::MatrixXd kinv = linv.transpose() * linv;
  const Eigen::Map<const Eigen::VectorXd> y(ev.responses().data(), t);

  const Eigen::MatrixXd kh = kinv * design;
  Eigen::MatrixXd g = design.transpose() * kh;
  const Eigen::VectorXd rhs = kh.transpose() * y;
  const auto p = g.rows();
  g.diagonal().array() += 1e-10 * std::max(g.trace() / static_cast<double>(p), 1e-300);

  auto solve_subset = [&](const std::vector<Eigen::Index>& cols, Eigen::VectorXd& beta) {
    const auto k = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd gs(k, k);
    Eigen::VectorXd rs(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      rs[i] = rhs[cols[i]];
      for (Eigen::Index j = 0; j < k; ++j) gs(i, j) = g(cols[i], cols[j]);
    }
    const Eigen::VectorXd sol = gs.ldlt().solve(rs);
    beta = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < k; ++i) beta[cols[i]] = sol[i];
    return sol.allFinite();
  };
  auto quad_form = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd r = y - design * beta;
    return r.dot(kinv * r);
  };

  Eigen::VectorXd beta;
  if (lay.kind == MeanFunction::Kind::Constant) {
    if (!solve_subset({0}, beta)) return out;
  } else {
    // Non-negative curvatures: every subset of curvature terms is tried as
    // the free set (exact for small d), otherwise terms with negative
    // estimates are dropped one at a time.
    const auto dd = static_cast<Eigen::Index>(lay.d);
    auto with_curvatures = [&](const std::vector<bool>& keep) {
      std::vector<Eigen::Index> cols;
      for (Eigen::Index j = 0; j < dd; ++j) {
        if (keep[static_cast<std::size_t>(j)]) cols.push_back(j);
      }
      for (Eigen::Index j = dd; j < p; ++j) cols.push_back(j);
      return cols;
    };
    double best = std::numeric_limits<double>::infinity();
    if (lay.d <= 10) {
      for (std::uint32_t mask = 0; mask < (1u << lay.d); ++mask) {
        std::vector<bool> keep(lay.d);
        for (std::size_t j = 0; j < lay.d; ++j) keep[j] = (mask >> j) & 1u;
        Eigen::VectorXd b;
        if (!solve_subset(with_curvatures(keep), b)) continue;
        if ((b.head(dd).array() < 0.0).any()) continue;
        const double q = quad_form(b);
        if (q < best) {
          best = q;
          beta = b;
        }
      }
    } else {
      std::vector<bool> keep(lay.d, true);
      for (;;) {
        Eigen::VectorXd b;
        if (!solve_subset(with_curvatures(keep), b)) return out;
        Eigen::Index worst = -1;
        for (Eigen::Index j = 0; j < dd; ++j) {
          if (b[j] < 0.0 && (worst < 0 || b[j] < b[worst])) worst = j;
        }
        if (worst < 0) {
          beta = b;
          break;
        }
        keep[static_cast<std::size_t>(worst)] = false;
      }
    }
    if (beta.size() == 0) return out;
  }

  const Eigen::VectorXd alpha = kinv * (y - design * beta);
  double s = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) {
    const double kii = kinv(i, i);
    s += 0.5 * std::log(kii) - 0.5 * kLog2Pi - 0.5 * alpha[i] * alpha[i] / kii;
  }
  if (!std::isfinite(s)) return out;
  out.score = s;
  out.mean = lay.mean_from_normalized(beta);
  return out;
}

double safe_loo(const Evidence& ev, const GpHyperparams& hp) {
  try {
    const double s = loo_log_predictive(ev, hp);
    return std::isfinite(s) ? s : -std::numeric_limits<double>::infinity();
  } catch (const NotPositiveDefinite&) {
    return -std::numeric_limits<double>::infinity();
  } catch (const std::invalid_argument&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace

GpHyperparams default_hyperparams(const Evidence& evidence, const Box& bounds,
                                  MeanFunction::Kind kind) {
  const std::size_t d = evidence.dims();
  const auto& y = evidence.responses();
  const double var = y.empty() ? 1.0 : variance(y);
  const double v = var > 0.0 ? var : 1.0;
  const double ybar = y.empty() ? 0.0 : mean(y);
  GpHyperparams hp;
  hp.signal_variance = v;
  hp.noise_variance = 0.1 * v;
  for (std::size_t j = 0; j < d; ++j) hp.length_scales.push_back(bounds.width(j) / 3.0);
  if (kind == MeanFunction::Kind::Constant) {
    hp.mean = MeanFunction::constant(ybar);
  } else {
    std::vector<double> a(d), b(d);
    double c = ybar;
    for (std::size_t j = 0; j < d; ++j) {
      const double ctr = 0.5 * (bounds.lower[j] + bounds.upper[j]);
      a[j] = 0.1 * std::sqrt(v) / (bounds.width(j) * bounds.width(j));
      b[j] = -2.0 * a[j] * ctr;
      c += a[j] * ctr * ctr;
    }
    hp.mean = MeanFunction::quadratic(std::move(a), std::move(b), c);
  }
  return hp;
}

FitResult fit_hyperparameters(const Evidence& evidence, const GpHyperparams& init,
                              const FitOptions& options) {
  if (evidence.size() < 2) throw std::invalid_argument("fit_hyperparameters needs at least two points");
  const Layout lay = make_layout(evidence, options);
  const Eigen::MatrixXd design = lay.design(evidence);

  FitResult res;
  res.hyper = init;
  res.init_score = safe_loo(evidence, init);
  res.score = res.init_score;

  std::vector<std::vector<double>> starts;
  starts.push_back(lay.from_box(lay.encode(init)));
  if (options.sobol_starts > 0 && lay.size() <= SobolSequence::kMaxDims) {
    SobolSequence seq(lay.size());
    for (std::size_t s = 0; s < options.sobol_starts; ++s) {
      const auto u = seq.next();
      std::vector<double> x(lay.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = lay.start_lo[i] + u[i] * (lay.start_hi[i] - lay.start_lo[i]);
      }
      starts.push_back(lay.from_box(x));
    }
  }

  auto objective = [&](std::span<const double> z) {
    ++res.evaluations;
    const double s = profile_mean(evidence, lay, design, lay.decode(lay.to_box(z))).score;
    return std::isfinite(s) ? -s : std::numeric_limits<double>::max();
  };

  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> best_z;
  for (const auto& z0 : starts) {
    const NelderMeadResult nm = nelder_mead(objective, z0, 1.0, options.max_evals_per_start, 1e-5);
    const double score = -nm.value;
    if (score > best) {
      best = score;
      best_z = nm.x;
    }
  }
  if (!best_z.empty()) {
    GpHyperparams hp = lay.decode(lay.to_box(best_z));
    const Profiled pr = profile_mean(evidence, lay, design, hp);
    hp.mean = pr.mean;
    // Re-scored with the public definition so that score and init_score compare like for like.
    const double score = safe_loo(evidence, hp);
    if (score > res.init_score) {
      res.hyper = hp;
      res.score = score;
      res.improved = true;
    }
  }
  return res;
}

}  // namespace bolfi
