#include "sbo/gp.hpp"

#include "sbo/error.hpp"
#include "sbo/optimize.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace sbo {
namespace {

constexpr double kSqrt5 = 2.2360679774997896964091736687313;

// Matern-5/2 profile as a function of the scaled distance r.
double profile(double r) { return (1.0 + kSqrt5 * r + (5.0 / 3.0) * r * r) * std::exp(-kSqrt5 * r); }

// -(1/r) d profile/dr: (5/3)(1 + sqrt5 r) exp(-sqrt5 r). Finite at r = 0.
double profile_slope(double r) { return (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r); }

void check_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": dimension mismatch (" << got << " vs " << want << ")";
    throw InvalidArgument(os.str());
  }
}

// Rows of `inputs` divided elementwise by the lengthscales.
Matrix scaled(const Matrix& inputs, const Vector& lengthscales) {
  return inputs * lengthscales.cwiseInverse().asDiagonal();
}

Matrix squared_distances(const Matrix& z) {
  const Vector sq = z.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * z * z.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  return d2.cwiseMax(0.0);
}

}  // namespace

void KernelHyper::validate(Eigen::Index dim) const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw InvalidArgument("KernelHyper: signal_variance must be positive");
  }
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) {
    throw InvalidArgument("KernelHyper: noise_variance must be positive");
  }
  check_dim(lengthscales.size(), dim, "KernelHyper lengthscales");
  if (dim > 0 && (!(lengthscales.minCoeff() > 0.0) || !lengthscales.allFinite())) {
    throw InvalidArgument("KernelHyper: lengthscales must be positive");
  }
}

double matern52(const Vector& x, const Vector& x2, const KernelHyper& hyper) {
  check_dim(x.size(), x2.size(), "matern52");
  check_dim(hyper.lengthscales.size(), x.size(), "matern52 lengthscales");
  const double r = (x - x2).cwiseQuotient(hyper.lengthscales).norm();
  return hyper.signal_variance * profile(r);
}

Matrix kernel_matrix(const Matrix& inputs, const KernelHyper& hyper) {
  check_dim(hyper.lengthscales.size(), inputs.cols(), "kernel_matrix lengthscales");
  const Matrix r = squared_distances(scaled(inputs, hyper.lengthscales)).cwiseSqrt();
  Matrix k = r.unaryExpr([](double v) { return profile(v); }) * hyper.signal_variance;
  k.diagonal().setConstant(hyper.signal_variance);
  return k;
}

GPState gp_fit(Matrix inputs, Vector values, const KernelHyper& hyper, double mean_const) {
  if (inputs.rows() < 1) throw InvalidArgument("gp_fit: need at least one observation");
  check_dim(values.size(), inputs.rows(), "gp_fit values");
  hyper.validate(inputs.cols());
  if (!inputs.allFinite() || !values.allFinite() || !std::isfinite(mean_const)) {
    throw InvalidArgument("gp_fit: non-finite data");
  }

  const Matrix k = kernel_matrix(inputs, hyper);
  const Eigen::Index n = inputs.rows();
  double noise = hyper.noise_variance;
  for (;;) {
    Matrix kn = k;
    kn.diagonal().array() += noise;
    Eigen::LLT<Matrix> llt(kn);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
      GPState s;
      s.inputs_ = std::move(inputs);
      s.values_ = std::move(values);
      s.mean_const_ = mean_const;
      s.hyper_ = hyper;
      s.hyper_.noise_variance = noise;
      s.chol_ = llt.matrixL();
      s.alpha_ = llt.solve((s.values_.array() - mean_const).matrix());
      return s;
    }
    if (noise >= kMaxJitter) {
      std::ostringstream os;
      os << "gp_fit: Cholesky failed for n=" << n << " with jitter " << noise
         << " (signal_variance=" << hyper.signal_variance
         << ", min lengthscale=" << hyper.lengthscales.minCoeff() << ")";
      throw NumericalError(os.str());
    }
    noise = std::min(noise * 10.0, kMaxJitter);
  }
}

Posterior gp_posterior(const GPState& state, const Vector& x) {
  check_dim(x.size(), state.dim(), "gp_posterior");
  const auto& h = state.hyper();
  const Vector inv = h.lengthscales.cwiseInverse();
  const Matrix diff = (state.inputs().rowwise() - x.transpose()) * inv.asDiagonal();
  const Vector dist = diff.rowwise().norm();
  const Vector kstar = dist.unaryExpr([](double v) { return profile(v); }) * h.signal_variance;
  Posterior p;
  p.mean = state.mean_const() + kstar.dot(state.alpha());
  const Vector v = state.chol().triangularView<Eigen::Lower>().solve(kstar);
  p.variance = std::max(0.0, h.signal_variance - v.squaredNorm());
  return p;
}

PosteriorWithGrad gp_posterior_with_grad(const GPState& state, const Vector& x) {
  check_dim(x.size(), state.dim(), "gp_posterior_with_grad");
  const auto& h = state.hyper();
  const Vector inv2 = h.lengthscales.cwiseInverse().cwiseAbs2();
  // Rows: x - x_j.
  const Matrix delta = (-state.inputs()).rowwise() + x.transpose();
  const Vector dist = (delta * h.lengthscales.cwiseInverse().asDiagonal()).rowwise().norm();
  const Eigen::Index n = state.size();
  Vector kstar(n);
  Vector slope(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    kstar[j] = h.signal_variance * profile(dist[j]);
    slope[j] = h.signal_variance * profile_slope(dist[j]);
  }
  // dk_j/dx = -slope_j * (x - x_j) / l^2
  PosteriorWithGrad p;
  p.mean = state.mean_const() + kstar.dot(state.alpha());
  p.dmean = -(delta.transpose() * state.alpha().cwiseProduct(slope)).cwiseProduct(inv2);

  const auto lower = state.chol().triangularView<Eigen::Lower>();
  const Vector v = lower.solve(kstar);
  const double var = h.signal_variance - v.squaredNorm();
  if (var <= 0.0) {
    p.variance = 0.0;
    p.dvariance = Vector::Zero(x.size());
  } else {
    p.variance = var;
    const Vector beta = lower.transpose().solve(v);
    p.dvariance = 2.0 * (delta.transpose() * beta.cwiseProduct(slope)).cwiseProduct(inv2);
  }
  return p;
}

LogLikelihood log_marginal_likelihood(const GPState& state) {
  const auto& h = state.hyper();
  const Eigen::Index n = state.size();
  const Eigen::Index d = state.dim();
  const Vector resid = state.values().array() - state.mean_const();

  LogLikelihood out;
  out.value = -0.5 * resid.dot(state.alpha()) - state.chol().diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  const auto lower = state.chol().triangularView<Eigen::Lower>();
  Matrix kinv = Matrix::Identity(n, n);
  lower.solveInPlace(kinv);
  lower.transpose().solveInPlace(kinv);
  const Matrix w = state.alpha() * state.alpha().transpose() - kinv;

  const Matrix z = scaled(state.inputs(), h.lengthscales);
  const Matrix r = squared_distances(z).cwiseSqrt();
  Matrix kf(n, n);
  Matrix slope(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      kf(i, j) = h.signal_variance * profile(r(i, j));
      slope(i, j) = h.signal_variance * profile_slope(r(i, j));
    }
  }

  out.grad.resize(d + 3);
  out.grad[0] = 0.5 * w.cwiseProduct(kf).sum();
  // dK_ij/dlog l_k = slope_ij * (z_ik - z_jk)^2
  const Matrix g = w.cwiseProduct(slope);
  const Vector rowsum = g.rowwise().sum();
  const Matrix gz = g * z;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double t = 2.0 * z.col(k).cwiseAbs2().dot(rowsum) - 2.0 * z.col(k).dot(gz.col(k));
    out.grad[1 + k] = 0.5 * t;
  }
  out.grad[d + 1] = 0.5 * h.noise_variance * w.trace();
  out.grad[d + 2] = state.alpha().sum();
  return out;
}

double log_hyper_prior(const KernelHyper& hyper, const HyperPrior& prior) {
  const double zs = (std::log(hyper.signal_variance) - prior.log_signal_mean) / prior.log_signal_sd;
  double lp = -0.5 * zs * zs;
  for (Eigen::Index i = 0; i < hyper.lengthscales.size(); ++i) {
    const double zl = (std::log(hyper.lengthscales[i] / prior.lengthscale_unit) -
                       prior.log_lengthscale_mean) /
                      prior.log_lengthscale_sd;
    lp -= 0.5 * zl * zl;
  }
  return lp;
}

HyperFit fit_hyperparameters(const Matrix& inputs, const Vector& values, const HyperPrior& prior,
                             int restarts, std::uint64_t seed) {
  if (inputs.rows() < 2) throw InvalidArgument("fit_hyperparameters: need n >= 2");
  if (restarts < 1) throw InvalidArgument("fit_hyperparameters: restarts must be >= 1");
  check_dim(values.size(), inputs.rows(), "fit_hyperparameters values");
  if (!(prior.lengthscale_unit > 0.0)) {
    throw InvalidArgument("fit_hyperparameters: lengthscale_unit must be positive");
  }
  const Eigen::Index d = inputs.cols();
  const Eigen::Index np = d + 2;  // log s2, log l_1..d, mean
  const double unit_log = std::log(prior.lengthscale_unit);
  const double vmin = values.minCoeff();
  const double vmax = values.maxCoeff();
  const double span = 1.0 + (vmax - vmin);

  Vector lower(np), upper(np);
  lower[0] = std::log(prior.signal_floor);
  upper[0] = std::log(prior.signal_ceiling);
  lower.segment(1, d).setConstant(unit_log + std::log(prior.lengthscale_min));
  upper.segment(1, d).setConstant(unit_log + std::log(prior.lengthscale_max));
  lower[d + 1] = vmin - 10.0 * span;
  upper[d + 1] = vmax + 10.0 * span;

  auto unpack = [&](const Vector& p, KernelHyper& h, double& mean) {
    h.signal_variance = std::exp(p[0]);
    h.lengthscales = p.segment(1, d).array().exp();
    h.noise_variance = prior.noise_variance;
    mean = p[d + 1];
  };

  // Negative log posterior over the packed parameters.
  auto neg_log_post = [&](const Vector& p, Vector& grad) -> double {
    KernelHyper h;
    double mean = 0.0;
    unpack(p, h, mean);
    GPState st;
    try {
      st = gp_fit(inputs, values, h, mean);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
    const LogLikelihood ll = log_marginal_likelihood(st);
    const double lp = log_hyper_prior(h, prior);
    grad.resize(np);
    grad[0] = -(ll.grad[0] - (p[0] - prior.log_signal_mean) /
                                 (prior.log_signal_sd * prior.log_signal_sd));
    for (Eigen::Index k = 0; k < d; ++k) {
      const double prior_grad = -(p[1 + k] - unit_log - prior.log_lengthscale_mean) /
                                (prior.log_lengthscale_sd * prior.log_lengthscale_sd);
      grad[1 + k] = -(ll.grad[1 + k] + prior_grad);
    }
    grad[d + 1] = -ll.grad[d + 2];
    return -(ll.value + lp);
  };

  Vector mode(np);
  mode[0] = std::clamp(prior.log_signal_mean, lower[0], upper[0]);
  mode.segment(1, d).setConstant(unit_log + prior.log_lengthscale_mean);
  mode.segment(1, d) = mode.segment(1, d).cwiseMax(lower.segment(1, d)).cwiseMin(upper.segment(1, d));
  mode[d + 1] = values.mean();

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LbfgsOptions opts;
  opts.max_iterations = 100;

  bool have = false;
  bool progressed = false;
  Vector best_p;
  double best_val = std::numeric_limits<double>::infinity();
  for (int rs = 0; rs < restarts; ++rs) {
    Vector start = mode;
    if (rs > 0) {
      start[0] = prior.log_signal_mean + prior.log_signal_sd * normal(rng);
      for (Eigen::Index k = 0; k < d; ++k) {
        start[1 + k] = unit_log + prior.log_lengthscale_mean + prior.log_lengthscale_sd * normal(rng);
      }
      start = start.cwiseMax(lower).cwiseMin(upper);
    }
    const LbfgsResult r = minimize_box(neg_log_post, start, lower, upper, opts);
    if (!std::isfinite(r.value)) continue;
    progressed = progressed || !r.failed;
    if (!have || r.value < best_val) {
      have = true;
      best_val = r.value;
      best_p = r.x;
    }
  }

  HyperFit fit;
  if (!have || !progressed) {
    unpack(mode, fit.hyper, fit.mean_const);
    Vector g;
    fit.log_posterior = -neg_log_post(mode, g);
    fit.warning = true;
    return fit;
  }
  unpack(best_p, fit.hyper, fit.mean_const);
  fit.log_posterior = -best_val;
  return fit;
}

}  // namespace sbo
