#pragma once

#include "sbo/types.hpp"

#include <cstdint>

namespace sbo {

/// Matern-5/2 ARD kernel hyperparameters.
struct KernelHyper {
  double signal_variance = 1.0;
  Vector lengthscales;
  double noise_variance = 1e-6;

  /// Throws InvalidArgument unless every field is strictly positive and
  /// lengthscales has `dim` entries.
  void validate(Eigen::Index dim) const;
};

/// Default jitter and the ceiling reached by escalating it x10 on Cholesky failure.
inline constexpr double kDefaultNoise = 1e-6;
inline constexpr double kMaxJitter = 1e-4;

double matern52(const Vector& x, const Vector& x2, const KernelHyper& hyper);

/// Noise-free kernel matrix over the rows of `inputs`.
Matrix kernel_matrix(const Matrix& inputs, const KernelHyper& hyper);

/// Conditioned GP: dataset, hyperparameters, Cholesky factor of K + noise*I and
/// alpha = (K + noise*I)^-1 (values - mean_const). Immutable once built.
class GPState {
 public:
  [[nodiscard]] const Matrix& inputs() const { return inputs_; }
  [[nodiscard]] const Vector& values() const { return values_; }
  [[nodiscard]] double mean_const() const { return mean_const_; }
  /// Hyperparameters actually used; noise_variance includes any jitter escalation.
  [[nodiscard]] const KernelHyper& hyper() const { return hyper_; }
  [[nodiscard]] const Matrix& chol() const { return chol_; }
  [[nodiscard]] const Vector& alpha() const { return alpha_; }
  [[nodiscard]] Eigen::Index size() const { return inputs_.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return inputs_.cols(); }

 private:
  friend GPState gp_fit(Matrix inputs, Vector values, const KernelHyper& hyper,
                        double mean_const);
  Matrix inputs_;
  Vector values_;
  double mean_const_ = 0.0;
  KernelHyper hyper_;
  Matrix chol_;
  Vector alpha_;
};

/// Conditions a GP on (inputs, values). Jitter escalates x10 up to kMaxJitter
/// when the factorization fails; NumericalError after that.
GPState gp_fit(Matrix inputs, Vector values, const KernelHyper& hyper, double mean_const);

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

Posterior gp_posterior(const GPState& state, const Vector& x);

/// Posterior plus its gradients with respect to x.
struct PosteriorWithGrad {
  double mean = 0.0;
  double variance = 0.0;
  Vector dmean;
  Vector dvariance;
};

PosteriorWithGrad gp_posterior_with_grad(const GPState& state, const Vector& x);

/// Log marginal likelihood and its gradient. The gradient is ordered
/// [log signal_variance, log lengthscale_1..d, log noise_variance, mean_const].
struct LogLikelihood {
  double value = 0.0;
  Vector grad;
};

LogLikelihood log_marginal_likelihood(const GPState& state);

/// Log-normal priors for MAP hyperparameter fitting. Lengthscales are measured
/// in units of `lengthscale_unit` (the search box half-width). The mean is flat.
struct HyperPrior {
  double lengthscale_unit = 1.0;
  double log_lengthscale_mean = 0.0;
  double log_lengthscale_sd = 1.0;
  double log_signal_mean = 0.0;
  double log_signal_sd = 1.0;
  /// Hard floor / ceiling on the signal variance.
  double signal_floor = 1e-6;
  double signal_ceiling = 1e4;
  /// Lengthscale search range, relative to lengthscale_unit.
  double lengthscale_min = 1e-3;
  double lengthscale_max = 1e3;
  /// Held fixed during fitting (acts as jitter).
  double noise_variance = kDefaultNoise;
};

struct HyperFit {
  KernelHyper hyper;
  double mean_const = 0.0;
  double log_posterior = 0.0;
  /// Set when every restart failed and the prior-mode defaults were returned.
  bool warning = false;
};

/// Log prior density (up to a constant) of the hyperparameters.
double log_hyper_prior(const KernelHyper& hyper, const HyperPrior& prior);

/// MAP fit by multi-restart bounded quasi-Newton ascent on the log-parameters.
/// Restart 0 starts from the prior mode (mean_const = sample mean); later
/// restarts draw their start from the prior.
HyperFit fit_hyperparameters(const Matrix& inputs, const Vector& values,
                             const HyperPrior& prior, int restarts, std::uint64_t seed);

}  // namespace sbo
