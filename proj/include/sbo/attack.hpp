#pragma once

#include "sbo/acquisition.hpp"
#include "sbo/gp.hpp"
#include "sbo/oracle.hpp"
#include "sbo/subspace.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sbo {

enum class InitDistribution { StdNormal, Uniform };

std::string_view to_string(InitDistribution d);
InitDistribution parse_init(std::string_view s);

struct GpOptions {
  /// Refit hyperparameters at n0, n0+1, n0+2 and then every `refit_every` new rows.
  int refit_every = 5;
  int hyper_restarts = 2;
  AcquisitionOptions acquisition{};
  double noise_variance = kDefaultNoise;
};

struct AttackConfig {
  NormKind norm = NormKind::Linf;
  double eps = 0.05;
  std::int64_t budget = 1000;
  /// Side of the low-dimensional square, floor(r d).
  int low_dim_side = 4;
  BasisMode basis_mode = BasisMode::NNI;
  int n_init = 5;
  InitDistribution init_dist = InitDistribution::StdNormal;
  ObjectiveSpec objective{};
  AcquisitionKind acquisition = AcquisitionKind::EI;
  double ucb_beta = 2.0;
  std::uint64_t seed = 0;
  GpOptions gp{};

  /// Linf: NNI with standard-normal init. L2: full FFT basis with uniform init.
  static AttackConfig defaults_for(NormKind norm);
  void validate() const;
  [[nodiscard]] SubspaceSpec subspace_for(Shape image) const;
};

struct TracePoint {
  std::int64_t query_index = 0;
  double value = 0.0;
};

struct AttackResult {
  bool success = false;
  std::int64_t queries_used = 0;
  SubspaceCoeffs final_coeffs;
  Perturbation final_delta;
  std::vector<TracePoint> trace;
  std::optional<Label> adversarial_label;
  /// Rows in the GP dataset when the attack returned.
  std::int64_t gp_rows = 0;
  /// Hyperparameter fits that fell back to defaults.
  int hyper_warnings = 0;
  /// Set when the oracle failed mid-attack; queries_used is still exact.
  std::optional<std::string> error;
};

/// n0 draws from the configured distribution, each projected onto the eps-ball.
std::vector<SubspaceCoeffs> init_design(const AttackConfig& config, Eigen::Index dim,
                                        std::mt19937_64& rng);

/// Bayesian-optimization attack over the configured subspace. Returns at the
/// first successful query or once the budget is spent. The GP dataset only
/// grows on failed queries.
AttackResult bayes_attack(const ImageTensor& x0, Label y0, const AttackConfig& config,
                          Classifier& model);

/// Baseline: fresh init-distribution draws, projected, until success or budget.
AttackResult random_search_attack(const ImageTensor& x0, Label y0, const AttackConfig& config,
                                  Classifier& model);

}  // namespace sbo
