#pragma once

#include "sbo/gp.hpp"
#include "sbo/optimize.hpp"

#include <optional>
#include <random>
#include <string_view>

namespace sbo {

enum class AcquisitionKind { EI, PI, UCB, PosteriorMean };

std::string_view to_string(AcquisitionKind k);
AcquisitionKind parse_acquisition(std::string_view s);

/// Acquisition function and the incumbent it improves upon.
struct AcquisitionSpec {
  AcquisitionKind kind = AcquisitionKind::EI;
  /// Exploration weight; present iff kind == UCB.
  std::optional<double> ucb_beta;
  /// Best observed objective value h*_n.
  double best_value = 0.0;

  void validate() const;
};

/// Axis-aligned search region, lower < upper elementwise.
struct SearchBox {
  Vector lower;
  Vector upper;

  static SearchBox symmetric(Eigen::Index dim, double half_width);
  void validate() const;
  [[nodiscard]] bool contains(const Vector& x) const;
};

/// Below this posterior standard deviation the acquisitions use their
/// deterministic branch with zero gradient.
inline constexpr double kStdFloor = 1e-12;

double normal_pdf(double z);
double normal_cdf(double z);

/// E[max(h - best, 0)] for h ~ N(mean, std^2).
double expected_improvement(double mean, double std, double best);

struct AcquisitionValue {
  double value = 0.0;
  Vector grad;
};

AcquisitionValue acquisition_value_and_grad(const GPState& gp, const AcquisitionSpec& spec,
                                            const Vector& x);

struct AcquisitionOptions {
  int restarts = 10;
  LbfgsOptions lbfgs{};
};

/// Multi-start bounded quasi-Newton ascent. Starts are `restarts` uniform draws
/// in the box followed by `extra_starts` (e.g. the incumbent); the best point
/// among every start and every end point is returned.
Vector maximize_acquisition(const GPState& gp, const AcquisitionSpec& spec, const SearchBox& box,
                            const AcquisitionOptions& options, std::mt19937_64& rng,
                            const std::vector<Vector>& extra_starts = {});

}  // namespace sbo
