#include "sbo/acquisition.hpp"

#include "sbo/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sbo {

std::string_view to_string(AcquisitionKind k) {
  switch (k) {
    case AcquisitionKind::EI: return "EI";
    case AcquisitionKind::PI: return "PI";
    case AcquisitionKind::UCB: return "UCB";
    case AcquisitionKind::PosteriorMean: return "PosteriorMean";
  }
  return "?";
}

AcquisitionKind parse_acquisition(std::string_view s) {
  if (s == "EI" || s == "ei") return AcquisitionKind::EI;
  if (s == "PI" || s == "pi") return AcquisitionKind::PI;
  if (s == "UCB" || s == "ucb") return AcquisitionKind::UCB;
  if (s == "PosteriorMean" || s == "mean" || s == "PM") return AcquisitionKind::PosteriorMean;
  throw InvalidArgument("unknown acquisition '" + std::string(s) + "'");
}

void AcquisitionSpec::validate() const {
  if ((kind == AcquisitionKind::UCB) != ucb_beta.has_value()) {
    throw InvalidArgument("AcquisitionSpec: ucb_beta must be set iff kind is UCB");
  }
  if (ucb_beta && !(*ucb_beta > 0.0)) throw InvalidArgument("AcquisitionSpec: ucb_beta must be positive");
}

SearchBox SearchBox::symmetric(Eigen::Index dim, double half_width) {
  return {Vector::Constant(dim, -half_width), Vector::Constant(dim, half_width)};
}

void SearchBox::validate() const {
  if (lower.size() != upper.size()) throw InvalidArgument("SearchBox: dimension mismatch");
  if (!(lower.array() < upper.array()).all()) throw InvalidArgument("SearchBox: need lower < upper");
}

bool SearchBox::contains(const Vector& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() &&
         (x.array() <= upper.array()).all();
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double expected_improvement(double mean, double std, double best) {
  if (std < 0.0) throw InvalidArgument("expected_improvement: negative std");
  if (std < kStdFloor) return std::max(mean - best, 0.0);
  const double z = (mean - best) / std;
  return std::max(0.0, std * (z * normal_cdf(z) + normal_pdf(z)));
}

AcquisitionValue acquisition_value_and_grad(const GPState& gp, const AcquisitionSpec& spec,
                                            const Vector& x) {
  const PosteriorWithGrad p = gp_posterior_with_grad(gp, x);
  const double sd = std::sqrt(p.variance);
  AcquisitionValue out;
  out.grad = Vector::Zero(x.size());
  if (spec.kind == AcquisitionKind::PosteriorMean) {
    out.value = p.mean;
    out.grad = p.dmean;
    return out;
  }
  if (sd < kStdFloor) {
    switch (spec.kind) {
      case AcquisitionKind::EI: out.value = std::max(p.mean - spec.best_value, 0.0); break;
      case AcquisitionKind::PI: out.value = p.mean > spec.best_value ? 1.0 : 0.0; break;
      case AcquisitionKind::UCB: out.value = p.mean; break;
      case AcquisitionKind::PosteriorMean: break;
    }
    return out;
  }
  const Vector dsd = p.dvariance / (2.0 * sd);
  const double z = (p.mean - spec.best_value) / sd;
  switch (spec.kind) {
    case AcquisitionKind::EI: {
      out.value = sd * (z * normal_cdf(z) + normal_pdf(z));
      out.grad = normal_cdf(z) * p.dmean + normal_pdf(z) * dsd;
      break;
    }
    case AcquisitionKind::PI: {
      out.value = normal_cdf(z);
      out.grad = normal_pdf(z) / sd * (p.dmean - z * dsd);
      break;
    }
    case AcquisitionKind::UCB: {
      const double beta = spec.ucb_beta.value_or(2.0);
      out.value = p.mean + beta * sd;
      out.grad = p.dmean + beta * dsd;
      break;
    }
    case AcquisitionKind::PosteriorMean: break;
  }
  return out;
}

Vector maximize_acquisition(const GPState& gp, const AcquisitionSpec& spec, const SearchBox& box,
                            const AcquisitionOptions& options, std::mt19937_64& rng,
                            const std::vector<Vector>& extra_starts) {
  spec.validate();
  box.validate();
  if (options.restarts < 1) throw InvalidArgument("maximize_acquisition: restarts must be >= 1");
  if (box.lower.size() != gp.dim()) throw InvalidArgument("maximize_acquisition: box dimension mismatch");

  std::vector<Vector> starts;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < options.restarts; ++r) {
    Vector s(gp.dim());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      s[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * unit(rng);
    }
    starts.push_back(std::move(s));
  }
  for (const auto& e : extra_starts) {
    if (e.size() != gp.dim()) throw InvalidArgument("maximize_acquisition: start dimension mismatch");
    starts.push_back(e.cwiseMax(box.lower).cwiseMin(box.upper));
  }

  const Objective neg = [&](const Vector& x, Vector& g) {
    AcquisitionValue a = acquisition_value_and_grad(gp, spec, x);
    g = -a.grad;
    return -a.value;
  };

  Vector best;
  double best_val = -std::numeric_limits<double>::infinity();
  auto consider = [&](const Vector& x) {
    const double v = acquisition_value_and_grad(gp, spec, x).value;
    if (std::isfinite(v) && v > best_val) {
      best_val = v;
      best = x;
    }
  };
  for (const auto& s : starts) {
    consider(s);
    const LbfgsResult r = minimize_box(neg, s, box.lower, box.upper, options.lbfgs);
    consider(r.x);
  }
  if (best.size() == 0) best = starts.front();
  return best.cwiseMax(box.lower).cwiseMin(box.upper);
}

}  // namespace sbo
