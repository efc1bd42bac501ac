#include "sbo/attack.hpp"

#include "sbo/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace sbo {

std::string_view to_string(InitDistribution d) {
  return d == InitDistribution::StdNormal ? "StdNormal" : "Uniform";
}

InitDistribution parse_init(std::string_view s) {
  if (s == "StdNormal" || s == "normal") return InitDistribution::StdNormal;
  if (s == "Uniform" || s == "uniform") return InitDistribution::Uniform;
  throw InvalidArgument("unknown init distribution '" + std::string(s) + "'");
}

AttackConfig AttackConfig::defaults_for(NormKind norm) {
  AttackConfig c;
  c.norm = norm;
  if (norm == NormKind::Linf) {
    c.basis_mode = BasisMode::NNI;
    c.init_dist = InitDistribution::StdNormal;
  } else {
    c.basis_mode = BasisMode::FFT_Full;
    c.init_dist = InitDistribution::Uniform;
  }
  return c;
}

void AttackConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("AttackConfig: eps must be positive");
  if (budget < 1) throw InvalidArgument("AttackConfig: budget must be positive");
  if (n_init < 1) throw InvalidArgument("AttackConfig: n_init must be >= 1");
  if (n_init >= budget) throw InvalidArgument("AttackConfig: n_init must be below the budget");
  if (low_dim_side < 1) throw InvalidArgument("AttackConfig: low_dim_side must be >= 1");
  if (gp.refit_every < 1 || gp.hyper_restarts < 1 || gp.acquisition.restarts < 1) {
    throw InvalidArgument("AttackConfig: GP cadence and restart counts must be >= 1");
  }
  if (acquisition == AcquisitionKind::UCB && !(ucb_beta > 0.0)) {
    throw InvalidArgument("AttackConfig: ucb_beta must be positive");
  }
}

SubspaceSpec AttackConfig::subspace_for(Shape image) const {
  if (image.height != image.width) throw InvalidArgument("attack: images must be square");
  SubspaceSpec s{basis_mode, low_dim_side, image.channels, image.height};
  s.validate();
  return s;
}

std::vector<SubspaceCoeffs> init_design(const AttackConfig& config, Eigen::Index dim,
                                        std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::vector<SubspaceCoeffs> out;
  out.reserve(static_cast<std::size_t>(config.n_init));
  for (int n = 0; n < config.n_init; ++n) {
    SubspaceCoeffs c(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      c[i] = config.init_dist == InitDistribution::StdNormal ? normal(rng) : uniform(rng);
    }
    out.push_back(project(c, config.eps, config.norm));
  }
  return out;
}

namespace {

// Shared query/bookkeeping for both attacks.
class AttackRun {
 public:
  AttackRun(const ImageTensor& x0, Label y0, const AttackConfig& config, Classifier& model)
      : x0_(x0), y0_(y0), config_(config), oracle_(model, config.budget) {
    config_.validate();
    if (!(x0.shape == model.input_shape())) throw InvalidArgument("attack: image shape does not match model");
    config_.objective.validate(y0, model.num_classes());
    spec_ = config_.subspace_for(x0.shape);
  }

  [[nodiscard]] Eigen::Index dim() const { return spec_.coeff_count(); }
  [[nodiscard]] bool exhausted() const { return oracle_.ledger().exhausted(); }
  AttackResult& result() { return result_; }

  /// Maps, queries and records one candidate. Returns the objective value.
  ObjectiveValue evaluate(const SubspaceCoeffs& coeffs) {
    Perturbation delta = map_to_image(coeffs, spec_, config_.norm);
    const ObjectiveValue ov = objective(config_.objective, oracle_, x0_, y0_, delta);
    result_.queries_used = oracle_.ledger().used();
    result_.trace.push_back({result_.queries_used, ov.value});
    result_.final_coeffs = coeffs;
    result_.final_delta = std::move(delta);
    if (ov.success) {
      result_.success = true;
      result_.adversarial_label = ov.predicted;
    }
    return ov;
  }

  void fail(const Error& e) {
    result_.queries_used = oracle_.ledger().used();
    result_.error = e.what();
  }

 private:
  const ImageTensor& x0_;
  Label y0_;
  AttackConfig config_;
  Oracle oracle_;
  SubspaceSpec spec_;
  AttackResult result_;
};

bool should_refit(Eigen::Index rows, int n_init, int every) {
  const Eigen::Index extra = rows - n_init;
  if (extra <= 2) return true;
  return extra % every == 0;
}

Matrix stack_rows(const std::vector<SubspaceCoeffs>& rows, Eigen::Index dim) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return m;
}

}  // namespace

AttackResult bayes_attack(const ImageTensor& x0, Label y0, const AttackConfig& config,
                          Classifier& model) {
  AttackRun run(x0, y0, config, model);
  std::mt19937_64 rng(config.seed);
  const Eigen::Index dim = run.dim();

  std::vector<SubspaceCoeffs> rows;
  std::vector<double> values;
  auto record_failure = [&](const SubspaceCoeffs& c, double v) {
    rows.push_back(c);
    values.push_back(v);
    run.result().gp_rows = static_cast<std::int64_t>(rows.size());
  };

  try {
    for (const auto& c : init_design(config, dim, rng)) {
      if (run.exhausted()) return run.result();
      const ObjectiveValue ov = run.evaluate(c);
      if (ov.success) return run.result();
      record_failure(c, ov.value);
    }

    // Lengthscales are measured in box half-widths times sqrt(d'): r^2 sums d'
    // terms, so this keeps prior-typical scaled distances O(1) in any dimension.
    HyperPrior prior;
    prior.lengthscale_unit = config.eps * std::sqrt(static_cast<double>(dim));
    prior.noise_variance = config.gp.noise_variance;
    KernelHyper hyper{1.0, Vector::Constant(dim, prior.lengthscale_unit), config.gp.noise_variance};
    double mean_const = 0.0;
    const SearchBox box = SearchBox::symmetric(dim, config.eps);
    AcquisitionSpec acq;
    acq.kind = config.acquisition;
    if (acq.kind == AcquisitionKind::UCB) acq.ucb_beta = config.ucb_beta;

    while (!run.exhausted()) {
      const Matrix inputs = stack_rows(rows, dim);
      const Vector vals = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
      if (should_refit(inputs.rows(), config.n_init, config.gp.refit_every)) {
        if (inputs.rows() >= 2) {
          const HyperFit fit = fit_hyperparameters(inputs, vals, prior, config.gp.hyper_restarts, rng());
          hyper = fit.hyper;
          mean_const = fit.mean_const;
          if (fit.warning) ++run.result().hyper_warnings;
        } else {
          mean_const = vals.mean();
        }
      }
      const GPState gp = gp_fit(inputs, vals, hyper, mean_const);

      Eigen::Index incumbent = 0;
      vals.maxCoeff(&incumbent);
      acq.best_value = vals[incumbent];
      SubspaceCoeffs cand = maximize_acquisition(gp, acq, box, config.gp.acquisition, rng,
                                                 {inputs.row(incumbent).transpose()});
      cand = project(cand, config.eps, config.norm);

      // Nudge exact repeats off existing rows to keep the kernel matrix regular.
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& r : rows) nearest = std::min(nearest, (r - cand).norm());
      if (nearest < 1e-10) {
        std::uniform_real_distribution<double> jitter(-1e-6 * config.eps, 1e-6 * config.eps);
        for (Eigen::Index i = 0; i < dim; ++i) cand[i] += jitter(rng);
        cand = project(cand, config.eps, config.norm);
      }

      const ObjectiveValue ov = run.evaluate(cand);
      if (ov.success) return run.result();
      record_failure(cand, ov.value);
    }
  } catch (const TransportError& e) {
    run.fail(e);
  } catch (const ProtocolError& e) {
    run.fail(e);
  }
  return run.result();
}

AttackResult random_search_attack(const ImageTensor& x0, Label y0, const AttackConfig& config,
                                  Classifier& model) {
  AttackRun run(x0, y0, config, model);
  std::mt19937_64 rng(config.seed);
  AttackConfig one = config;
  one.n_init = 1;
  try {
    while (!run.exhausted()) {
      const SubspaceCoeffs c = init_design(one, run.dim(), rng).front();
      const ObjectiveValue ov = run.evaluate(c);
      if (ov.success) break;
    }
  } catch (const TransportError& e) {
    run.fail(e);
  } catch (const ProtocolError& e) {
    run.fail(e);
  }
  return run.result();
}

}  // namespace sbo
