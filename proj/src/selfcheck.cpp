#include "sbo/selfcheck.hpp"

#include "sbo/acquisition.hpp"
#include "sbo/gp.hpp"
#include "sbo/subspace.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace sbo {
namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

CheckResult make(std::string name, double worst, double tol) {
  std::ostringstream os;
  os << "worst=" << worst << " tol=" << tol;
  return {std::move(name), worst <= tol, os.str()};
}

}  // namespace

std::vector<CheckResult> run_self_checks(std::uint64_t seed, int instances) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(2, 16);
  std::vector<CheckResult> out;

  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int d = side(rng);
    const Matrix x = random_matrix(rng, d, d);
    const ComplexMatrix back = idft2(dft2(x));
    worst = std::max(worst, (back.real() - x).norm() / x.norm() + back.imag().norm());
  }
  out.push_back(make("dft2/idft2 round trip", worst, 1e-9));

  worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int d = side(rng);
    const Matrix x = random_matrix(rng, d, d);
    worst = std::max(worst, std::abs(dft2(x).norm() - x.norm()) / x.norm());
  }
  out.push_back(make("dft2 isometry", worst, 1e-9));

  worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    for (BasisMode mode : {BasisMode::FFT_Cos, BasisMode::FFT_Sin, BasisMode::FFT_Full}) {
      const int d = std::uniform_int_distribution<int>(2, 16)(rng);
      const int k = std::uniform_int_distribution<int>(1, d / 2)(rng);
      const SubspaceSpec spec{mode, k, 3, d};
      const Vector c = random_matrix(rng, spec.coeff_count(), 1).col(0);
      const Perturbation p = fft_embed(c, spec);
      worst = std::max(worst, std::abs(p.delta.data.norm() - c.norm()) / c.norm());
    }
  }
  out.push_back(make("fft_embed l2 isometry", worst, 1e-9));

  worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int d = side(rng);
    const int k = std::uniform_int_distribution<int>(1, d)(rng);
    const SubspaceSpec spec{BasisMode::NNI, k, 3, d};
    const Vector c = random_matrix(rng, spec.coeff_count(), 1).col(0);
    const Perturbation p = nni_upsample(c, spec);
    worst = std::max(worst, std::abs(p.delta.data.lpNorm<Eigen::Infinity>() - c.lpNorm<Eigen::Infinity>()));
  }
  out.push_back(make("nni_upsample linf preservation", worst, 0.0));

  worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const Vector c = random_matrix(rng, 20, 1, -3.0, 3.0).col(0);
    const double eps = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
    const Vector p2 = project_l2(c, eps);
    const Vector pi = project_linf(c, eps);
    worst = std::max({worst, std::max(0.0, p2.norm() - eps - 1e-12),
                      std::max(0.0, pi.lpNorm<Eigen::Infinity>() - eps),
                      (project_l2(p2, eps) - p2).norm(), (project_linf(pi, eps) - pi).norm()});
  }
  out.push_back(make("projection feasibility and idempotence", worst, 1e-12));

  // GP posterior vs a dense solve, and likelihood gradient vs central differences.
  double post_worst = 0.0;
  double grad_worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 10)(rng);
    const int dim = std::uniform_int_distribution<int>(1, 4)(rng);
    const Matrix x = random_matrix(rng, n, dim);
    const Vector v = random_matrix(rng, n, 1).col(0);
    KernelHyper h{std::exp(random_matrix(rng, 1, 1, -1, 1)(0)),
                  random_matrix(rng, dim, 1, 0.3, 1.5).col(0), 1e-3};
    const double mu = random_matrix(rng, 1, 1)(0);
    const GPState gp = gp_fit(x, v, h, mu);
    const Vector q = random_matrix(rng, dim, 1).col(0);
    Matrix k = kernel_matrix(x, h);
    k.diagonal().array() += h.noise_variance;
    Vector ks(n);
    for (int i = 0; i < n; ++i) ks[i] = matern52(x.row(i).transpose(), q, h);
    const Vector sol = k.fullPivLu().solve(ks);
    const Posterior p = gp_posterior(gp, q);
    post_worst = std::max({post_worst, std::abs(p.mean - (mu + sol.dot((v.array() - mu).matrix()))),
                           std::abs(p.variance - std::max(0.0, h.signal_variance - ks.dot(sol)))});

    const LogLikelihood ll = log_marginal_likelihood(gp);
    for (Eigen::Index j = 0; j < ll.grad.size(); ++j) {
      auto eval = [&](double step) {
        KernelHyper hh = h;
        double m = mu;
        if (j == 0) hh.signal_variance *= std::exp(step);
        else if (j <= dim) hh.lengthscales[j - 1] *= std::exp(step);
        else if (j == dim + 1) hh.noise_variance *= std::exp(step);
        else m += step;
        return log_marginal_likelihood(gp_fit(x, v, hh, m)).value;
      };
      const double fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
      grad_worst = std::max(grad_worst, std::abs(fd - ll.grad[j]) / std::max(1.0, std::abs(fd)));
    }
  }
  out.push_back(make("GP posterior vs dense solve", post_worst, 1e-8));
  out.push_back(make("log-likelihood gradient vs finite differences", grad_worst, 1e-4));

  worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int dim = 3;
    const Matrix x = random_matrix(rng, 6, dim);
    const Vector v = random_matrix(rng, 6, 1).col(0);
    const GPState gp = gp_fit(x, v, {1.0, Vector::Constant(dim, 0.7), 1e-6}, 0.0);
    AcquisitionSpec spec{AcquisitionKind::EI, std::nullopt, v.maxCoeff()};
    const Vector q = random_matrix(rng, dim, 1).col(0);
    if (gp_posterior(gp, q).variance < 1e-6) continue;
    const AcquisitionValue a = acquisition_value_and_grad(gp, spec, q);
    for (int j = 0; j < dim; ++j) {
      Vector qp = q, qm = q;
      qp[j] += 1e-6;
      qm[j] -= 1e-6;
      const double fd = (acquisition_value_and_grad(gp, spec, qp).value -
                         acquisition_value_and_grad(gp, spec, qm).value) / 2e-6;
      worst = std::max(worst, std::abs(fd - a.grad[j]) / std::max(1e-3, std::abs(fd)));
    }
  }
  out.push_back(make("EI gradient vs finite differences", worst, 1e-4));
  return out;
}

}  // namespace sbo
