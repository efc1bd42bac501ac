#include "sbo/acquisition.hpp"
#include "sbo/error.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace sbo;
using sbo::test::uniform_matrix;
using sbo::test::uniform_vector;

namespace {

// Monte Carlo estimate of E[max(h - best, 0)].
double mc_ei(double mean, double std, double best, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(mean, std);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::max(nd(rng) - best, 0.0);
  return acc / n;
}

AcquisitionSpec spec_of(AcquisitionKind k, double best) {
  AcquisitionSpec s;
  s.kind = k;
  s.best_value = best;
  if (k == AcquisitionKind::UCB) s.ucb_beta = 2.0;
  return s;
}

GPState small_gp(std::mt19937_64& rng, int n, int dim, double noise = 1e-6) {
  return gp_fit(uniform_matrix(rng, n, dim), uniform_vector(rng, n),
                {1.0, Vector::Constant(dim, 0.6), noise}, 0.0);
}

}  // namespace

TEST_CASE("expected_improvement closed form and Monte Carlo") {
  CHECK(expected_improvement(0.3, 0.0, 0.5) == 0.0);
  CHECK(expected_improvement(0.7, 0.0, 0.5) == doctest::Approx(0.2));
  CHECK(expected_improvement(0.0, 1.0, 0.0) == doctest::Approx(0.3989422804).epsilon(1e-9));
  CHECK(std::abs(expected_improvement(0.0, 1.0, 0.0) - mc_ei(0.0, 1.0, 0.0, 1000000, 1)) < 3e-3);
  const double want = normal_cdf(1.0) + normal_pdf(1.0);
  CHECK(expected_improvement(1.0, 1.0, 0.0) == doctest::Approx(want).epsilon(1e-12));
  CHECK(std::abs(expected_improvement(1.0, 1.0, 0.0) - mc_ei(1.0, 1.0, 0.0, 1000000, 2)) < 3e-3);
}

TEST_CASE("expected_improvement is nonnegative and grows with std below the incumbent") {
  for (double mean = -3.0; mean <= 3.0; mean += 0.25) {
    double prev = expected_improvement(mean, 0.0, 0.0);
    for (double s = 0.05; s <= 3.0; s += 0.05) {
      const double ei = expected_improvement(mean, s, 0.0);
      CHECK(ei >= 0.0);
      if (mean <= 0.0) CHECK(ei >= prev - 1e-15);
      prev = ei;
    }
  }
}

TEST_CASE("acquisition spec validation") {
  AcquisitionSpec s;
  s.kind = AcquisitionKind::UCB;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s.ucb_beta = 2.0;
  CHECK_NOTHROW(s.validate());
  s.kind = AcquisitionKind::EI;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  CHECK(parse_acquisition("PosteriorMean") == AcquisitionKind::PosteriorMean);
  CHECK_THROWS_AS(parse_acquisition("nope"), InvalidArgument);
  CHECK_THROWS_AS(SearchBox::symmetric(2, 0.0).validate(), InvalidArgument);
}

TEST_CASE("acquisition values agree with posterior formulas") {
  std::mt19937_64 rng(3);
  const GPState gp = small_gp(rng, 6, 2);
  for (int t = 0; t < 20; ++t) {
    const Vector x = uniform_vector(rng, 2);
    const Posterior p = gp_posterior(gp, x);
    const double s = std::sqrt(p.variance);
    CHECK(acquisition_value_and_grad(gp, spec_of(AcquisitionKind::PosteriorMean, 0.1), x).value ==
          doctest::Approx(p.mean).epsilon(1e-12));
    CHECK(acquisition_value_and_grad(gp, spec_of(AcquisitionKind::UCB, 0.1), x).value ==
          doctest::Approx(p.mean + 2.0 * s).epsilon(1e-12));
    CHECK(acquisition_value_and_grad(gp, spec_of(AcquisitionKind::PI, 0.1), x).value ==
          doctest::Approx(normal_cdf((p.mean - 0.1) / s)).epsilon(1e-12));
    CHECK(acquisition_value_and_grad(gp, spec_of(AcquisitionKind::EI, 0.1), x).value ==
          doctest::Approx(expected_improvement(p.mean, s, 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("acquisition gradients match central differences") {
  std::mt19937_64 rng(7);
  const double h = 1e-6;
  for (auto kind : {AcquisitionKind::EI, AcquisitionKind::PI, AcquisitionKind::UCB, AcquisitionKind::PosteriorMean}) {
    double worst = 0.0;
    for (int t = 0; t < 30; ++t) {
      const GPState gp = small_gp(rng, 5, 3);
      const Vector x = uniform_vector(rng, 3);
      if (gp_posterior(gp, x).variance < 1e-4) continue;
      const AcquisitionSpec spec = spec_of(kind, 0.2);
      const AcquisitionValue av = acquisition_value_and_grad(gp, spec, x);
      for (int j = 0; j < 3; ++j) {
        Vector a = x, b = x;
        a[j] += h;
        b[j] -= h;
        const double fd = (acquisition_value_and_grad(gp, spec, a).value -
                           acquisition_value_and_grad(gp, spec, b).value) / (2 * h);
        worst = std::max(worst, std::abs(fd - av.grad[j]) / std::max(1e-2, std::abs(fd)));
      }
    }
    CAPTURE(to_string(kind));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("EI vanishes at a noise-free training point") {
  Matrix x(1, 2);
  x << 0.2, 0.1;
  const GPState at_best = gp_fit(x, Vector::Constant(1, 0.0), {1.0, Vector::Ones(2), 1e-14}, 0.0);
  CHECK(acquisition_value_and_grad(at_best, spec_of(AcquisitionKind::EI, 0.0), x.row(0).transpose()).value < 1e-6);
  const GPState below = gp_fit(x, Vector::Constant(1, -1.0), {1.0, Vector::Ones(2), 1e-14}, 0.0);
  CHECK(acquisition_value_and_grad(below, spec_of(AcquisitionKind::EI, 0.0), x.row(0).transpose()).value < 1e-12);
}

TEST_CASE("maximize_acquisition beats random probes and respects the box") {
  std::mt19937_64 rng(10);
  Matrix x(1, 2);
  x << 0.1, -0.1;
  const GPState gp = gp_fit(x, Vector::Constant(1, -1.0), {1.0, Vector::Constant(2, 0.5), 1e-6}, 0.0);
  const AcquisitionSpec spec = spec_of(AcquisitionKind::EI, -1.0);
  const SearchBox box = SearchBox::symmetric(2, 1.0);
  std::mt19937_64 arng(1);
  const Vector best = maximize_acquisition(gp, spec, box, {}, arng);
  CHECK(box.contains(best));
  const double v = acquisition_value_and_grad(gp, spec, best).value;
  for (int t = 0; t < 100; ++t) {
    const Vector probe = uniform_vector(rng, 2);
    CHECK(v >= acquisition_value_and_grad(gp, spec, probe).value - 1e-9);
  }
}

TEST_CASE("posterior-mean maximizer of a one-point GP is the training point") {
  Matrix x(1, 2);
  x << 0.3, -0.2;
  const GPState gp = gp_fit(x, Vector::Constant(1, 1.0), {1.0, Vector::Constant(2, 0.4), 1e-6}, -0.5);
  std::mt19937_64 rng(4);
  const SearchBox box = SearchBox::symmetric(2, 1.0);
  const Vector best = maximize_acquisition(gp, spec_of(AcquisitionKind::PosteriorMean, 0.0), box, {}, rng);
  CHECK((best - x.row(0).transpose()).cwiseAbs().maxCoeff() / 2.0 < 1e-3);
}

TEST_CASE("maximize_acquisition is deterministic and never worse than its starts") {
  std::mt19937_64 rng(6);
  const GPState gp = small_gp(rng, 8, 3);
  const AcquisitionSpec spec = spec_of(AcquisitionKind::EI, gp.values().maxCoeff());
  const SearchBox box = SearchBox::symmetric(3, 1.0);
  std::mt19937_64 r1(42), r2(42);
  const Vector a = maximize_acquisition(gp, spec, box, {}, r1);
  const Vector b = maximize_acquisition(gp, spec, box, {}, r2);
  CHECK(a == b);

  std::vector<Vector> starts;
  for (int i = 0; i < 5; ++i) starts.push_back(uniform_vector(rng, 3));
  std::mt19937_64 r3(1);
  AcquisitionOptions opts;
  opts.restarts = 1;
  const Vector c = maximize_acquisition(gp, spec, box, opts, r3, starts);
  CHECK(box.contains(c));
  const double vc = acquisition_value_and_grad(gp, spec, c).value;
  for (const auto& s : starts) CHECK(vc >= acquisition_value_and_grad(gp, spec, s).value);
}
