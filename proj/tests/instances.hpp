#pragma once

#include "sbo/oracle.hpp"
#include "sbo/subspace.hpp"

#include <cmath>
#include <memory>
#include <random>

namespace sbo::test {

// A ball classifier and a class-0 image whose smallest flipping linf
// perturbation is exactly `margin`. The image sits at center + a u, with u a
// unit direction that is constant on 4x4 blocks. Only delta = margin * sign(u)
// reaches the boundary at that size:
//   ||a u + delta||^2 <= a^2 + 2 a t ||u||_1 + t^2 D  for ||delta||_inf <= t,
// so R^2 = a^2 + 2 a m ||u||_1 + m^2 D puts the boundary at t = m.
// kappa scales the offset a relative to m D / ||u||_1.
struct BallInstance {
  std::unique_ptr<BallClassifier> model;
  ImageTensor x0;
  double margin = 0.0;
};

inline BallInstance offset_ball(std::uint64_t seed, double kappa = 2.0, double margin = 0.05,
                                Shape shape = {3, 16, 16}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int block = 4;
  const SubspaceSpec coarse{BasisMode::NNI, shape.height / block, shape.channels, shape.height};
  Vector low(coarse.coeff_count());
  for (auto& v : low) v = nd(rng);
  Vector u = nni_upsample(low, coarse).delta.data;
  u /= u.norm();
  const double d = static_cast<double>(shape.size());
  const double l1 = u.lpNorm<1>();
  const double a = kappa * margin * d / l1;
  const double r = std::sqrt(a * a + 2.0 * a * margin * l1 + margin * margin * d);
  const Vector center = Vector::Constant(shape.size(), 0.5);
  BallInstance inst;
  inst.model = std::make_unique<BallClassifier>(shape, center, r);
  inst.x0 = ImageTensor(shape, center + a * u);
  inst.margin = margin;
  return inst;
}

}  // namespace sbo::test
