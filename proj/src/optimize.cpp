#include "sbo/optimize.hpp"

#include "sbo/error.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace sbo {
namespace {

Vector clip(const Vector& x, const Vector& lower, const Vector& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

// Zero the components of d that would push through an active bound.
void freeze_active(Vector& d, const Vector& x, const Vector& lower, const Vector& upper) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if ((x[i] <= lower[i] && d[i] < 0.0) || (x[i] >= upper[i] && d[i] > 0.0)) d[i] = 0.0;
  }
}

struct Pair {
  Vector s;
  Vector y;
  double rho;
};

Vector two_loop(const Vector& g, const std::deque<Pair>& mem) {
  Vector q = g;
  std::vector<double> a(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    a[k] = mem[k].rho * mem[k].s.dot(q);
    q -= a[k] * mem[k].y;
  }
  if (!mem.empty()) {
    const auto& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const double b = mem[k].rho * mem[k].y.dot(q);
    q += (a[k] - b) * mem[k].s;
  }
  return -q;
}

double safe_eval(const Objective& f, const Vector& x, Vector& g) {
  g.setZero(x.size());
  const double v = f(x, g);
  if (!std::isfinite(v) || !g.allFinite()) return std::numeric_limits<double>::infinity();
  return v;
}

}  // namespace

LbfgsResult minimize_box(const Objective& f, const Vector& x0, const Vector& lower,
                         const Vector& upper, const LbfgsOptions& options) {
  if (x0.size() != lower.size() || x0.size() != upper.size()) {
    throw InvalidArgument("minimize_box: dimension mismatch");
  }
  if ((lower.array() > upper.array()).any()) {
    throw InvalidArgument("minimize_box: lower bound exceeds upper bound");
  }
  LbfgsResult res;
  res.x = clip(x0, lower, upper);
  Vector g;
  res.value = safe_eval(f, res.x, g);
  if (!std::isfinite(res.value)) {
    res.failed = true;
    return res;
  }

  std::deque<Pair> mem;
  bool moved = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Vector pg = res.x - clip(res.x - g, lower, upper);
    // Relative to |f| so tiny-scale objectives (EI on a flat posterior) still move.
    const double tol = options.grad_tol * std::max(std::abs(res.value), 1e-8);
    if (pg.lpNorm<Eigen::Infinity>() < tol) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    Vector xn;
    Vector gn;
    double fn = 0.0;
    // Quasi-Newton direction first, then steepest descent if that stalls.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        if (mem.empty()) break;
        mem.clear();
      }
      Vector d = mem.empty() ? Vector(-g) : two_loop(g, mem);
      freeze_active(d, res.x, lower, upper);
      if (g.dot(d) >= 0.0) {
        d = -g;
        freeze_active(d, res.x, lower, upper);
        mem.clear();
      }
      if (d.lpNorm<Eigen::Infinity>() == 0.0) break;
      double step = 1.0;
      if (mem.empty()) {
        // Unscaled gradient step: cap its length relative to the box.
        const double box = (upper - lower).lpNorm<Eigen::Infinity>();
        const double dn = d.lpNorm<Eigen::Infinity>();
        if (std::isfinite(box) && dn > 0.0) step = std::min(1.0, 0.5 * box / dn);
      }
      for (int bt = 0; bt < options.max_backtracks; ++bt) {
        xn = clip(res.x + step * d, lower, upper);
        fn = safe_eval(f, xn, gn);
        const double decrease = g.dot(xn - res.x);
        if (std::isfinite(fn) && fn <= res.value + 1e-4 * decrease && decrease < 0.0) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (!accepted) {
      res.failed = !moved;
      res.converged = moved;
      break;
    }

    const Vector s = xn - res.x;
    const Vector y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      mem.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(mem.size()) > options.memory) mem.pop_front();
    }
    const double prev = res.value;
    res.x = std::move(xn);
    res.value = fn;
    g = std::move(gn);
    moved = true;
    res.iterations = iter + 1;
    if (std::abs(prev - fn) <= 1e-14 * (1.0 + std::abs(prev))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace sbo
