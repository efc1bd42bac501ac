#include "sbo/subspace.hpp"

#include "sbo/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sbo {
namespace {

// Unitary DFT matrix F[u, i] = exp(sign * 2 pi i u i / d) / sqrt(d).
ComplexMatrix dft_matrix(int d, double sign) {
  ComplexMatrix f(d, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int u = 0; u < d; ++u) {
    for (int i = 0; i < d; ++i) {
      // Reduce the exponent mod d first to keep the phase argument small.
      const long long idx = (static_cast<long long>(u) * i) % d;
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(idx) / d;
      f(u, i) = std::polar(scale, angle);
    }
  }
  return f;
}

void check_square(const ComplexMatrix& x, const char* what) {
  if (x.rows() != x.cols() || x.rows() < 1) {
    throw InvalidArgument(std::string(what) + ": expected a non-empty square array");
  }
}

void check_length(const SubspaceCoeffs& c, const SubspaceSpec& spec, const char* what) {
  if (c.size() != spec.coeff_count()) {
    throw InvalidArgument(std::string(what) + ": coefficient length " + std::to_string(c.size()) +
                          " does not match expected " + std::to_string(spec.coeff_count()));
  }
}

}  // namespace

std::string_view to_string(BasisMode m) {
  switch (m) {
    case BasisMode::FFT_Full: return "FFT_Full";
    case BasisMode::FFT_Cos: return "FFT_Cos";
    case BasisMode::FFT_Sin: return "FFT_Sin";
    case BasisMode::NNI: return "NNI";
  }
  return "?";
}

BasisMode parse_basis(std::string_view s) {
  if (s == "FFT_Full" || s == "fft_full" || s == "full") return BasisMode::FFT_Full;
  if (s == "FFT_Cos" || s == "fft_cos" || s == "cos") return BasisMode::FFT_Cos;
  if (s == "FFT_Sin" || s == "fft_sin" || s == "sin") return BasisMode::FFT_Sin;
  if (s == "NNI" || s == "nni") return BasisMode::NNI;
  throw InvalidArgument("unknown basis mode '" + std::string(s) + "'");
}

void SubspaceSpec::validate() const {
  if (channels < 1 || full_dim < 1) throw InvalidArgument("SubspaceSpec: channels and full_dim must be >= 1");
  if (low_dim < 1 || low_dim > full_dim) throw InvalidArgument("SubspaceSpec: need 1 <= low_dim <= full_dim");
  if (is_fft(mode) && 2 * low_dim > full_dim) {
    throw InvalidArgument("SubspaceSpec: FFT modes need low_dim <= full_dim / 2 (got k=" +
                          std::to_string(low_dim) + ", d=" + std::to_string(full_dim) + ")");
  }
}

Eigen::Index SubspaceSpec::coeff_count() const {
  const Eigen::Index base = static_cast<Eigen::Index>(channels) * low_dim * low_dim;
  return mode == BasisMode::FFT_Full ? 2 * base : base;
}

ComplexMatrix dft2(const ComplexMatrix& x) {
  check_square(x, "dft2");
  const ComplexMatrix f = dft_matrix(static_cast<int>(x.rows()), -1.0);
  return f * x * f.transpose();
}

ComplexMatrix dft2(const Matrix& x) { return dft2(ComplexMatrix(x.cast<std::complex<double>>())); }

ComplexMatrix idft2(const ComplexMatrix& spectrum) {
  check_square(spectrum, "idft2");
  const ComplexMatrix f = dft_matrix(static_cast<int>(spectrum.rows()), 1.0);
  return f * spectrum * f.transpose();
}

Perturbation fft_embed(const SubspaceCoeffs& coeffs, const SubspaceSpec& spec) {
  spec.validate();
  if (!is_fft(spec.mode)) throw InvalidArgument("fft_embed: spec.mode must be an FFT mode");
  check_length(coeffs, spec, "fft_embed");
  const int d = spec.full_dim;
  const int k = spec.low_dim;
  const Eigen::Index per_square = static_cast<Eigen::Index>(k) * k;
  const Eigen::Index per_channel = spec.mode == BasisMode::FFT_Full ? 2 * per_square : per_square;
  const double half = 1.0 / std::numbers::sqrt2;

  // Adds value (a real or imaginary unit) at bin (u, v) and its conjugate at
  // the mirror so the inverse is real. Self-conjugate bins only carry a real part.
  auto place = [&](ComplexMatrix& spec_c, int u, int v, std::complex<double> value) {
    const int mu = (d - u) % d;
    const int mv = (d - v) % d;
    if (mu == u && mv == v) {
      spec_c(u, v) += value.real();
      return;
    }
    spec_c(u, v) += value * half;
    spec_c(mu, mv) += std::conj(value) * half;
  };

  ImageTensor out = ImageTensor::zeros(spec.image_shape());
  for (int c = 0; c < spec.channels; ++c) {
    ComplexMatrix spectrum = ComplexMatrix::Zero(d, d);
    const double* base = coeffs.data() + c * per_channel;
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        const Eigen::Index idx = static_cast<Eigen::Index>(u) * k + v;
        const bool dc = (u == 0 && v == 0);
        switch (spec.mode) {
          case BasisMode::FFT_Cos:
            place(spectrum, u, v, {base[idx], 0.0});
            break;
          case BasisMode::FFT_Sin:
            // The sine component of the zero-frequency bin vanishes; that slot
            // carries the constant (DC) offset instead.
            place(spectrum, u, v, dc ? std::complex<double>{base[idx], 0.0}
                                     : std::complex<double>{0.0, base[idx]});
            break;
          case BasisMode::FFT_Full: {
            place(spectrum, u, v, {base[idx], 0.0});
            const double im = base[per_square + idx];
            // Same degeneracy: the DC sine slot drives the cosine of bin (k, 0),
            // which lies outside the square and its mirror.
            if (dc) {
              place(spectrum, k % d, 0, {im, 0.0});
            } else {
              place(spectrum, u, v, {0.0, im});
            }
            break;
          }
          case BasisMode::NNI: break;
        }
      }
    }
    const ComplexMatrix img = idft2(spectrum);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) out.at(c, i, j) = img(i, j).real();
    }
  }
  return {std::move(out), NormKind::L2};
}

Perturbation nni_upsample(const SubspaceCoeffs& coeffs, const SubspaceSpec& spec) {
  spec.validate();
  if (spec.mode != BasisMode::NNI) throw InvalidArgument("nni_upsample: spec.mode must be NNI");
  check_length(coeffs, spec, "nni_upsample");
  const int d = spec.full_dim;
  const int k = spec.low_dim;
  ImageTensor out = ImageTensor::zeros(spec.image_shape());
  for (int c = 0; c < spec.channels; ++c) {
    for (int i = 0; i < d; ++i) {
      const long long si = static_cast<long long>(i) * k / d;
      for (int j = 0; j < d; ++j) {
        const long long sj = static_cast<long long>(j) * k / d;
        out.at(c, i, j) = coeffs[(static_cast<Eigen::Index>(c) * k + si) * k + sj];
      }
    }
  }
  return {std::move(out), NormKind::Linf};
}

Perturbation map_to_image(const SubspaceCoeffs& coeffs, const SubspaceSpec& spec, NormKind norm) {
  Perturbation p = is_fft(spec.mode) ? fft_embed(coeffs, spec) : nni_upsample(coeffs, spec);
  p.norm_kind = norm;
  return p;
}

SubspaceCoeffs project_linf(const SubspaceCoeffs& coeffs, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("project_linf: eps must be positive");
  return coeffs.cwiseMax(-eps).cwiseMin(eps);
}

SubspaceCoeffs project_l2(const SubspaceCoeffs& coeffs, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("project_l2: eps must be positive");
  const double n = coeffs.norm();
  if (n <= eps) return coeffs;
  SubspaceCoeffs out = coeffs * (eps / n);
  // Rounding can leave the scaled norm a few ulps above eps; shrink until it
  // is not, so that projecting again is a no-op.
  for (double m = out.norm(); m > eps; m = out.norm()) {
    out *= std::nextafter(eps / m, 0.0);
  }
  return out;
}

SubspaceCoeffs project(const SubspaceCoeffs& coeffs, double eps, NormKind norm) {
  return norm == NormKind::L2 ? project_l2(coeffs, eps) : project_linf(coeffs, eps);
}

double norm_of(const Vector& v, NormKind norm) {
  if (v.size() == 0) return 0.0;
  return norm == NormKind::L2 ? v.norm() : v.lpNorm<Eigen::Infinity>();
}

}  // namespace sbo
