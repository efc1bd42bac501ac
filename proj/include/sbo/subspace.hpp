#pragma once

#include "sbo/types.hpp"

#include <complex>
#include <string_view>

namespace sbo {

using ComplexMatrix = Eigen::MatrixXcd;

/// How low-dimensional coefficients map to an image-space perturbation.
enum class BasisMode { FFT_Full, FFT_Cos, FFT_Sin, NNI };

std::string_view to_string(BasisMode m);
BasisMode parse_basis(std::string_view s);
[[nodiscard]] inline bool is_fft(BasisMode m) { return m != BasisMode::NNI; }

struct SubspaceSpec {
  BasisMode mode = BasisMode::NNI;
  /// k: side of the low-dimensional square.
  int low_dim = 1;
  int channels = 1;
  /// d: side of the (square) image.
  int full_dim = 1;

  /// Throws InvalidArgument on a violated invariant. FFT modes need
  /// 1 <= k <= d/2 so that the Hermitian mirror of the k x k square is disjoint
  /// from it; NNI allows 1 <= k <= d.
  void validate() const;
  /// C*k*k, or C*k*k*2 for FFT_Full.
  [[nodiscard]] Eigen::Index coeff_count() const;
  [[nodiscard]] Shape image_shape() const { return {channels, full_dim, full_dim}; }
};

/// Image-space perturbation; entries may take either sign.
struct Perturbation {
  ImageTensor delta;
  NormKind norm_kind = NormKind::Linf;
};

/// Unitary 2D DFT: X[u,v] = (1/d) sum x[i,j] exp(-2 pi i (ui + vj) / d).
ComplexMatrix dft2(const ComplexMatrix& x);
ComplexMatrix dft2(const Matrix& x);
/// Inverse of dft2, also unitary.
ComplexMatrix idft2(const ComplexMatrix& spectrum);

/// Places coefficients in the low-frequency k x k corner of each channel's
/// spectrum, completes it with Hermitian symmetry and inverts. Linear, exactly
/// real, and ||output||_2 == ||coeffs||_2.
Perturbation fft_embed(const SubspaceCoeffs& coeffs, const SubspaceSpec& spec);

/// Channel-wise nearest-neighbour upsampling: out(i, j) = in(floor(i k / d), floor(j k / d)).
Perturbation nni_upsample(const SubspaceCoeffs& coeffs, const SubspaceSpec& spec);

/// Dispatches to fft_embed or nni_upsample by spec.mode.
Perturbation map_to_image(const SubspaceCoeffs& coeffs, const SubspaceSpec& spec, NormKind norm);

SubspaceCoeffs project_linf(const SubspaceCoeffs& coeffs, double eps);
SubspaceCoeffs project_l2(const SubspaceCoeffs& coeffs, double eps);
SubspaceCoeffs project(const SubspaceCoeffs& coeffs, double eps, NormKind norm);

/// Norm of a vector in the given kind.
double norm_of(const Vector& v, NormKind norm);

}  // namespace sbo
