// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>

#include "rotdcf/tensor.hpp"

namespace rotdcf {

enum class Interp { Bilinear, Cubic };

/// rho(u) = u0 + Theta_t (u - u0). Pixel (i, j) is the point (x, y) = (j, i);
/// an unset centre means the grid centre ((W-1)/2, (H-1)/2).
struct RigidRotation {
  double t = 0.0;
  std::optional<double> cx;
  std::optional<double> cy;
  Interp interp = Interp::Bilinear;
};

/// D_rho on every H x W slice of x (the last two axes): out(u) = x(rho u).
/// Bilinear (or Keys cubic) with zero fill, except that multiples of pi/2
/// about the centre of a square grid are exact pixel permutations.
Tensor rotate_image(const Tensor& x, const RigidRotation& rot);
inline Tensor rotate_image(const Tensor& x, double t) { return rotate_image(x, RigidRotation{t, {}, {}}); }

/// Bilinear sample of one H x W plane at fractional (row, col); zero outside.
double bilinear(const double* plane, int H, int W, double row, double col);
/// Keys cubic convolution (a = -1/2) at fractional (row, col); zero outside.
double bicubic(const double* plane, int H, int W, double row, double col);

enum class DeformationKind { SmoothRandom, Translation };

/// Displacement field tau in input pixels, 2 x H x W (row displacement
/// first, then column). grad_sup is the largest spectral norm of the
/// finite-difference Jacobian, which is unit free.
struct DeformationField {
  Tensor tau;
  double sup = 0.0;       // |tau|_inf in pixels
  double grad_sup = 0.0;  // |grad tau|_inf
  bool satisfies_A3() const { return grad_sup < 0.2; }
  int H() const { return static_cast<int>(tau.dim(1)); }
  int W() const { return static_cast<int>(tau.dim(2)); }
};

/// Smooth-random fields are sums of a few low-frequency sinusoids rescaled so
/// the measured |grad tau|_inf equals `magnitude`. Translation fields are the
/// constant of length `magnitude` pointing in a direction drawn from the seed.
DeformationField make_deformation(DeformationKind kind, double magnitude, std::uint64_t seed, int H, int W);
DeformationField make_translation(double drow, double dcol, int H, int W);
/// Recomputes sup and grad_sup from tau.
void measure_deformation(DeformationField& f);

/// D_tau on every H x W slice: out(u) = x(u - tau(u)).
Tensor apply_deformation(const Tensor& x, const DeformationField& tau);
/// The field seen by a feature map pooled by `factor`: tau sampled at the
/// pooled pixel centres and divided by the factor.
DeformationField pool_deformation(const DeformationField& tau, int factor, int H, int W);

/// Rolls the alpha axis (axis 2 of B x C x A x H x W) so out[a] = in[a - s].
Tensor roll_alpha(const Tensor& f, int s);
/// T_rho with t = 2 pi s / N: out(u, a) = f(rho u, a - s). Throws Domain when
/// t is not a multiple of 2 pi / N.
Tensor apply_Trho(const Tensor& f, double t, Interp interp = Interp::Bilinear);
Tensor apply_Trho_steps(const Tensor& f, int s, Interp interp = Interp::Bilinear);

/// Normalised L2 norm sqrt(mean f^2) over every axis except the batch axis,
/// then root-mean over the batch; a discrete stand-in for averaged integrals.
double feature_norm(const Tensor& f);
/// Same norm on the interior of the spatial axes, dropping `margin` pixels on
/// every side. Throws Verification when the crop is empty.
double feature_norm_cropped(const Tensor& f, int margin);

}  // namespace rotdcf
