// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "rotdcf/basis.hpp"
#include "rotdcf/tensor.hpp"

namespace rotdcf {

enum class LayerKind { Lift, Joint };

/// Expansion coefficients of one decomposed layer.
///   lift : a is M_prev x M x K
///   joint: a is M_prev x M x K x K_alpha
/// radius_px is the filter radius 2^j in input pixels: (L-1)/2 times the
/// cumulative pooling factor in front of the layer.
struct FilterCoeffs {
  LayerKind kind = LayerKind::Lift;
  Tensor a;
  Tensor bias;  // M
  double radius_px = 1.0;

  int M_prev() const { return static_cast<int>(a.dim(0)); }
  int M() const { return static_cast<int>(a.dim(1)); }
  int K() const { return static_cast<int>(a.dim(2)); }
  int K_alpha() const { return kind == LayerKind::Joint ? static_cast<int>(a.dim(3)) : 1; }
  /// Coefficients of one (lambda', lambda) block: K or K x K_alpha values.
  std::span<const double> block(int in, int out) const;
  double j_scale() const;

  static FilterCoeffs lift(int M_prev, int M, int K, double radius_px = 1.0);
  static FilterCoeffs joint(int M_prev, int M, int K, int K_alpha, double radius_px = 1.0);
};

/// Realised filters for every output rotation index s (angle 2 pi s / N):
///   lift : M_prev x M x N x L x L,     W(Theta_s v)
///   joint: M_prev x M x N x N x L x L, W(Theta_s v, beta_b), beta_b = 2 pi b / N
struct FilterBank {
  LayerKind kind = LayerKind::Lift;
  Tensor W;
};

FilterBank synthesize_bank(const FilterCoeffs& coeffs, const SpatialBasisSet& spatial, const AngularBasisSet& angular);

/// sqrt(sum_k mu_k a(k)^2), or sqrt(sum_{k,m} mu_k a(k,m)^2) when the block
/// holds mu.size() * K_alpha values (k-major).
double fb_norm(std::span<const double> block, std::span<const double> mu);

/// A_l = pi * max( sup_out sum_in |a_{in,out}|_FB, sup_in (M_prev/M) sum_out |a_{in,out}|_FB ).
double compute_Al(const FilterCoeffs& coeffs, std::span<const double> mu);

/// Coefficients divided by A_l; biases unchanged. Throws for a zero layer.
FilterCoeffs rescale_to_unit_Al(const FilterCoeffs& coeffs, std::span<const double> mu);

struct FilterIntegrals {
  double B = 0.0;
  double C = 0.0;
  double D = 0.0;         // D_l, gradient integral of the filter rescaled to radius 2^j
  double D_scaled = 0.0;  // 2^j * D_l, i.e. the same integral on the unit disk
};

/// Channel-aggregated integrals of |W|, |v||grad W| and |grad W| over the unit
/// disk (and the normalized mean over beta for joint layers), by midpoint
/// quadrature on a grid quad_factor times finer than L, using analytic basis
/// gradients.
FilterIntegrals compute_BCD(const FilterCoeffs& coeffs, const SpatialBasisSet& spatial, const AngularBasisSet& angular,
                            int quad_factor);

/// sup/weighted-sup aggregation shared by A_l, B_l, C_l, D_l. `values` is
/// M_prev x M row-major.
double aggregate_channels(std::span<const double> values, int M_prev, int M);

}  // namespace rotdcf
