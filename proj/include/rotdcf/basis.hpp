// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rotdcf/tensor.hpp"

namespace rotdcf {

/// L x L sample grid identified with [-1, 1]^2. Pixel (i, j) sits at
/// x = -1 + j*h, y = -1 + i*h with h = 2/(L-1); x runs along columns and y
/// along rows. The centre pixel is the origin.
struct DiskGrid {
  int L = 0;
  double h = 0.0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<std::uint8_t> mask;  // x^2 + y^2 <= 1

  static DiskGrid make(int L);
  std::size_t pixels() const { return static_cast<std::size_t>(L) * L; }
};

enum class SpatialParity : std::uint8_t { Radial, Cosine, Sine };
enum class AngularParity : std::uint8_t { Constant, Cosine, Sine };

/// Leading K real Fourier-Bessel functions
///   psi(r, phi) = c * J_m(z_{m,n} r) * {1, cos(m phi), sin(m phi)}
/// on the unit disk, ordered by the Dirichlet eigenvalue mu = z_{m,n}^2.
/// Samples are zero outside the disk. A cosine/sine pair shares one
/// normalization constant, chosen so the pair has unit mean discrete energy
/// h^2 * sum psi^2; radial functions have unit discrete energy exactly.
struct SpatialBasisSet {
  DiskGrid grid;
  int K = 0;
  Tensor samples;  // K x L x L
  std::vector<int> ang_freq;
  std::vector<SpatialParity> parity;
  std::vector<int> pair;      // steering partner, self for radial
  std::vector<double> mu;     // continuum eigenvalue z^2
  std::vector<double> zero;   // z_{m,n}
  std::vector<int> radial_n;  // n (1-based zero index)
  std::vector<double> amplitude;

  /// Continuum value of psi_k at (x, y); 0 outside the unit disk.
  double value(int k, double x, double y) const;
  /// Analytic gradient of psi_k at (x, y) via J'_m.
  std::array<double, 2> gradient(int k, double x, double y) const;

  int L() const { return grid.L; }
  const double* sample(int k) const { return samples.data() + static_cast<std::size_t>(k) * grid.pixels(); }
};

/// Real Fourier rows [1, cos t, sin t, cos 2t, sin 2t, ...] sampled at
/// t_s = 2 pi s / N_theta.
struct AngularBasisSet {
  int K_alpha = 0;
  int N_theta = 0;
  Tensor samples;  // K_alpha x N_theta
  std::vector<int> freq;
  std::vector<AngularParity> parity;

  int max_freq() const;
};

/// Number of FB functions whose radial wavenumber z_{m,n} is at most the
/// grid Nyquist limit pi*(L-1)/2, counting cosine and sine separately.
int resolvable_fb_count(int L);

/// Row index of (frequency, parity) in the fixed angular ordering.
inline int angular_row(int freq, AngularParity p) {
  if (freq == 0) return 0;
  return p == AngularParity::Cosine ? 2 * freq - 1 : 2 * freq;
}

SpatialBasisSet build_fb_basis(int L, int K);
AngularBasisSet build_angular_basis(int K_alpha, int N_theta);

/// K x K block-diagonal matrix S(t) with sum_k (S c)_k psi_k(v) equal to
/// sum_k c_k psi_k(Theta_t v), where Theta_t = [[cos t, -sin t], [sin t, cos t]]
/// acts on (x, y) as defined by DiskGrid.
Tensor steering_matrix(const SpatialBasisSet& basis, double t);

}  // namespace rotdcf
