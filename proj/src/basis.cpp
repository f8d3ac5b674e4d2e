// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rotdcf/bessel.hpp"
#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

struct Mode {
  int m;
  int n;
  double zero;
};

// All (m, n) with z_{m,n} <= cutoff, sorted by z.
std::vector<Mode> modes_below(double cutoff) {
  std::vector<Mode> modes;
  for (int m = 0; m <= kMaxBesselOrder; ++m) {
    // j_{m,1} > m, so no further order can contribute.
    if (m > cutoff) break;
    int want = std::min(kMaxBesselZeroCount, static_cast<int>(cutoff / std::numbers::pi) + 2);
    const auto z = bessel_zeros(m, want);
    if (z.front() > cutoff) break;
    for (int n = 0; n < want; ++n) {
      if (z[n] > cutoff) break;
      modes.push_back({m, n + 1, z[n]});
    }
  }
  std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) { return a.zero < b.zero; });
  return modes;
}

double nyquist_cutoff(int L) { return std::numbers::pi * (L - 1) / 2.0; }

double trig(SpatialParity p, int m, double phi) {
  switch (p) {
    case SpatialParity::Radial: return 1.0;
    case SpatialParity::Cosine: return std::cos(m * phi);
    case SpatialParity::Sine: return std::sin(m * phi);
  }
  return 0.0;
}

}  // namespace

DiskGrid DiskGrid::make(int L) {
  if (L < 3 || L % 2 == 0)
    throw Error(ErrorKind::Domain, "disk grid needs odd L >= 3, got " + std::to_string(L));
  DiskGrid g;
  g.L = L;
  g.h = 2.0 / (L - 1);
  const int c = (L - 1) / 2;
  g.x.resize(g.pixels());
  g.y.resize(g.pixels());
  g.mask.resize(g.pixels());
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < L; ++j) {
      const std::size_t p = static_cast<std::size_t>(i) * L + j;
      // Integer offsets keep the grid exactly symmetric.
      g.x[p] = (j - c) * g.h;
      g.y[p] = (i - c) * g.h;
      const long r2 = static_cast<long>(i - c) * (i - c) + static_cast<long>(j - c) * (j - c);
      g.mask[p] = r2 <= static_cast<long>(c) * c ? 1 : 0;
    }
  }
  return g;
}

int resolvable_fb_count(int L) {
  int count = 0;
  for (const auto& mode : modes_below(nyquist_cutoff(L))) count += mode.m == 0 ? 1 : 2;
  return count;
}

double SpatialBasisSet::value(int k, double x, double y) const {
  const double r = std::hypot(x, y);
  if (r > 1.0) return 0.0;
  const double phi = std::atan2(y, x);
  return amplitude[k] * bessel_j(ang_freq[k], zero[k] * r) * trig(parity[k], ang_freq[k], phi);
}

std::array<double, 2> SpatialBasisSet::gradient(int k, double x, double y) const {
  const double r = std::hypot(x, y);
  if (r > 1.0) return {0.0, 0.0};
  const int m = ang_freq[k];
  const double z = zero[k];
  const double a = amplitude[k];
  if (r < 1e-12) {
    // psi ~ a * (z/2) * r * {cos, sin}(phi) for m = 1; flat otherwise.
    if (m != 1) return {0.0, 0.0};
    return parity[k] == SpatialParity::Cosine ? std::array{a * z / 2.0, 0.0}
                                              : std::array{0.0, a * z / 2.0};
  }
  const double phi = std::atan2(y, x);
  const double t = trig(parity[k], m, phi);
  double dt = 0.0;  // d/dphi of the angular factor
  if (parity[k] == SpatialParity::Cosine) dt = -m * std::sin(m * phi);
  if (parity[k] == SpatialParity::Sine) dt = m * std::cos(m * phi);
  const double g_r = a * z * bessel_j_prime(m, z * r) * t;
  const double g_phi = m == 0 ? 0.0 : a * bessel_j(m, z * r) / r * dt;
  const double c = std::cos(phi), s = std::sin(phi);
  return {g_r * c - g_phi * s, g_r * s + g_phi * c};
}

int AngularBasisSet::max_freq() const {
  int f = 0;
  for (int v : freq) f = std::max(f, v);
  return f;
}

SpatialBasisSet build_fb_basis(int L, int K) {
  SpatialBasisSet b;
  b.grid = DiskGrid::make(L);
  if (K < 1) throw Error(ErrorKind::Basis, "FB basis needs K >= 1, got " + std::to_string(K));

  const auto modes = modes_below(nyquist_cutoff(L));
  std::vector<int> boundaries{0};  // valid K values
  for (const auto& mode : modes) boundaries.push_back(boundaries.back() + (mode.m == 0 ? 1 : 2));
  const int resolvable = boundaries.back();
  if (K > resolvable)
    throw Error(ErrorKind::Basis, "K=" + std::to_string(K) + " exceeds the " + std::to_string(resolvable) +
                                      " Fourier-Bessel functions resolvable on a " + std::to_string(L) + "x" +
                                      std::to_string(L) + " grid");
  if (std::find(boundaries.begin(), boundaries.end(), K) == boundaries.end()) {
    std::string msg = "K=" + std::to_string(K) + " splits a cosine/sine pair; use K=" + std::to_string(K - 1);
    if (K + 1 <= resolvable) msg += " or K=" + std::to_string(K + 1);
    throw Error(ErrorKind::Basis, msg);
  }

  b.K = K;
  const std::size_t P = b.grid.pixels();
  b.samples = Tensor({static_cast<std::size_t>(K), static_cast<std::size_t>(L), static_cast<std::size_t>(L)});
  for (const auto& mode : modes) {
    const int k0 = static_cast<int>(b.ang_freq.size());
    if (k0 >= K) break;
    const int members = mode.m == 0 ? 1 : 2;
    double energy = 0.0;
    for (int t = 0; t < members; ++t) {
      const SpatialParity p = mode.m == 0 ? SpatialParity::Radial : (t == 0 ? SpatialParity::Cosine : SpatialParity::Sine);
      b.ang_freq.push_back(mode.m);
      b.parity.push_back(p);
      b.pair.push_back(mode.m == 0 ? k0 : k0 + 1 - t);
      b.mu.push_back(mode.zero * mode.zero);
      b.zero.push_back(mode.zero);
      b.radial_n.push_back(mode.n);
      double* out = b.samples.data() + static_cast<std::size_t>(k0 + t) * P;
      for (std::size_t q = 0; q < P; ++q) {
        if (!b.grid.mask[q]) continue;
        const double r = std::min(1.0, std::hypot(b.grid.x[q], b.grid.y[q]));
        const double phi = std::atan2(b.grid.y[q], b.grid.x[q]);
        out[q] = bessel_j(mode.m, mode.zero * r) * trig(p, mode.m, phi);
        energy += out[q] * out[q];
      }
    }
    energy *= b.grid.h * b.grid.h / members;
    const double amp = 1.0 / std::sqrt(energy);
    for (int t = 0; t < members; ++t) {
      b.amplitude.push_back(amp);
      double* out = b.samples.data() + static_cast<std::size_t>(k0 + t) * P;
      for (std::size_t q = 0; q < P; ++q) out[q] *= amp;
    }
  }
  return b;
}

AngularBasisSet build_angular_basis(int K_alpha, int N_theta) {
  if (N_theta < 2) throw Error(ErrorKind::Domain, "angular basis needs N_theta >= 2");
  if (K_alpha < 1) throw Error(ErrorKind::Domain, "angular basis needs K_alpha >= 1");
  if (K_alpha > N_theta)
    throw Error(ErrorKind::Domain, "K_alpha=" + std::to_string(K_alpha) + " aliases on N_theta=" +
                                       std::to_string(N_theta) + " samples");
  AngularBasisSet a;
  a.K_alpha = K_alpha;
  a.N_theta = N_theta;
  a.samples = Tensor({static_cast<std::size_t>(K_alpha), static_cast<std::size_t>(N_theta)});
  for (int r = 0; r < K_alpha; ++r) {
    const int f = (r + 1) / 2;
    const AngularParity p = r == 0 ? AngularParity::Constant : (r % 2 ? AngularParity::Cosine : AngularParity::Sine);
    a.freq.push_back(f);
    a.parity.push_back(p);
    for (int s = 0; s < N_theta; ++s) {
      // Reduce f*s mod N first to keep the angle small.
      const double t = 2.0 * std::numbers::pi * ((f * s) % N_theta) / N_theta;
      a.samples(r, s) = p == AngularParity::Constant ? 1.0 : (p == AngularParity::Cosine ? std::cos(t) : std::sin(t));
    }
  }
  return a;
}

Tensor steering_matrix(const SpatialBasisSet& basis, double t) {
  const std::size_t K = static_cast<std::size_t>(basis.K);
  Tensor S({K, K});
  for (int k = 0; k < basis.K; ++k) {
    switch (basis.parity[k]) {
      case SpatialParity::Radial:
        S(k, k) = 1.0;
        break;
      case SpatialParity::Cosine: {
        const int s = basis.pair[k];
        const double th = basis.ang_freq[k] * t;
        S(k, k) = std::cos(th);
        S(k, s) = std::sin(th);
        S(s, k) = -std::sin(th);
        S(s, s) = std::cos(th);
        break;
      }
      case SpatialParity::Sine:
        break;
    }
  }
  return S;
}

}  // namespace rotdcf
