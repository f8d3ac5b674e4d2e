// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rotdcf/error.hpp"

namespace rotdcf {

std::span<const double> FilterCoeffs::block(int in, int out) const {
  const std::size_t n = static_cast<std::size_t>(K()) * K_alpha();
  return {a.data() + (static_cast<std::size_t>(in) * M() + out) * n, n};
}

double FilterCoeffs::j_scale() const { return std::log2(radius_px); }

FilterCoeffs FilterCoeffs::lift(int M_prev, int M, int K, double radius_px) {
  FilterCoeffs c;
  c.kind = LayerKind::Lift;
  c.a = Tensor({static_cast<std::size_t>(M_prev), static_cast<std::size_t>(M), static_cast<std::size_t>(K)});
  c.bias = Tensor({static_cast<std::size_t>(M)});
  c.radius_px = radius_px;
  return c;
}

FilterCoeffs FilterCoeffs::joint(int M_prev, int M, int K, int K_alpha, double radius_px) {
  FilterCoeffs c;
  c.kind = LayerKind::Joint;
  c.a = Tensor({static_cast<std::size_t>(M_prev), static_cast<std::size_t>(M), static_cast<std::size_t>(K),
                static_cast<std::size_t>(K_alpha)});
  c.bias = Tensor({static_cast<std::size_t>(M)});
  c.radius_px = radius_px;
  return c;
}

namespace {

void check_shapes(const FilterCoeffs& c, const SpatialBasisSet& spatial, const AngularBasisSet* angular) {
  if (c.K() != spatial.K)
    throw Error(ErrorKind::Shape, "coefficients carry K=" + std::to_string(c.K()) + " but the spatial basis has K=" +
                                      std::to_string(spatial.K));
  if (c.kind == LayerKind::Joint && angular && c.K_alpha() != angular->K_alpha)
    throw Error(ErrorKind::Shape, "coefficients carry K_alpha=" + std::to_string(c.K_alpha()) +
                                      " but the angular basis has K_alpha=" + std::to_string(angular->K_alpha));
}

}  // namespace

FilterBank synthesize_bank(const FilterCoeffs& coeffs, const SpatialBasisSet& spatial, const AngularBasisSet& angular) {
  check_shapes(coeffs, spatial, &angular);
  const int Mp = coeffs.M_prev(), M = coeffs.M(), K = coeffs.K(), Ka = coeffs.K_alpha();
  const int N = angular.N_theta;
  const std::size_t P = spatial.grid.pixels();
  const std::size_t L = static_cast<std::size_t>(spatial.L());

  FilterBank bank;
  bank.kind = coeffs.kind;
  if (coeffs.kind == LayerKind::Lift)
    bank.W = Tensor({static_cast<std::size_t>(Mp), static_cast<std::size_t>(M), static_cast<std::size_t>(N), L, L});
  else
    bank.W = Tensor({static_cast<std::size_t>(Mp), static_cast<std::size_t>(M), static_cast<std::size_t>(N),
                     static_cast<std::size_t>(N), L, L});

  std::vector<double> steered(static_cast<std::size_t>(K) * Ka);
  for (int s = 0; s < N; ++s) {
    const Tensor S = steering_matrix(spatial, 2.0 * std::numbers::pi * s / N);
    for (int i = 0; i < Mp; ++i) {
      for (int o = 0; o < M; ++o) {
        const auto blk = coeffs.block(i, o);
        // steered(:, m) = S * a(:, m)
        for (int k = 0; k < K; ++k)
          for (int m = 0; m < Ka; ++m) {
            double v = 0.0;
            for (int q = 0; q < K; ++q) v += S(k, q) * blk[static_cast<std::size_t>(q) * Ka + m];
            steered[static_cast<std::size_t>(k) * Ka + m] = v;
          }
        if (coeffs.kind == LayerKind::Lift) {
          double* out = &bank.W(i, o, s, 0, 0);
          for (int k = 0; k < K; ++k) {
            const double c = steered[k];
            const double* psi = spatial.sample(k);
            for (std::size_t p = 0; p < P; ++p) out[p] += c * psi[p];
          }
        } else {
          for (int b = 0; b < N; ++b) {
            double* out = &bank.W(i, o, s, b, 0, 0);
            for (int k = 0; k < K; ++k) {
              double c = 0.0;
              for (int m = 0; m < Ka; ++m) c += steered[static_cast<std::size_t>(k) * Ka + m] * angular.samples(m, b);
              const double* psi = spatial.sample(k);
              for (std::size_t p = 0; p < P; ++p) out[p] += c * psi[p];
            }
          }
        }
      }
    }
  }
  return bank;
}

double fb_norm(std::span<const double> block, std::span<const double> mu) {
  if (mu.empty()) return 0.0;
  if (block.size() % mu.size() != 0)
    throw Error(ErrorKind::Shape, "fb_norm: block of " + std::to_string(block.size()) +
                                      " values does not match " + std::to_string(mu.size()) + " eigenvalues");
  const std::size_t Ka = block.size() / mu.size();
  double s = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k)
    for (std::size_t m = 0; m < Ka; ++m) s += mu[k] * block[k * Ka + m] * block[k * Ka + m];
  return std::sqrt(s);
}

double aggregate_channels(std::span<const double> values, int M_prev, int M) {
  double col = 0.0;
  for (int o = 0; o < M; ++o) {
    double s = 0.0;
    for (int i = 0; i < M_prev; ++i) s += values[static_cast<std::size_t>(i) * M + o];
    col = std::max(col, s);
  }
  double row = 0.0;
  for (int i = 0; i < M_prev; ++i) {
    double s = 0.0;
    for (int o = 0; o < M; ++o) s += values[static_cast<std::size_t>(i) * M + o];
    row = std::max(row, s);
  }
  return std::max(col, static_cast<double>(M_prev) / M * row);
}

double compute_Al(const FilterCoeffs& coeffs, std::span<const double> mu) {
  const int Mp = coeffs.M_prev(), M = coeffs.M();
  std::vector<double> norms(static_cast<std::size_t>(Mp) * M);
  for (int i = 0; i < Mp; ++i)
    for (int o = 0; o < M; ++o) norms[static_cast<std::size_t>(i) * M + o] = fb_norm(coeffs.block(i, o), mu);
  return std::numbers::pi * aggregate_channels(norms, Mp, M);
}

FilterCoeffs rescale_to_unit_Al(const FilterCoeffs& coeffs, std::span<const double> mu) {
  const double A = compute_Al(coeffs, mu);
  if (!(A > 0.0)) throw Error(ErrorKind::Domain, "cannot rescale a layer whose coefficients are all zero");
  FilterCoeffs out = coeffs;
  out.a.scale(1.0 / A);
  return out;
}

FilterIntegrals compute_BCD(const FilterCoeffs& coeffs, const SpatialBasisSet& spatial, const AngularBasisSet& angular,
                            int quad_factor) {
  if (quad_factor < 1) throw Error(ErrorKind::Domain, "compute_BCD: quad_factor must be >= 1");
  check_shapes(coeffs, spatial, &angular);
  const int Mp = coeffs.M_prev(), M = coeffs.M(), K = coeffs.K(), Ka = coeffs.K_alpha();
  const bool joint = coeffs.kind == LayerKind::Joint;
  const int Nb = joint ? angular.N_theta : 1;

  // Midpoint rule on [-1, 1]^2; cells whose centre lies in the disk.
  const int n = quad_factor * spatial.L();
  const double hq = 2.0 / n;
  struct Node {
    double r;
    std::vector<double> val, gx, gy;
  };
  std::vector<Node> nodes;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double x = -1.0 + (j + 0.5) * hq, y = -1.0 + (i + 0.5) * hq;
      const double r = std::hypot(x, y);
      if (r > 1.0) continue;
      Node nd{r, std::vector<double>(K), std::vector<double>(K), std::vector<double>(K)};
      for (int k = 0; k < K; ++k) {
        nd.val[k] = spatial.value(k, x, y);
        const auto g = spatial.gradient(k, x, y);
        nd.gx[k] = g[0];
        nd.gy[k] = g[1];
      }
      nodes.push_back(std::move(nd));
    }
  }
  const double area = hq * hq;

  std::vector<double> Bv(static_cast<std::size_t>(Mp) * M), Cv(Bv.size()), Dv(Bv.size());
  std::vector<double> ck(K);
  for (int i = 0; i < Mp; ++i) {
    for (int o = 0; o < M; ++o) {
      const auto blk = coeffs.block(i, o);
      double B = 0.0, C = 0.0, D = 0.0;
      for (int b = 0; b < Nb; ++b) {
        // Spatial coefficients of W(., beta_b).
        for (int k = 0; k < K; ++k) {
          double c = 0.0;
          for (int m = 0; m < Ka; ++m)
            c += blk[static_cast<std::size_t>(k) * Ka + m] * (joint ? angular.samples(m, b) : 1.0);
          ck[k] = c;
        }
        for (const auto& nd : nodes) {
          double w = 0.0, gx = 0.0, gy = 0.0;
          for (int k = 0; k < K; ++k) {
            w += ck[k] * nd.val[k];
            gx += ck[k] * nd.gx[k];
            gy += ck[k] * nd.gy[k];
          }
          const double g = std::hypot(gx, gy);
          B += std::abs(w);
          C += nd.r * g;
          D += g;
        }
      }
      const double wgt = area / Nb;
      Bv[static_cast<std::size_t>(i) * M + o] = B * wgt;
      Cv[static_cast<std::size_t>(i) * M + o] = C * wgt;
      Dv[static_cast<std::size_t>(i) * M + o] = D * wgt;
    }
  }
  FilterIntegrals out;
  out.B = aggregate_channels(Bv, Mp, M);
  out.C = aggregate_channels(Cv, Mp, M);
  out.D_scaled = aggregate_channels(Dv, Mp, M);
  out.D = out.D_scaled / coeffs.radius_px;
  return out;
}

}  // namespace rotdcf
