// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small independent helpers shared by the tests. Deliberately written
// without the library's own transforms so they can serve as oracles.

#include <cmath>
#include <random>
#include <vector>

#include "rotdcf/tensor.hpp"

namespace test {

// out(i, j) = f(c + Theta_t((j, i) - c)) with bilinear interpolation, zero
// outside. x runs along columns, y along rows.
inline std::vector<double> bilinear_rotate(const std::vector<double>& f, int H, int W, double t) {
  std::vector<double> out(f.size(), 0.0);
  const double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  const double c = std::cos(t), s = std::sin(t);
  auto at = [&](int i, int j) { return (i < 0 || j < 0 || i >= H || j >= W) ? 0.0 : f[i * W + j]; };
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double x = j - cx, y = i - cy;
      const double sx = cx + c * x - s * y, sy = cy + s * x + c * y;
      const int j0 = static_cast<int>(std::floor(sx)), i0 = static_cast<int>(std::floor(sy));
      const double fx = sx - j0, fy = sy - i0;
      out[i * W + j] = (1 - fy) * ((1 - fx) * at(i0, j0) + fx * at(i0, j0 + 1)) +
                       fy * ((1 - fx) * at(i0 + 1, j0) + fx * at(i0 + 1, j0 + 1));
    }
  return out;
}

inline rotdcf::Tensor random_tensor(rotdcf::Shape shape, std::uint64_t seed, double scale = 1.0) {
  rotdcf::Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  for (double& v : t.values()) v = scale * n01(rng);
  return t;
}

inline double rel_diff(const rotdcf::Tensor& a, const rotdcf::Tensor& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / (den > 0 ? den : 1.0));
}

}  // namespace test
