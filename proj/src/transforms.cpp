// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Number of quarter turns when t is a multiple of pi/2, otherwise -1.
int quarter_turns(double t) {
  const double q = t / (std::numbers::pi / 2);
  const double r = std::round(q);
  if (std::abs(q - r) > 1e-12) return -1;
  return static_cast<int>(((static_cast<long>(r) % 4) + 4) % 4);
}

void check_planes(const Tensor& x) {
  if (x.rank() < 2) throw Error(ErrorKind::Shape, "expected at least 2 axes, got " + shape_to_string(x.shape()));
}

}  // namespace

double bilinear(const double* plane, int H, int W, double row, double col) {
  const double r0 = std::floor(row), c0 = std::floor(col);
  const double fr = row - r0, fc = col - c0;
  const int i0 = static_cast<int>(r0), j0 = static_cast<int>(c0);
  auto at = [&](int i, int j) { return (i < 0 || j < 0 || i >= H || j >= W) ? 0.0 : plane[i * W + j]; };
  return (1 - fr) * ((1 - fc) * at(i0, j0) + fc * at(i0, j0 + 1)) + fr * ((1 - fc) * at(i0 + 1, j0) + fc * at(i0 + 1, j0 + 1));
}

double bicubic(const double* plane, int H, int W, double row, double col) {
  const double r0 = std::floor(row), c0 = std::floor(col);
  const int i0 = static_cast<int>(r0), j0 = static_cast<int>(c0);
  auto weights = [](double f, double w[4]) {
    // Keys kernel with a = -1/2 at distances 1 + f, f, 1 - f, 2 - f.
    auto k = [](double d) {
      d = std::abs(d);
      if (d < 1) return (1.5 * d - 2.5) * d * d + 1;
      if (d < 2) return ((-0.5 * d + 2.5) * d - 4) * d + 2;
      return 0.0;
    };
    w[0] = k(1 + f), w[1] = k(f), w[2] = k(1 - f), w[3] = k(2 - f);
  };
  double wr[4], wc[4];
  weights(row - r0, wr);
  weights(col - c0, wc);
  double v = 0.0;
  for (int a = 0; a < 4; ++a) {
    const int i = i0 - 1 + a;
    if (i < 0 || i >= H || wr[a] == 0.0) continue;
    for (int b = 0; b < 4; ++b) {
      const int j = j0 - 1 + b;
      if (j >= 0 && j < W) v += wr[a] * wc[b] * plane[i * W + j];
    }
  }
  return v;
}

Tensor rotate_image(const Tensor& x, const RigidRotation& rot) {
  check_planes(x);
  const int H = static_cast<int>(x.dim(x.rank() - 2)), W = static_cast<int>(x.dim(x.rank() - 1));
  const std::size_t HW = static_cast<std::size_t>(H) * W, planes = HW ? x.size() / HW : 0;
  const double cx = rot.cx.value_or((W - 1) / 2.0), cy = rot.cy.value_or((H - 1) / 2.0);
  Tensor out(x.shape());
  const int q = quarter_turns(rot.t);
  const bool exact = q >= 0 && H == W && cx == (W - 1) / 2.0 && cy == (H - 1) / 2.0;
  // Source pixel of every output pixel, computed once.
  std::vector<std::size_t> src;
  if (exact) {
    src.resize(HW);
    const int n = H - 1;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        int si = i, sj = j;
        switch (q) {
          case 1: si = j, sj = n - i; break;
          case 2: si = n - i, sj = n - j; break;
          case 3: si = n - j, sj = i; break;
          default: break;
        }
        src[i * W + j] = static_cast<std::size_t>(si) * W + sj;
      }
  }
  const double c = std::cos(rot.t), s = std::sin(rot.t);
#pragma omp parallel for if (x.size() > (1u << 16))
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(planes); ++p) {
    const double* in = x.data() + p * HW;
    double* o = out.data() + p * HW;
    if (exact) {
      for (std::size_t u = 0; u < HW; ++u) o[u] = in[src[u]];
      continue;
    }
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const double dx = j - cx, dy = i - cy;
        const double r = cy + s * dx + c * dy, q = cx + c * dx - s * dy;
        o[i * W + j] = rot.interp == Interp::Cubic ? bicubic(in, H, W, r, q) : bilinear(in, H, W, r, q);
      }
  }
  return out;
}

void measure_deformation(DeformationField& f) {
  const int H = f.H(), W = f.W();
  f.sup = 0.0;
  f.grad_sup = 0.0;
  auto tr = [&](int i, int j) { return f.tau(0, i, j); };
  auto tc = [&](int i, int j) { return f.tau(1, i, j); };
  auto d_row = [&](auto&& g, int i, int j) {
    if (H == 1) return 0.0;
    if (i == 0) return g(1, j) - g(0, j);
    if (i == H - 1) return g(H - 1, j) - g(H - 2, j);
    return 0.5 * (g(i + 1, j) - g(i - 1, j));
  };
  auto d_col = [&](auto&& g, int i, int j) {
    if (W == 1) return 0.0;
    if (j == 0) return g(i, 1) - g(i, 0);
    if (j == W - 1) return g(i, W - 1) - g(i, W - 2);
    return 0.5 * (g(i, j + 1) - g(i, j - 1));
  };
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      f.sup = std::max(f.sup, std::hypot(tr(i, j), tc(i, j)));
      const double a = d_row(tr, i, j), b = d_col(tr, i, j), c = d_row(tc, i, j), d = d_col(tc, i, j);
      // Largest singular value of [[a, b], [c, d]].
      const double smax = 0.5 * (std::hypot(a + d, c - b) + std::hypot(a - d, b + c));
      f.grad_sup = std::max(f.grad_sup, smax);
    }
}

DeformationField make_translation(double drow, double dcol, int H, int W) {
  DeformationField f;
  f.tau = Tensor({2, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      f.tau(0, i, j) = drow;
      f.tau(1, i, j) = dcol;
    }
  measure_deformation(f);
  return f;
}

DeformationField make_deformation(DeformationKind kind, double magnitude, std::uint64_t seed, int H, int W) {
  if (!(magnitude > 0.0)) throw Error(ErrorKind::Domain, "deformation magnitude must be positive");
  if (H < 2 || W < 2) throw Error(ErrorKind::Domain, "deformation grid must be at least 2x2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  if (kind == DeformationKind::Translation) {
    const double th = kTwoPi * U(rng);
    return make_translation(magnitude * std::sin(th), magnitude * std::cos(th), H, W);
  }
  DeformationField f;
  f.tau = Tensor({2, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  // Wave numbers between half a cycle and one and a half cycles per image.
  constexpr int kTerms = 4;
  const double side = std::max(H, W);
  for (int comp = 0; comp < 2; ++comp)
    for (int q = 0; q < kTerms; ++q) {
      const double freq = (0.5 + U(rng)) * kTwoPi / side, dir = kTwoPi * U(rng), phase = kTwoPi * U(rng);
      const double amp = 2.0 * U(rng) - 1.0;
      const double wr = freq * std::sin(dir), wc = freq * std::cos(dir);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) f.tau(comp, i, j) += amp * std::sin(wr * i + wc * j + phase);
    }
  measure_deformation(f);
  if (f.grad_sup == 0.0) throw Error(ErrorKind::Domain, "degenerate random deformation");
  f.tau.scale(magnitude / f.grad_sup);
  measure_deformation(f);
  return f;
}

Tensor apply_deformation(const Tensor& x, const DeformationField& tau) {
  check_planes(x);
  const int H = static_cast<int>(x.dim(x.rank() - 2)), W = static_cast<int>(x.dim(x.rank() - 1));
  if (H != tau.H() || W != tau.W())
    throw Error(ErrorKind::Shape, "deformation is " + shape_to_string(tau.tau.shape()) + " but image planes are " +
                                      std::to_string(H) + "x" + std::to_string(W));
  const std::size_t HW = static_cast<std::size_t>(H) * W, planes = x.size() / HW;
  Tensor out(x.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = x.data() + p * HW;
    double* o = out.data() + p * HW;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) o[i * W + j] = bilinear(in, H, W, i - tau.tau(0, i, j), j - tau.tau(1, i, j));
  }
  return out;
}

DeformationField pool_deformation(const DeformationField& tau, int factor, int H, int W) {
  if (factor < 1) throw Error(ErrorKind::Domain, "pooling factor must be positive");
  DeformationField f;
  f.tau = Tensor({2, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  const double off = (factor - 1) / 2.0;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j)
        f.tau(c, i, j) =
            bilinear(tau.tau.data() + c * tau.tau.dim(1) * tau.tau.dim(2), tau.H(), tau.W(), factor * i + off,
                     factor * j + off) /
            factor;
  measure_deformation(f);
  return f;
}

Tensor roll_alpha(const Tensor& f, int s) {
  if (f.rank() != 5) throw Error(ErrorKind::Shape, "roll_alpha expects B x C x A x H x W, got " + shape_to_string(f.shape()));
  const std::size_t BC = f.dim(0) * f.dim(1), A = f.dim(2), HW = f.dim(3) * f.dim(4);
  const std::size_t shift = static_cast<std::size_t>(((s % static_cast<long>(A)) + static_cast<long>(A)) % static_cast<long>(A));
  Tensor out(f.shape());
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t a = 0; a < A; ++a)
      std::copy_n(f.data() + (bc * A + a) * HW, HW, out.data() + (bc * A + (a + shift) % A) * HW);
  return out;
}

Tensor apply_Trho_steps(const Tensor& f, int s, Interp interp) {
  if (f.rank() != 5) throw Error(ErrorKind::Shape, "T_rho expects B x C x A x H x W, got " + shape_to_string(f.shape()));
  const int N = static_cast<int>(f.dim(2));
  return rotate_image(roll_alpha(f, s), RigidRotation{kTwoPi * s / N, {}, {}, interp});
}

Tensor apply_Trho(const Tensor& f, double t, Interp interp) {
  if (f.rank() != 5) throw Error(ErrorKind::Shape, "T_rho expects B x C x A x H x W, got " + shape_to_string(f.shape()));
  const double steps = t * static_cast<double>(f.dim(2)) / kTwoPi;
  const double r = std::round(steps);
  if (std::abs(steps - r) > 1e-9)
    throw Error(ErrorKind::Domain, "T_rho angle " + std::to_string(t) + " is not a multiple of 2pi/" +
                                       std::to_string(f.dim(2)));
  return apply_Trho_steps(f, static_cast<int>(r), interp);
}

namespace {

// Squares summed in sorted order, so any permutation of the entries (a
// grid-exact rotation, an alpha roll) gives the same bits.
double sorted_rms(std::vector<double>& sq) {
  if (sq.empty()) return 0.0;
  std::sort(sq.begin(), sq.end());
  double acc = 0.0;
  for (double v : sq) acc += v;
  return std::sqrt(acc / static_cast<double>(sq.size()));
}

}  // namespace

double feature_norm(const Tensor& f) {
  std::vector<double> sq(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) sq[i] = f[i] * f[i];
  return sorted_rms(sq);
}

double feature_norm_cropped(const Tensor& f, int margin) {
  check_planes(f);
  const std::size_t H = f.dim(f.rank() - 2), W = f.dim(f.rank() - 1);
  if (margin < 0 || 2 * static_cast<std::size_t>(margin) >= std::min(H, W))
    throw Error(ErrorKind::Verification, "crop margin " + std::to_string(margin) + " leaves nothing of a " +
                                             std::to_string(H) + "x" + std::to_string(W) + " map");
  const std::size_t planes = f.size() / (H * W);
  std::vector<double> sq;
  sq.reserve(planes * (H - 2 * margin) * (W - 2 * margin));
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = margin; i < H - margin; ++i)
      for (std::size_t j = margin; j < W - margin; ++j) {
        const double v = f[(p * H + i) * W + j];
        sq.push_back(v * v);
      }
  return sorted_rms(sq);
}

}  // namespace rotdcf
